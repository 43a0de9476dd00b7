"""Build data/adult.csv.gz from the UCI Adult files (adult.data + adult.test).

Usage: python3 scripts/prepare_adult.py ADULT_DATA ADULT_TEST [OUT]

Both UCI files are concatenated (48,842 rows), the stray header line of
adult.test is skipped and the trailing '.' on its income labels removed.
'?' cells are kept verbatim and declared as missing markers in the schema.
"""
import csv
import gzip
import sys

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]


def rows(path):
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(COLUMNS):
                continue
            cells[-1] = cells[-1].rstrip(".")
            yield cells


def main():
    data, test = sys.argv[1], sys.argv[2]
    out = sys.argv[3] if len(sys.argv) > 3 else "data/adult.csv.gz"
    n = 0
    with gzip.GzipFile(out, "wb", mtime=0) as raw:
        import io
        fh = io.TextIOWrapper(raw, newline="")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for src in (data, test):
            for cells in rows(src):
                w.writerow(cells)
                n += 1
        fh.flush()
    print(f"wrote {n} rows to {out}")


if __name__ == "__main__":
    main()
