use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::{parse_label, record_to_json, PredictionOracle};
use crate::data::{Record, Schema};
use crate::error::OracleError;

/// Talks to a long-lived child process: one JSON object per record on its
/// stdin, one label per line back on its stdout. Calls are serialized over
/// the single pipe pair.
pub struct SubprocessOracle {
    schema: Schema,
    timeout: Duration,
    conn: Mutex<Option<Connection>>,
}

struct Connection {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
}

impl SubprocessOracle {
    pub fn spawn(program: &str, args: &[String], schema: Schema) -> Result<Self, OracleError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| OracleError::Unavailable(format!("cannot start `{program}`: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        // A dedicated reader keeps the child from blocking on a full stdout
        // pipe while we are still writing a large batch.
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(SubprocessOracle {
            schema,
            timeout: Duration::from_secs(60),
            conn: Mutex::new(Some(Connection {
                child,
                stdin,
                lines: rx,
            })),
        })
    }

    /// Parses a command line on whitespace: program followed by arguments.
    pub fn spawn_command(command: &str, schema: Schema) -> Result<Self, OracleError> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| OracleError::Unavailable("empty subprocess command".into()))?;
        let args: Vec<String> = parts.collect();
        Self::spawn(&program, &args, schema)
    }

    /// How long to wait for each label line before giving up on the batch.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn exchange(&self, conn: &mut Connection, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        let io_err = |e: std::io::Error| OracleError::Unavailable(format!("subprocess pipe: {e}"));
        for r in records {
            serde_json::to_writer(&mut conn.stdin, &record_to_json(&self.schema.features, r))
                .map_err(|e| OracleError::Unavailable(format!("subprocess pipe: {e}")))?;
            conn.stdin.write_all(b"\n").map_err(io_err)?;
        }
        conn.stdin.flush().map_err(io_err)?;
        let mut labels = Vec::with_capacity(records.len());
        while labels.len() < records.len() {
            match conn.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) => labels.push(parse_label(&self.schema.label.classes, &line)?),
                Ok(Err(e)) => return Err(io_err(e)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(OracleError::Protocol(format!(
                        "subprocess closed its output after {} of {} labels",
                        labels.len(),
                        records.len()
                    )))
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(OracleError::Protocol(format!(
                        "subprocess sent {} of {} labels before timing out",
                        labels.len(),
                        records.len()
                    )))
                }
            }
        }
        Ok(labels)
    }
}

impl PredictionOracle for SubprocessOracle {
    fn class_labels(&self) -> &[String] {
        &self.schema.label.classes
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        let mut guard = self.conn.lock().unwrap();
        let conn = guard
            .as_mut()
            .ok_or_else(|| OracleError::Unavailable("subprocess connection is broken".into()))?;
        let result = self.exchange(conn, records);
        if result.is_err() {
            // The stream position is unknown after a failed exchange.
            if let Some(mut dead) = guard.take() {
                let _ = dead.child.kill();
                let _ = dead.child.wait();
            }
        }
        result
    }
}

impl Drop for SubprocessOracle {
    fn drop(&mut self) {
        if let Some(mut conn) = self.conn.get_mut().ok().and_then(Option::take) {
            let _ = conn.child.kill();
            let _ = conn.child.wait();
        }
    }
}
