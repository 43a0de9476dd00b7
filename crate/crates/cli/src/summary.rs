use std::fmt::Write;

use dmin_core::document::ResultDocument;
use dmin_core::generalization::FeatureStatus;
use dmin_core::minimizer::Outcome;

/// One line per feature in the style of a minimization table: "Not needed",
/// "Not generalized", the category groups, or the number of ranges.
pub fn feature_lines(doc: &ResultDocument) -> Vec<(String, String)> {
    doc.generalization
        .features
        .iter()
        .map(|(name, f)| {
            let text = match f.status {
                FeatureStatus::Untouched => "Not generalized".to_string(),
                FeatureStatus::Suppressed => "Not needed".to_string(),
                FeatureStatus::Generalized => match (&f.ranges, &f.groups) {
                    (Some(r), _) => format!(
                        "{} ranges representing values {}-{}",
                        r.len(),
                        r.first().map_or(0.0, |i| i.start),
                        r.last().map_or(0.0, |i| i.end)
                    ),
                    (_, Some(groups)) => groups
                        .iter()
                        .map(|g| format!("[{}]", g.join(", ")))
                        .collect::<Vec<_>>()
                        .join(" "),
                    _ => "Generalized".to_string(),
                },
            };
            (name.clone(), text)
        })
        .collect()
}

pub fn render(doc: &ResultDocument, target: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Target relative accuracy: {target}");
    if let Some(acc) = &doc.accuracy {
        let _ = write!(
            out,
            "Relative accuracy: {:.4} optimization",
            acc.optimization.relative_accuracy
        );
        if let Some(v) = &acc.validation {
            let _ = write!(out, ", {:.4} validation", v.relative_accuracy);
        }
        out.push('\n');
    }
    if let Some(ncp) = &doc.ncp {
        let _ = write!(out, "GCP: {:.4} optimization", ncp.gcp);
        if let Some(v) = ncp.validation_gcp {
            let _ = write!(out, ", {v:.4} validation");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "Clusters: {}", doc.clusters.len());
    if let Some(outcome) = doc.outcome {
        let text = match outcome {
            Outcome::TargetMet => "stopped at the coarsest state meeting the target",
            Outcome::AtRoot => "pruned to a single cluster",
            Outcome::AllUntouched => "every feature collected exactly",
        };
        let _ = writeln!(out, "Outcome: {text}");
    }
    out.push('\n');
    let lines = feature_lines(doc);
    let width = lines.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Feature".len());
    let _ = writeln!(out, "{:width$}  Generalization", "Feature");
    for (name, text) in lines {
        let _ = writeln!(out, "{name:width$}  {text}");
    }
    out
}
