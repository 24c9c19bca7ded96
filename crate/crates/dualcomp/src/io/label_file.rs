//! Label file: one UTF-8 JSON object per line with keys `text`,
//! `lambda_llm` (nullable), `lambda_rule`, `rho_gt`. The fused λ_gt is
//! recomputed on load from the configured α.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::router::LabelRecord;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelFileRecord {
    pub text: String,
    pub lambda_llm: Option<f64>,
    pub lambda_rule: f64,
    pub rho_gt: f64,
}

/// Parse JSONL label text; blank lines are ignored, anything else malformed
/// is an error carrying its 1-based line number.
pub fn parse_labels(
    text: &str,
    alpha: f64,
    rho_min: f64,
) -> Result<Vec<(String, LabelRecord)>> {
    let mut out = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: LabelFileRecord = serde_json::from_str(line).map_err(|e| Error::LabelFile {
            line: index + 1,
            why: e.to_string(),
        })?;
        let record = LabelRecord::new(raw.lambda_llm, raw.lambda_rule, alpha, raw.rho_gt, rho_min)
            .map_err(|e| Error::LabelFile {
                line: index + 1,
                why: e.to_string(),
            })?;
        out.push((raw.text, record));
    }
    Ok(out)
}

pub fn read_labels(path: &Path, alpha: f64, rho_min: f64) -> Result<Vec<(String, LabelRecord)>> {
    parse_labels(&std::fs::read_to_string(path)?, alpha, rho_min)
}

pub fn write_labels(records: &[LabelFileRecord], path: &Path) -> Result<()> {
    let mut text = String::new();
    for record in records {
        text.push_str(&serde_json::to_string(record)?);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_and_fuses_labels() {
        let text = concat!(
            r#"{"text":"plan a route","lambda_llm":0.8,"lambda_rule":0.4,"rho_gt":0.2}"#,
            "\n\n",
            r#"{"text":"how many cars","lambda_llm":null,"lambda_rule":0.0,"rho_gt":0.05}"#,
            "\n",
        );
        let records = parse_labels(text, 0.5, 0.01).unwrap();
        assert_eq!(records.len(), 2);
        assert!((records[0].1.lambda_gt - 0.6).abs() < 1e-12);
        assert_eq!(records[1].1.lambda_gt, 0.0);
    }

    #[test]
    fn out_of_range_label_names_line() {
        let text = concat!(
            r#"{"text":"a","lambda_llm":null,"lambda_rule":0.5,"rho_gt":0.1}"#,
            "\n",
            r#"{"text":"b","lambda_llm":1.7,"lambda_rule":0.5,"rho_gt":0.1}"#,
            "\n",
        );
        match parse_labels(text, 0.5, 0.01) {
            Err(Error::LabelFile { line: 2, .. }) => {}
            other => panic!("expected line-2 error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_rejected() {
        assert!(matches!(
            parse_labels("{not json}", 0.5, 0.01),
            Err(Error::LabelFile { line: 1, .. })
        ));
    }
}
