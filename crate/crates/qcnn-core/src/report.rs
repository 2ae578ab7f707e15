//! Report rows and their two on-disk forms: a machine-readable CSV
//! (`label,test_acc,val_acc,gap`) and an aligned human-readable table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::Metrics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub test_accuracy: f64,
    pub validation_accuracy: f64,
    pub gap: f64,
}

impl ReportRow {
    pub fn new(label: impl Into<String>, m: &Metrics) -> Self {
        Self {
            label: label.into(),
            test_accuracy: m.test_accuracy,
            validation_accuracy: m.validation_accuracy,
            gap: m.gap,
        }
    }
}

/// CSV with the exact columns `label,test_acc,val_acc,gap`, float64 values
/// written with full round-trip precision.
pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("label,test_acc,val_acc,gap\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.label, r.test_accuracy, r.validation_accuracy, r.gap
        ));
    }
    out
}

/// Parse a report CSV produced by [`to_csv`].
pub fn from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty report".into()))?;
    if header != "label,test_acc,val_acc,gap" {
        return Err(Error::Parse(format!("unexpected report header '{header}'")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 4 fields, got {}",
                    i + 2,
                    fields.len()
                )));
            }
            let num = |s: &str, name: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad {name} '{s}'", i + 2)))
            };
            Ok(ReportRow {
                label: fields[0].to_owned(),
                test_accuracy: num(fields[1], "test_acc")?,
                validation_accuracy: num(fields[2], "val_acc")?,
                gap: num(fields[3], "gap")?,
            })
        })
        .collect()
}

/// Aligned text table mirroring the test/validation/gap reporting layout.
pub fn to_table(title: &str, rows: &[ReportRow]) -> String {
    let label_width = rows
        .iter()
        .map(|r| r.label.len())
        .chain(std::iter::once("label".len()))
        .max()
        .unwrap_or(5);
    let mut out = format!("{title}\n");
    out.push_str(&format!(
        "{:label_width$}  {:>10}  {:>10}  {:>10}\n",
        "label", "Test Acc.", "Val Acc.", "Gap"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:label_width$}  {:>10.4}  {:>10.4}  {:>10.4}\n",
            r.label, r.test_accuracy, r.validation_accuracy, r.gap
        ));
    }
    out
}
