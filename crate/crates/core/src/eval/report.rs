use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use super::protocols::Protocol;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: usize,
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
    /// False when the class was neither present nor predicted.
    pub included: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub macro_f1: f64,
    pub scored: u64,
    pub classes: Vec<ClassRow>,
    pub confusion: ConfusionMatrix,
}

fn class_name(names: &[String], c: usize) -> String {
    names.get(c).cloned().unwrap_or_else(|| format!("class{c}"))
}

impl ProtocolReport {
    pub fn new(protocol: Protocol, confusion: ConfusionMatrix, class_names: &[String]) -> Result<Self> {
        let classes = (0..confusion.classes())
            .map(|c| {
                let s = confusion.class_scores(c);
                ClassRow {
                    class: c,
                    name: class_name(class_names, c),
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                    support: s.support,
                    predicted: s.predicted,
                    included: s.included,
                }
            })
            .collect();
        Ok(ProtocolReport {
            protocol,
            macro_f1: confusion.macro_f1()?,
            scored: confusion.total(),
            classes,
            confusion,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub held_out: String,
    pub seed: u64,
    pub f1_sample: f64,
    pub f1_window: f64,
}

/// Scores for one dataset: a single run with per-protocol detail, or a
/// leave-one-subject-out summary with one row per fold and the unweighted mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub f1_sample: Option<f64>,
    pub f1_window: Option<f64>,
    pub protocols: Vec<ProtocolReport>,
    pub folds: Vec<FoldScores>,
    pub notes: Vec<String>,
}

pub const SAMPLE_WISE_NOTE: &str = "sample-wise: the first T-1 samples of each recording receive no prediction and are not scored";

impl EvalReport {
    pub fn single(dataset: &str, protocols: Vec<ProtocolReport>) -> Self {
        let pick = |p: Protocol| protocols.iter().find(|r| r.protocol == p).map(|r| r.macro_f1);
        let mut notes = Vec::new();
        if pick(Protocol::SampleWise).is_some() {
            notes.push(SAMPLE_WISE_NOTE.to_string());
        }
        EvalReport {
            dataset: dataset.to_string(),
            f1_sample: pick(Protocol::SampleWise),
            f1_window: pick(Protocol::WindowWise),
            protocols,
            folds: Vec::new(),
            notes,
        }
    }

    pub fn loso(dataset: &str, folds: Vec<FoldScores>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Protocol("no folds to summarise".into()));
        }
        let n = folds.len() as f64;
        Ok(EvalReport {
            dataset: dataset.to_string(),
            f1_sample: Some(folds.iter().map(|f| f.f1_sample).sum::<f64>() / n),
            f1_window: Some(folds.iter().map(|f| f.f1_window).sum::<f64>() / n),
            protocols: Vec::new(),
            folds,
            notes: vec![SAMPLE_WISE_NOTE.to_string(), "mean is unweighted across folds".to_string()],
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Aligned plain-text rendering: a score table with one row per run or
    /// fold, then per-class detail for each protocol.
    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut rows: Vec<(String, String, String)> = self
            .folds
            .iter()
            .map(|fold| (fold.held_out.clone(), format!("{:.4}", fold.f1_sample), format!("{:.4}", fold.f1_window)))
            .collect();
        let summary = if self.folds.is_empty() { self.dataset.clone() } else { format!("{} mean", self.dataset) };
        rows.push((summary, f(self.f1_sample), f(self.f1_window)));
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(3);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>11}  {:>11}", "run", "sample-wise", "window-wise");
        for (name, s, w) in &rows {
            let _ = writeln!(out, "{name:<width$}  {s:>11}  {w:>11}");
        }
        for p in &self.protocols {
            let _ = writeln!(out, "\n{} macro F1 {:.4} over {} scored items", p.protocol.label(), p.macro_f1, p.scored);
            let width = p.classes.iter().map(|c| c.name.len()).max().unwrap_or(0).max(5);
            let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}", "class", "precision", "recall", "f1", "support");
            for c in &p.classes {
                if c.included {
                    let _ = writeln!(
                        out,
                        "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9}",
                        c.name, c.precision, c.recall, c.f1, c.support
                    );
                } else {
                    let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}", c.name, "-", "-", "-", 0);
                }
            }
        }
        if !self.notes.is_empty() {
            out.push('\n');
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}
