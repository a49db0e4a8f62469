use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

/// Per-class scores. `included` is false for classes that were neither
/// present nor predicted; those stay out of the macro mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
    pub included: bool,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = Self::new(classes);
        for (t, p) in pairs {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let c = self.classes();
        if truth >= c || predicted >= c {
            return Err(Error::Data(format!("class pair ({truth}, {predicted}) outside 0..{c}")));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::shape("confusion_merge", &[self.classes()], &[other.classes()]));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn class_scores(&self, class: usize) -> ClassScores {
        let tp = self.counts[class][class];
        let support: u64 = self.counts[class].iter().sum();
        let predicted: u64 = self.counts.iter().map(|row| row[class]).sum();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            precision,
            recall,
            f1,
            support,
            predicted,
            included: support > 0 || predicted > 0,
        }
    }

    /// Unweighted mean of per-class F1 over included classes.
    pub fn macro_f1(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::Data("macro F1 of an empty confusion matrix".into()));
        }
        let (sum, n) = (0..self.classes())
            .map(|c| self.class_scores(c))
            .filter(|s| s.included)
            .fold((0.0, 0usize), |(sum, n), s| (sum + s.f1, n + 1));
        Ok(sum / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_diagonal() {
        let cm = ConfusionMatrix::from_pairs(3, [(0, 0), (1, 1), (2, 2), (2, 2)]).unwrap();
        assert_eq!(cm.macro_f1().unwrap(), 1.0);
    }

    #[test]
    fn hand_counted_two_class() {
        let cm = ConfusionMatrix::from_pairs(2, [(0, 0), (0, 1), (1, 1), (1, 1)]).unwrap();
        let c0 = cm.class_scores(0);
        assert_eq!((c0.precision, c0.recall), (1.0, 0.5));
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-15);
        let c1 = cm.class_scores(1);
        assert!((c1.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((c1.f1 - 0.8).abs() < 1e-15);
        assert!((cm.macro_f1().unwrap() - 11.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_excluded() {
        let cm = ConfusionMatrix::from_pairs(3, [(0, 0), (2, 2)]).unwrap();
        assert!(!cm.class_scores(1).included);
        assert_eq!(cm.macro_f1().unwrap(), 1.0);
    }

    #[test]
    fn missed_class_counts_as_zero() {
        let cm = ConfusionMatrix::from_pairs(2, [(0, 0), (1, 0)]).unwrap();
        assert_eq!(cm.class_scores(1).f1, 0.0);
        assert!((cm.macro_f1().unwrap() - (2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_is_error() {
        assert!(ConfusionMatrix::new(2).macro_f1().is_err());
        assert!(ConfusionMatrix::new(2).record(2, 0).is_err());
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = ConfusionMatrix::from_pairs(2, [(0, 0)]).unwrap();
        a.merge(&ConfusionMatrix::from_pairs(2, [(0, 0), (1, 0)]).unwrap()).unwrap();
        assert_eq!(a.get(0, 0), 2);
        assert_eq!(a.total(), 3);
        assert!(a.merge(&ConfusionMatrix::new(3)).is_err());
    }
}
