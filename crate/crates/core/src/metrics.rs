//! Classification scores over the nine gaze classes: accuracy, per-class
//! precision/recall/F1, macro and support-weighted averages, the confusion
//! matrix and a plain-text report.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{GazeClass, NUM_CLASSES};

/// Entry `(t, p)` counts instances of true class `t` predicted as `p` (zero-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[GazeClass], y_pred: &[GazeClass]) -> Result<Self> {
        check_lengths(y_true, y_pred)?;
        let mut m = Self::default();
        for (t, p) in y_true.iter().zip(y_pred) {
            m.record(*t, *p);
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: GazeClass, predicted: GazeClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: GazeClass, predicted: GazeClass) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    /// Support of a class: how often it occurs in the ground truth.
    pub fn row_sum(&self, c: GazeClass) -> u64 {
        self.counts[c.index()].iter().sum()
    }

    pub fn column_sum(&self, c: GazeClass) -> u64 {
        self.counts.iter().map(|row| row[c.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }
}

fn check_lengths(y_true: &[GazeClass], y_pred: &[GazeClass]) -> Result<()> {
    if y_true.is_empty() {
        return Err(Error::Parameter("no labels to score".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Parameter(format!("{} true labels but {} predictions", y_true.len(), y_pred.len())));
    }
    Ok(())
}

pub fn accuracy(y_true: &[GazeClass], y_pred: &[GazeClass]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let hits = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: GazeClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when any of the three scores had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

/// Per-class scores for all nine classes, in label order.
pub fn precision_recall_f1(confusion: &ConfusionMatrix) -> Vec<ClassMetrics> {
    GazeClass::all()
        .map(|c| {
            let tp = confusion.get(c, c);
            let predicted = confusion.column_sum(c);
            let support = confusion.row_sum(c);
            let mut degenerate = false;
            let mut ratio = |num: f64, den: f64| {
                if den == 0.0 {
                    degenerate = true;
                    0.0
                } else {
                    num / den
                }
            };
            let precision = ratio(tp as f64, predicted as f64);
            let recall = ratio(tp as f64, support as f64);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            ClassMetrics { class: c, precision, recall, f1, support, degenerate }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Classes occurring in the truth or the predictions, in label order.
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub confusion: ConfusionMatrix,
}

impl ClassificationReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let total = confusion.total();
        if total == 0 {
            return Err(Error::Parameter("no labels to score".into()));
        }
        let classes: Vec<ClassMetrics> = precision_recall_f1(&confusion)
            .into_iter()
            .filter(|m| m.support > 0 || confusion.column_sum(m.class) > 0)
            .collect();
        // Both averages are a dot product with per-class weights, so equal
        // supports give bit-identical macro and weighted rows.
        let uniform = 1.0 / classes.len() as f64;
        let macro_avg = average(&classes, |_| uniform, total);
        let weighted_avg = average(&classes, |m| m.support as f64 / total as f64, total);
        Ok(Self { accuracy: confusion.trace() as f64 / total as f64, classes, macro_avg, weighted_avg, confusion })
    }

    pub fn class(&self, c: GazeClass) -> Option<&ClassMetrics> {
        self.classes.iter().find(|m| m.class == c)
    }

    pub fn support(&self) -> u64 {
        self.confusion.total()
    }

    /// Table layout with precision, recall, f1-score, score and support columns.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn average(classes: &[ClassMetrics], weight: impl Fn(&ClassMetrics) -> f64, support: u64) -> Averages {
    let dot = |f: fn(&ClassMetrics) -> f64| classes.iter().map(|m| weight(m) * f(m)).sum::<f64>();
    Averages { precision: dot(|m| m.precision), recall: dot(|m| m.recall), f1: dot(|m| m.f1), support }
}

pub fn report(y_true: &[GazeClass], y_pred: &[GazeClass]) -> Result<ClassificationReport> {
    ClassificationReport::from_confusion(ConfusionMatrix::from_labels(y_true, y_pred)?)
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blank = "";
        writeln!(f, "{:>14} {:>9} {:>9} {:>9} {:>9} {:>9}", blank, "precision", "recall", "f1-score", "score", "support")?;
        writeln!(f)?;
        for m in &self.classes {
            let flag = if m.degenerate { " *" } else { "" };
            writeln!(
                f,
                "{:>14} {:>9.2} {:>9.2} {:>9.2} {:>9} {:>9}{flag}",
                m.class.label(),
                m.precision,
                m.recall,
                m.f1,
                blank,
                m.support
            )?;
        }
        writeln!(f)?;
        writeln!(f, "{:>14} {:>9} {:>9} {:>9} {:>9.2} {:>9}", "accuracy", blank, blank, blank, self.accuracy, self.support())?;
        for (name, avg) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            writeln!(
                f,
                "{:>14} {:>9.2} {:>9.2} {:>9.2} {:>9} {:>9}",
                name, avg.precision, avg.recall, avg.f1, blank, avg.support
            )?;
        }
        if self.classes.iter().any(|m| m.degenerate) {
            writeln!(f, "\n* zero denominator, reported as 0")?;
        }
        Ok(())
    }
}
