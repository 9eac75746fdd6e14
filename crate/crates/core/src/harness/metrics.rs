use std::fmt::Write as _;

use super::HarnessError;

/// Classification metrics over one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
    /// Echo of the run configuration, `(key, value)`.
    pub config: Vec<(String, String)>,
}

impl EvalReport {
    pub fn classes(&self) -> usize {
        self.support.len()
    }

    pub fn total(&self) -> usize {
        self.support.iter().sum()
    }

    /// `1 - accuracy`.
    pub fn error_rate_accuracy(&self) -> f64 {
        1.0 - self.accuracy
    }

    /// `1 - macro_f1`.
    pub fn error_rate_f1(&self) -> f64 {
        1.0 - self.macro_f1
    }

    pub fn with_config(mut self, config: Vec<(String, String)>) -> Self {
        self.config = config;
        self
    }

    pub fn to_text(&self, names: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy   {:.4}", self.accuracy);
        let _ = writeln!(s, "macro-F1   {:.4}", self.macro_f1);
        let _ = writeln!(s, "samples    {}", self.total());
        let _ = writeln!(s, "\n{:<20} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for c in 0..self.classes() {
            let name = names.get(c).map_or_else(|| c.to_string(), Clone::clone);
            let _ = writeln!(
                s,
                "{:<20} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                name, self.precision[c], self.recall[c], self.f1[c], self.support[c]
            );
        }
        s
    }

    /// `key = value` lines, one per scalar and per class.
    pub fn to_key_values(&self, names: &[String]) -> String {
        let mut s = String::new();
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k} = {v}");
        }
        let _ = writeln!(s, "accuracy = {}", self.accuracy);
        let _ = writeln!(s, "macro_f1 = {}", self.macro_f1);
        let _ = writeln!(s, "error_rate_accuracy = {}", self.error_rate_accuracy());
        let _ = writeln!(s, "error_rate_f1 = {}", self.error_rate_f1());
        let _ = writeln!(s, "samples = {}", self.total());
        for c in 0..self.classes() {
            let name = names.get(c).map_or_else(|| c.to_string(), Clone::clone);
            let _ = writeln!(s, "class.{name}.precision = {}", self.precision[c]);
            let _ = writeln!(s, "class.{name}.recall = {}", self.recall[c]);
            let _ = writeln!(s, "class.{name}.f1 = {}", self.f1[c]);
            let _ = writeln!(s, "class.{name}.support = {}", self.support[c]);
        }
        s
    }

    /// Header row of predicted class names, then one row per true class.
    pub fn confusion_csv(&self, names: &[String]) -> String {
        let name = |c: usize| names.get(c).map_or_else(|| c.to_string(), Clone::clone);
        let mut s = String::from("truth\\pred");
        for c in 0..self.classes() {
            s.push(',');
            s.push_str(&name(c));
        }
        s.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            s.push_str(&name(t));
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Accuracy, per-class precision/recall/F1, and macro-F1. Classes with no
/// support and no predictions score F1 = 0.
pub fn evaluate(predictions: &[usize], truths: &[usize], classes: usize) -> Result<EvalReport, HarnessError> {
    if predictions.len() != truths.len() {
        return Err(HarnessError::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        for label in [p, t] {
            if label >= classes {
                return Err(HarnessError::LabelOutOfRange { label, classes });
            }
        }
        confusion[t][p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<usize> = (0..classes).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..classes).map(|c| ratio(confusion[c][c], predicted[c])).collect();
    let recall: Vec<f64> = (0..classes).map(|c| ratio(confusion[c][c], support[c])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(p, r)| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
        .collect();
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        accuracy: correct as f64 / predictions.len() as f64,
        macro_f1: f1.iter().sum::<f64>() / classes as f64,
        precision,
        recall,
        f1,
        support,
        confusion,
        config: Vec::new(),
    })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub(crate) fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks); 0 when either side
/// is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, HarnessError> {
    if a.len() != b.len() {
        return Err(HarnessError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(HarnessError::Empty);
    }
    Ok(crate::features::pearson(&average_ranks(a), &average_ranks(b)))
}
