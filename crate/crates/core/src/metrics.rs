//! Evaluation metrics.
//!
//! Per-class F1 is `2 TP / (2 TP + FP + FN)`, taken as 0 when the class never
//! occurs in either the labels or the predictions. Macro F1 averages over all
//! classes of the task; weighted F1 weights each class by its support in the
//! labels.

use serde::{Deserialize, Serialize};

use crate::data::{TaskKind, TaskSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Support-weighted mean of per-class F1.
    pub f1: f64,
    pub f1_macro: f64,
    pub f1_minority: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r2: f64,
    /// RMSE divided by the population standard deviation of the labels.
    pub nrmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scores {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scores: Scores,
    pub n_eval: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl MetricsReport {
    /// `(name, value)` pairs in table order.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        match self.scores {
            Scores::Classification(c) => vec![
                ("Acc", c.accuracy),
                ("F1", c.f1),
                ("F1_mac", c.f1_macro),
                ("F1_min", c.f1_minority),
            ],
            Scores::Regression(r) => vec![("R2", r.r2), ("NRMSE", r.nrmse)],
        }
    }

    pub fn classification(&self) -> Option<ClassificationMetrics> {
        match self.scores {
            Scores::Classification(c) => Some(c),
            Scores::Regression(_) => None,
        }
    }

    pub fn regression(&self) -> Option<RegressionMetrics> {
        match self.scores {
            Scores::Regression(r) => Some(r),
            Scores::Classification(_) => None,
        }
    }

    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.values() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&format!("n_eval = {}\nseed = {}\nconfig_hash = \"{}\"\n", self.n_eval, self.seed, self.config_hash));
        s
    }
}

/// Row-major `classes × classes` counts, `m[truth][prediction]`.
pub fn confusion_matrix(truth: &[usize], pred: &[usize], classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t][p] += 1;
    }
    m
}

fn class_indices(values: &[f64], classes: usize) -> Result<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && v >= 0.0 && (v as usize) < classes {
                Ok(v as usize)
            } else {
                Err(Error::InvalidInput(format!("{v} is not a class in 0..{classes}")))
            }
        })
        .collect()
}

pub fn classification_metrics(
    truth: &[f64],
    pred: &[f64],
    classes: usize,
    minority: usize,
) -> Result<ClassificationMetrics> {
    check_lengths(truth, pred)?;
    if minority >= classes {
        return Err(Error::InvalidInput("minority class out of range".into()));
    }
    let t = class_indices(truth, classes)?;
    let p = class_indices(pred, classes)?;
    let m = confusion_matrix(&t, &p, classes);
    let n = truth.len() as f64;
    let per_class: Vec<f64> = (0..classes)
        .map(|c| {
            let tp = m[c][c] as f64;
            let fn_: f64 = (0..classes).filter(|&k| k != c).map(|k| m[c][k] as f64).sum();
            let fp: f64 = (0..classes).filter(|&k| k != c).map(|k| m[k][c] as f64).sum();
            let denom = 2.0 * tp + fp + fn_;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect();
    let support: Vec<f64> = m.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let correct: f64 = (0..classes).map(|c| m[c][c] as f64).sum();
    Ok(ClassificationMetrics {
        accuracy: correct / n,
        f1: per_class.iter().zip(&support).map(|(f, s)| f * s).sum::<f64>() / n,
        f1_macro: per_class.iter().sum::<f64>() / classes as f64,
        f1_minority: per_class[minority],
    })
}

pub fn regression_metrics(truth: &[f64], pred: &[f64]) -> Result<RegressionMetrics> {
    check_lengths(truth, pred)?;
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::InvalidInput("evaluation labels have zero variance".into()));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(RegressionMetrics {
        r2: 1.0 - ss_res / ss_tot,
        nrmse: (ss_res / ss_tot).sqrt(),
    })
}

fn check_lengths(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::NoRows);
    }
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    Ok(())
}

/// Metrics appropriate for `task`.
pub fn score(task: TaskSpec, truth: &[f64], pred: &[f64]) -> Result<Scores> {
    Ok(match task.kind {
        TaskKind::Regression => Scores::Regression(regression_metrics(truth, pred)?),
        _ => {
            let classes = task.classes().unwrap_or(2);
            let minority = task.minority_class.unwrap_or(0);
            Scores::Classification(classification_metrics(truth, pred, classes, minority)?)
        }
    })
}

/// Area under the ROC curve via the rank statistic; ties count one half.
pub fn auc(labels: &[bool], scores: &[f64]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_predictor_on_75_25() {
        let truth: Vec<f64> = (0..100).map(|i| if i < 25 { 0.0 } else { 1.0 }).collect();
        let m = classification_metrics(&truth, &[1.0; 100], 2, 0).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.f1_minority, 0.0);
        assert!((m.f1_macro - (1.5 / 1.75) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_regression() {
        let y = [1.0, 2.0, 4.0];
        let m = regression_metrics(&y, &y).unwrap();
        assert_eq!((m.r2, m.nrmse), (1.0, 0.0));
        assert!(regression_metrics(&[2.0, 2.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[false, true], &[0.1, 0.9]), Some(1.0));
        assert_eq!(auc(&[false, true], &[0.5, 0.5]), Some(0.5));
        assert_eq!(auc(&[true, true], &[0.5, 0.1]), None);
    }
}
