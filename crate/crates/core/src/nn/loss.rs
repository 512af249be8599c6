use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::data::{TaskKind, TaskSpec};

/// Output head: maps raw network outputs (logits) to a task prediction and
/// defines the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Binary classification; one logit, sigmoid probability of class 1.
    Sigmoid,
    /// `K`-class classification; `K` logits, softmax probabilities.
    Softmax(usize),
    /// Regression; one raw output, squared error.
    Linear,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn softmax_row(logits: ArrayView1<f64>) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

impl Head {
    pub fn for_task(task: TaskSpec) -> Self {
        match task.kind {
            TaskKind::Binary => Head::Sigmoid,
            TaskKind::Multiclass { classes } => Head::Softmax(classes),
            TaskKind::Regression => Head::Linear,
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            Head::Sigmoid | Head::Linear => 1,
            Head::Softmax(k) => k,
        }
    }

    /// Mean of `weight_i * loss_i` over the batch, and its gradient w.r.t.
    /// the logits.
    pub fn loss(
        self,
        logits: ArrayView2<f64>,
        targets: &[f64],
        weights: Option<&[f64]>,
    ) -> (f64, Array2<f64>) {
        let n = logits.nrows();
        assert_eq!(targets.len(), n);
        let inv_n = 1.0 / n.max(1) as f64;
        let mut grad = Array2::zeros(logits.raw_dim());
        let mut total = 0.0;
        for (i, (row, mut g)) in logits.rows().into_iter().zip(grad.rows_mut()).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]) * inv_n;
            let y = targets[i];
            match self {
                Head::Sigmoid => {
                    let z = row[0];
                    total += w * (softplus(z) - y * z);
                    g[0] = w * (sigmoid(z) - y);
                }
                Head::Softmax(_) => {
                    let p = softmax_row(row);
                    let c = y as usize;
                    total += w * -(p[c].max(f64::MIN_POSITIVE)).ln();
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk = w * (p[k] - if k == c { 1.0 } else { 0.0 });
                    }
                }
                Head::Linear => {
                    let r = row[0] - y;
                    total += w * r * r;
                    g[0] = w * 2.0 * r;
                }
            }
        }
        (total, grad)
    }

    /// Class probabilities (classification) or the raw value (regression),
    /// one row per sample.
    pub fn distribution(self, logits: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Head::Sigmoid => logits.mapv(sigmoid),
            Head::Linear => logits.to_owned(),
            Head::Softmax(k) => {
                let mut out = Array2::zeros((logits.nrows(), k));
                for (row, mut o) in logits.rows().into_iter().zip(out.rows_mut()) {
                    for (d, p) in o.iter_mut().zip(softmax_row(row)) {
                        *d = p;
                    }
                }
                out
            }
        }
    }

    /// Hard prediction: class index or regression value.
    pub fn decide(self, logits: ArrayView1<f64>) -> f64 {
        match self {
            Head::Sigmoid => {
                if logits[0] >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Head::Linear => logits[0],
            Head::Softmax(_) => argmax(logits.iter().copied()) as f64,
        }
    }

    pub fn decide_all(self, logits: ArrayView2<f64>) -> Vec<f64> {
        logits.rows().into_iter().map(|r| self.decide(r)).collect()
    }
}

pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn weights_scale_loss_and_gradient() {
        let logits = array![[0.3], [-1.2]];
        let (l1, g1) = Head::Sigmoid.loss(logits.view(), &[1.0, 0.0], None);
        let (l2, g2) = Head::Sigmoid.loss(logits.view(), &[1.0, 0.0], Some(&[2.0, 2.0]));
        assert_eq!(l2, 2.0 * l1);
        assert_eq!(g2, &g1 * 2.0);
    }

    #[test]
    fn softmax_loss_of_uniform_logits() {
        let logits = array![[0.0, 0.0, 0.0]];
        let (l, _) = Head::Softmax(3).loss(logits.view(), &[2.0], None);
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }
}
