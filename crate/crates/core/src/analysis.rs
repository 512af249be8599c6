//! Label-distribution comparisons: generated counterfactuals against the
//! withheld true labels, and observed against corrected label balance.
//!
//! Discrete labels are binned one bin per class. Continuous labels use 20
//! equal-width bins over the pooled range of every compared source.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::augment::CorrectedDataset;
use crate::bias::{BiasedTrainSet, OracleAccess, Vault};
use crate::data::{self, TaskSpec};
use crate::error::{Error, Result};
use crate::gan::CfLabels;

pub const CONTINUOUS_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistSource {
    Generated,
    TrueCounterfactual,
    Observed,
    Corrected,
    Full,
}

impl DistSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DistSource::Generated => "generated",
            DistSource::TrueCounterfactual => "true_counterfactual",
            DistSource::Observed => "observed",
            DistSource::Corrected => "corrected",
            DistSource::Full => "full",
        }
    }

    /// Sources whose values come from withheld labels.
    pub fn is_oracle(self) -> bool {
        matches!(self, DistSource::TrueCounterfactual | DistSource::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BinSpec {
    /// One bin per class label `0..classes`.
    Classes { classes: usize },
    /// `count` equal-width bins on `[lo, hi]`; the last bin is closed.
    Uniform { lo: f64, hi: f64, count: usize },
}

impl BinSpec {
    pub fn len(&self) -> usize {
        match *self {
            BinSpec::Classes { classes } => classes,
            BinSpec::Uniform { count, .. } => count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn uniform_over(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if values.is_empty() { (0.0, 1.0) } else { (lo, hi) };
        BinSpec::Uniform {
            lo,
            hi,
            count: CONTINUOUS_BINS,
        }
    }

    fn for_task(task: TaskSpec, pooled: &[f64]) -> Self {
        match task.classes() {
            Some(classes) => BinSpec::Classes { classes },
            None => Self::uniform_over(pooled),
        }
    }

    pub fn index(&self, y: f64) -> usize {
        match *self {
            BinSpec::Classes { classes } => (y.max(0.0) as usize).min(classes - 1),
            BinSpec::Uniform { lo, hi, count } => {
                if hi <= lo {
                    return 0;
                }
                let k = ((y - lo) / (hi - lo) * count as f64).floor();
                (k.max(0.0) as usize).min(count - 1)
            }
        }
    }

    /// Text label of bin `k`: the class, or the bin's left edge.
    pub fn label(&self, k: usize) -> String {
        match *self {
            BinSpec::Classes { .. } => k.to_string(),
            BinSpec::Uniform { lo, hi, count } => data::fmt_value(lo + (hi - lo) * k as f64 / count as f64),
        }
    }

    pub fn histogram(&self, values: &[f64]) -> Vec<u64> {
        let mut h = vec![0; self.len()];
        for &v in values {
            h[self.index(v)] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub source: DistSource,
    pub counts: Vec<u64>,
    /// Entropy of the normalized counts, in nats.
    pub entropy: f64,
}

impl Histogram {
    fn new(source: DistSource, counts: Vec<u64>) -> Self {
        Histogram {
            source,
            entropy: entropy(&counts),
            counts,
        }
    }

    pub fn mass(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistReport {
    pub bin_spec: BinSpec,
    pub histograms: Vec<Histogram>,
    /// Between the first two histograms, discrete tasks only.
    pub tv_distance: Option<f64>,
    /// Between the first two sources, continuous tasks only.
    pub ks_statistic: Option<f64>,
}

impl DistReport {
    pub fn get(&self, source: DistSource) -> Option<&Histogram> {
        self.histograms.iter().find(|h| h.source == source)
    }

    pub fn reads_oracle(&self) -> bool {
        self.histograms.iter().any(|h| h.source.is_oracle())
    }

    /// Plot data: one `bin,source,count` line per bin and source.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin", "source", "count"])?;
        for h in &self.histograms {
            for (k, c) in h.counts.iter().enumerate() {
                w.write_record([self.bin_spec.label(k), h.source.as_str().to_string(), c.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<plot writer>", e))?;
        Ok(())
    }
}

/// Shannon entropy in nats of a count vector; 0 for an empty one.
pub fn entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Half the L1 distance between the normalized histograms.
pub fn tv_distance(a: &[u64], b: &[u64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::NoRows);
    }
    Ok(0.5 * a.iter().zip(b).map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs()).sum::<f64>())
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the
/// empirical distribution functions.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoRows);
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

fn compare(task: TaskSpec, sources: Vec<(DistSource, Vec<f64>)>) -> Result<DistReport> {
    let pooled: Vec<f64> = sources.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let bin_spec = BinSpec::for_task(task, &pooled);
    let histograms: Vec<Histogram> = sources
        .iter()
        .map(|(s, v)| Histogram::new(*s, bin_spec.histogram(v)))
        .collect();
    let (mut tv, mut ks) = (None, None);
    if sources.len() >= 2 && !sources[0].1.is_empty() && !sources[1].1.is_empty() {
        if task.is_classification() {
            tv = Some(tv_distance(&histograms[0].counts, &histograms[1].counts)?);
        } else {
            ks = Some(ks_statistic(&sources[0].1, &sources[1].1)?);
        }
    }
    Ok(DistReport {
        bin_spec,
        histograms,
        tv_distance: tv,
        ks_statistic: ks,
    })
}

/// Generated counterfactuals against the withheld labels of the same rows.
pub fn counterfactual_report(cf: &CfLabels, vault: &Vault, task: TaskSpec) -> Result<DistReport> {
    if cf.len() != vault.len() || vault.ids().any(|id| cf.get(id).is_none()) {
        return Err(Error::InvalidInput(format!(
            "generated labels cover {} rows, withheld labels {}; id sets differ",
            cf.len(),
            vault.len()
        )));
    }
    let generated: Vec<f64> = vault.ids().map(|id| cf.labels[&id]).collect();
    let truth: Vec<f64> = vault.iter().map(|(_, y)| y).collect();
    compare(
        task,
        vec![(DistSource::Generated, generated), (DistSource::TrueCounterfactual, truth)],
    )
}

/// Observed-only labels `P(Y | A = 1)` against the corrected mixture
/// `P_CA(Y)`; with `oracle`, also the fully restored `P(Y)`.
pub fn label_balance_report(
    b: &BiasedTrainSet,
    c: &CorrectedDataset,
    task: TaskSpec,
    oracle: Option<OracleAccess>,
) -> Result<DistReport> {
    let observed: Vec<f64> = b.rows().iter().filter_map(|r| r.label).collect();
    let mut sources = vec![(DistSource::Observed, observed), (DistSource::Corrected, c.labels())];
    if let Some(access) = oracle {
        sources.push((DistSource::Full, b.restored(access)?.labels()));
    }
    compare(task, sources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_tv(a: &[u64], b: &[u64]) -> f64 {
        // Largest probability gap over every subset of bins.
        let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
        (0u32..(1 << a.len()))
            .map(|mask| {
                let sel = |h: &[u64], n: f64| {
                    (0..h.len()).filter(|k| mask >> k & 1 == 1).map(|k| h[k] as f64 / n).sum::<f64>()
                };
                (sel(a, na) - sel(b, nb)).abs()
            })
            .fold(0.0, f64::max)
    }

    fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
        let cdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
        a.iter().chain(b).map(|&t| (cdf(a, t) - cdf(b, t)).abs()).fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn tv_matches_subset_definition(
            pair in (1usize..=10).prop_flat_map(|k| (
                prop::collection::vec(0u64..20, k),
                prop::collection::vec(0u64..20, k),
            ))
        ) {
            let (mut a, mut b) = pair;
            a[0] += 1;
            b[0] += 1;
            let tv = tv_distance(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&tv));
            prop_assert!((tv - brute_tv(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn ks_matches_cdf_definition(
            a in prop::collection::vec(-5i32..5, 1..30),
            b in prop::collection::vec(-5i32..5, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let d = ks_statistic(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((d - brute_ks(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn histogram_mass_is_conserved(v in prop::collection::vec(-1e3f64..1e3, 0..100)) {
            let spec = BinSpec::uniform_over(&v);
            prop_assert_eq!(spec.histogram(&v).iter().sum::<u64>(), v.len() as u64);
        }
    }

    fn vault_of(pairs: &[(u64, f64)]) -> Vault {
        Vault::from_map(pairs.iter().copied().collect())
    }

    fn cf_of(pairs: &[(u64, f64)]) -> CfLabels {
        CfLabels {
            labels: pairs.iter().copied().collect(),
        }
    }

    #[test]
    fn identical_and_disjoint_counterfactuals() {
        let task = TaskSpec::binary(0);
        let v = vault_of(&[(1, 0.0), (2, 1.0), (3, 1.0)]);
        let same = counterfactual_report(&cf_of(&[(1, 0.0), (2, 1.0), (3, 1.0)]), &v, task).unwrap();
        assert_eq!(same.tv_distance, Some(0.0));
        let v0 = vault_of(&[(1, 0.0), (2, 0.0)]);
        let r = counterfactual_report(&cf_of(&[(1, 1.0), (2, 1.0)]), &v0, task).unwrap();
        assert_eq!(r.tv_distance, Some(1.0));
        assert!(r.reads_oracle());
    }

    #[test]
    fn domain_mismatch_is_an_error() {
        let v = vault_of(&[(1, 0.0), (2, 1.0)]);
        assert!(counterfactual_report(&cf_of(&[(1, 0.0)]), &v, TaskSpec::binary(0)).is_err());
        assert!(counterfactual_report(&cf_of(&[(1, 0.0), (5, 1.0)]), &v, TaskSpec::binary(0)).is_err());
    }

    #[test]
    fn continuous_labels_use_pooled_bins() {
        let v = vault_of(&[(1, 0.0), (2, 10.0)]);
        let r = counterfactual_report(&cf_of(&[(1, 0.0), (2, 10.0)]), &v, TaskSpec::regression()).unwrap();
        assert_eq!(r.bin_spec, BinSpec::Uniform { lo: 0.0, hi: 10.0, count: 20 });
        assert_eq!(r.ks_statistic, Some(0.0));
        assert_eq!(r.tv_distance, None);
        assert_eq!(r.get(DistSource::Generated).unwrap().counts[19], 1);
    }

    #[test]
    fn entropy_in_nats() {
        assert_eq!(entropy(&[5, 0]), 0.0);
        assert!((entropy(&[3, 3]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[]), 0.0);
    }

    #[test]
    fn plot_csv_layout() {
        let v = vault_of(&[(1, 0.0), (2, 1.0)]);
        let r = counterfactual_report(&cf_of(&[(1, 1.0), (2, 1.0)]), &v, TaskSpec::binary(0)).unwrap();
        let mut buf = Vec::new();
        r.write_plot_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "bin,source,count\n0,generated,0\n1,generated,2\n0,true_counterfactual,1\n1,true_counterfactual,1\n"
        );
    }

    fn biased(labels: &[(Option<f64>, f64)]) -> BiasedTrainSet {
        use crate::bias::BiasedRow;
        use crate::data::FeatureSchema;
        let rows = labels
            .iter()
            .enumerate()
            .map(|(i, &(label, _))| BiasedRow {
                id: i as u64,
                x: vec![0.0],
                w: vec![],
                r: label.is_some(),
                label,
            })
            .collect();
        let vault = labels
            .iter()
            .enumerate()
            .filter(|(_, (l, _))| l.is_none())
            .map(|(i, &(_, y))| (i as u64, y))
            .collect();
        BiasedTrainSet::from_parts(rows, TaskSpec::binary(0), FeatureSchema { d_tab: 1, d_rich: 0 }, Some(Vault::from_map(vault)))
            .unwrap()
    }

    #[test]
    fn nothing_masked_means_identical_balance() {
        let b = biased(&[(Some(1.0), 1.0), (Some(0.0), 0.0), (Some(1.0), 1.0)]);
        let c = crate::augment::augment(&b, &CfLabels::default()).unwrap();
        let r = label_balance_report(&b, &c, b.task(), None).unwrap();
        assert_eq!(r.get(DistSource::Observed).unwrap().counts, r.get(DistSource::Corrected).unwrap().counts);
        assert!(!r.reads_oracle());
    }

    #[test]
    fn balance_masses_are_conserved() {
        let b = biased(&[(Some(1.0), 1.0), (None, 0.0), (Some(1.0), 1.0), (None, 1.0)]);
        let c = crate::augment::augment(&b, &cf_of(&[(1, 0.0), (3, 0.0)])).unwrap();
        let r = label_balance_report(&b, &c, b.task(), Some(OracleAccess::grant())).unwrap();
        assert_eq!(r.get(DistSource::Observed).unwrap().mass(), 2);
        assert_eq!(r.get(DistSource::Corrected).unwrap().mass(), 4);
        assert_eq!(r.get(DistSource::Full).unwrap().counts, vec![1, 3]);
        assert!(r.get(DistSource::Corrected).unwrap().entropy > r.get(DistSource::Observed).unwrap().entropy);
        assert_eq!(r.tv_distance, Some(0.5));
    }
}
