//! Presentation-bias induction.
//!
//! A tabular-only model fit on the unbiased original split plays the deployed
//! recommender. Its binary recommendations `r` decide which training labels
//! the simulated users reveal (`a = 1`) and which evaluation rows survive in
//! the biased evaluation split. Withheld training labels go to a [`Vault`]
//! that only oracle and analysis code can open.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, feature_matrix, row_record, standard_header, ColumnRoles, Dataset, FeatureSchema,
    FeatureView, Row, TaskKind, TaskSpec,
};
use crate::error::{Error, Result};
use crate::nn::{Activation, Head, Mlp};
use crate::seed;
use crate::train::{self, Problem, TrainConfig};

/// Marker required to open withheld labels. Only oracle training and the
/// analysis reports construct one.
#[derive(Debug, Clone, Copy)]
pub struct OracleAccess(());

impl OracleAccess {
    pub fn grant() -> Self {
        OracleAccess(())
    }
}

/// Withheld true labels, keyed by row id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vault {
    labels: BTreeMap<u64, f64>,
}

impl Vault {
    pub fn from_map(labels: BTreeMap<u64, f64>) -> Self {
        Vault { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<f64> {
        self.labels.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.labels.iter().map(|(&k, &v)| (k, v))
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.labels.keys().copied()
    }

    pub const ORACLE_COLUMN: &'static str = "y_oracle";

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut wtr = csv::Writer::from_writer(file);
        wtr.write_record(["id", Self::ORACLE_COLUMN])?;
        for (id, y) in self.iter() {
            wtr.write_record([id.to_string(), data::fmt_value(y)])?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path, _access: OracleAccess) -> Result<Self> {
        let mut rdr = data::open_reader(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[1] != Self::ORACLE_COLUMN {
            return Err(Error::Schema(format!(
                "{} is not a vault file",
                path.display()
            )));
        }
        let mut labels = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id = data::parse_id(&rec, 0, i + 1)?;
            labels.insert(id, data::parse_cell(&rec, 1, Self::ORACLE_COLUMN, i + 1)?);
        }
        Ok(Vault { labels })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TabPredictor {
    Network { net: Mlp, head: Head },
    Linear { coef: Vec<f64>, intercept: f64 },
}

/// Recommender fit on tabular features only.
#[derive(Debug, Clone, PartialEq)]
pub struct TabModel {
    predictor: TabPredictor,
    task: TaskSpec,
    d_tab: usize,
    /// Recommendation threshold for non-binary tasks (median training
    /// prediction).
    pub t_rec: Option<f64>,
    pub train_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabConfig {
    pub hidden: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TabConfig {
    fn default() -> Self {
        TabConfig {
            hidden: 32,
            max_epochs: 40,
            learning_rate: 1e-2,
            batch_size: 64,
        }
    }
}

impl TabModel {
    pub fn d_tab(&self) -> usize {
        self.d_tab
    }

    /// Predicted value per row: class for binary, expected class index for
    /// multiclass, the fitted value for regression.
    pub fn predict_values(&self, d: &Dataset) -> Result<Vec<f64>> {
        if d.schema().d_tab != self.d_tab {
            return Err(Error::DimensionMismatch {
                expected: self.d_tab,
                actual: d.schema().d_tab,
            });
        }
        let x = d.inputs(FeatureView::Tabular);
        Ok(self.values_of(&x))
    }

    fn values_of(&self, x: &Array2<f64>) -> Vec<f64> {
        match &self.predictor {
            TabPredictor::Network { net, head } => {
                let logits = net.predict(x.view());
                match head {
                    Head::Softmax(_) => head
                        .distribution(logits.view())
                        .rows()
                        .into_iter()
                        .map(|p| p.iter().enumerate().map(|(k, pk)| k as f64 * pk).sum())
                        .collect(),
                    _ => head.decide_all(logits.view()),
                }
            }
            TabPredictor::Linear { coef, intercept } => {
                let c = Array1::from(coef.clone());
                (x.dot(&c) + *intercept).to_vec()
            }
        }
    }
}

/// Solves the least-squares problem `min |X b + c - y|^2` with a tiny ridge
/// term for numerical safety.
fn least_squares(x: &Array2<f64>, y: &[f64]) -> (Vec<f64>, f64) {
    let n = x.nrows();
    let d = x.ncols();
    let mut aug = Array2::<f64>::ones((n, d + 1));
    aug.slice_mut(ndarray::s![.., ..d]).assign(x);
    let mut a = aug.t().dot(&aug);
    for i in 0..d {
        a[[i, i]] += 1e-9 * n as f64;
    }
    let b = aug.t().dot(&Array1::from(y.to_vec()));
    let sol = solve(a, b.to_vec());
    (sol[..d].to_vec(), sol[d])
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .expect("nonempty");
        if pivot != col {
            for k in 0..n {
                a.swap([col, k], [pivot, k]);
            }
            b.swap(col, pivot);
        }
        let p = a[[col, col]];
        if p.abs() < 1e-300 {
            continue;
        }
        for row in col + 1..n {
            let f = a[[row, col]] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[[i, k]] * x[k]).sum();
        x[i] = if a[[i, i]].abs() < 1e-300 {
            0.0
        } else {
            (b[i] - s) / a[[i, i]]
        };
    }
    x
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn fit_tab_model(d_original: &Dataset, task: TaskSpec, seed: u64) -> Result<TabModel> {
    fit_tab_model_with(d_original, task, &TabConfig::default(), seed)
}

pub fn fit_tab_model_with(
    d_original: &Dataset,
    task: TaskSpec,
    cfg: &TabConfig,
    seed: u64,
) -> Result<TabModel> {
    if d_original.is_empty() {
        return Err(Error::NoRows);
    }
    task.validate()?;
    let x = d_original.inputs(FeatureView::Tabular);
    let y = d_original.labels();
    let d_tab = d_original.schema().d_tab;

    if task.kind == TaskKind::Regression {
        let (coef, intercept) = least_squares(&x, &y);
        let mut m = TabModel {
            predictor: TabPredictor::Linear { coef, intercept },
            task,
            d_tab,
            t_rec: None,
            train_accuracy: None,
        };
        m.t_rec = Some(median(&m.values_of(&x)));
        return Ok(m);
    }

    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Err(Error::SingleClass);
    }
    let head = Head::for_task(task);
    let mut rng = seed::rng(seed);
    let mut net = Mlp::new(&[d_tab, cfg.hidden, head.outputs()], Activation::Elu, &mut rng);
    let tc = TrainConfig {
        hidden: cfg.hidden,
        epochs: cfg.max_epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        validation_fraction: 0.0,
    };
    tc.validate()?;
    let accuracy = |net: &Mlp| {
        let pred = head.decide_all(net.predict(x.view()).view());
        pred.iter().zip(&y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64
    };
    let problem = Problem {
        inputs: x.view(),
        targets: &y,
        weights: None,
    };
    train::fit(&mut net, head, &problem, &tc, &mut rng, |n| accuracy(n) == 1.0);
    let acc = accuracy(&net);
    let mut m = TabModel {
        predictor: TabPredictor::Network { net, head },
        task,
        d_tab,
        t_rec: None,
        train_accuracy: Some(acc),
    };
    if matches!(task.kind, TaskKind::Multiclass { .. }) {
        m.t_rec = Some(median(&m.values_of(&x)));
    }
    Ok(m)
}

/// Binary recommendation per row of `d`.
pub fn predict_recs(m: &TabModel, d: &Dataset) -> Result<Vec<bool>> {
    let values = m.predict_values(d)?;
    Ok(match m.task.kind {
        TaskKind::Binary => values.into_iter().map(|v| v == 1.0).collect(),
        _ => {
            let t = m.t_rec.expect("non-binary tab model carries a threshold");
            values.into_iter().map(|v| v > t).collect()
        }
    })
}

/// Recommendation from already-computed predictions and a threshold.
pub fn recs_from_values(values: &[f64], t_rec: f64) -> Vec<bool> {
    values.iter().map(|&v| v > t_rec).collect()
}

/// One training row after bias induction. The label is present iff the row
/// was observed (`a = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct BiasedRow {
    pub id: u64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub r: bool,
    pub label: Option<f64>,
}

impl BiasedRow {
    pub fn a(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasedTrainSet {
    rows: Vec<BiasedRow>,
    task: TaskSpec,
    schema: FeatureSchema,
    vault: Option<Vault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasParams {
    pub label_drop: f64,
    pub row_drop: f64,
    pub sample_drop: f64,
}

impl Default for BiasParams {
    fn default() -> Self {
        BiasParams {
            label_drop: 0.9,
            row_drop: 0.35,
            sample_drop: 0.9,
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be in [0, 1), got {v}")))
    }
}

impl BiasParams {
    pub fn validate(&self) -> Result<()> {
        check_fraction("label_drop", self.label_drop)?;
        check_fraction("row_drop", self.row_drop)?;
        check_fraction("sample_drop", self.sample_drop)
    }
}

/// Masks labels of non-recommended rows, then removes a uniform share of all
/// rows.
///
/// Each `r = 0` row loses its label with probability `label_drop`
/// (independently); `r = 1` rows keep theirs. Afterwards every row is removed
/// with probability `row_drop`. Masked labels of surviving rows go to the
/// vault.
pub fn induce_train_bias(
    pool: &Dataset,
    r: &[bool],
    label_drop: f64,
    row_drop: f64,
    seed: u64,
) -> Result<BiasedTrainSet> {
    if r.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            actual: r.len(),
        });
    }
    check_fraction("label_drop", label_drop)?;
    check_fraction("row_drop", row_drop)?;
    let mut rng = seed::rng(seed);
    let masked: Vec<bool> = r
        .iter()
        .map(|&rec| {
            let u: f64 = rng.gen();
            !rec && u < label_drop
        })
        .collect();
    let mut rows = Vec::new();
    let mut vault = BTreeMap::new();
    for ((row, &rec), &hide) in pool.rows().iter().zip(r).zip(&masked) {
        let u: f64 = rng.gen();
        if u < row_drop {
            continue;
        }
        if hide {
            vault.insert(row.id, row.y);
        }
        rows.push(BiasedRow {
            id: row.id,
            x: row.x.clone(),
            w: row.w.clone(),
            r: rec,
            label: (!hide).then_some(row.y),
        });
    }
    if !rows.iter().any(BiasedRow::a) {
        return Err(Error::InvalidInput(
            "bias induction left zero observed labels".into(),
        ));
    }
    Ok(BiasedTrainSet {
        rows,
        task: pool.task(),
        schema: pool.schema(),
        vault: Some(Vault { labels: vault }),
    })
}

/// Biased evaluation split: each non-recommended row is removed with
/// probability `sample_drop`; survivors keep their true labels.
pub fn make_biased_eval(
    d_eval: &Dataset,
    m: &TabModel,
    sample_drop: f64,
    seed: u64,
) -> Result<Dataset> {
    if d_eval.is_empty() {
        return Err(Error::NoRows);
    }
    check_fraction("sample_drop", sample_drop)?;
    let r = predict_recs(m, d_eval)?;
    let mut rng = seed::rng(seed);
    let keep: Vec<usize> = r
        .iter()
        .enumerate()
        .filter_map(|(i, &rec)| {
            let u: f64 = rng.gen();
            (rec || u >= sample_drop).then_some(i)
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidInput("biased evaluation split is empty".into()));
    }
    Ok(d_eval.select(&keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCounts {
    pub rows: usize,
    pub observed: usize,
}

impl BiasedTrainSet {
    /// Assembles a set from parts; the vault must cover exactly the
    /// unobserved rows when present.
    pub fn from_parts(
        rows: Vec<BiasedRow>,
        task: TaskSpec,
        schema: FeatureSchema,
        vault: Option<Vault>,
    ) -> Result<Self> {
        task.validate()?;
        let mut seen = std::collections::HashSet::new();
        for (i, r) in rows.iter().enumerate() {
            if !seen.insert(r.id) {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    reason: format!("duplicate id {}", r.id),
                });
            }
            if r.x.len() != schema.d_tab || r.w.len() != schema.d_rich {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    reason: "feature width does not match schema".into(),
                });
            }
            if let Some(y) = r.label {
                task.check_label(y)
                    .map_err(|reason| Error::InvalidRow { row: i + 1, reason })?;
            }
        }
        if let Some(v) = &vault {
            let hidden: Vec<u64> = rows.iter().filter(|r| !r.a()).map(|r| r.id).collect();
            let mut vault_ids: Vec<u64> = v.ids().collect();
            let mut h = hidden.clone();
            h.sort_unstable();
            vault_ids.sort_unstable();
            if h != vault_ids {
                return Err(Error::InvalidInput(
                    "vault does not cover exactly the unobserved rows".into(),
                ));
            }
        }
        Ok(BiasedTrainSet {
            rows,
            task,
            schema,
            vault,
        })
    }

    pub fn rows(&self) -> &[BiasedRow] {
        &self.rows
    }

    pub fn task(&self) -> TaskSpec {
        self.task
    }

    pub fn schema(&self) -> FeatureSchema {
        self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_observed(&self) -> usize {
        self.rows.iter().filter(|r| r.a()).count()
    }

    pub fn unobserved_ids(&self) -> Vec<u64> {
        self.rows.iter().filter(|r| !r.a()).map(|r| r.id).collect()
    }

    pub fn has_vault(&self) -> bool {
        self.vault.is_some()
    }

    pub fn vault(&self, _access: OracleAccess) -> Option<&Vault> {
        self.vault.as_ref()
    }

    /// Drops the vault, e.g. before handing the set to code that must not see
    /// withheld labels.
    pub fn sealed(mut self) -> Self {
        self.vault = None;
        self
    }

    pub fn condition_counts(&self, r: bool) -> ConditionCounts {
        let rows = self.rows.iter().filter(|row| row.r == r);
        let (n, obs) = rows.fold((0, 0), |(n, o), row| (n + 1, o + usize::from(row.a())));
        ConditionCounts {
            rows: n,
            observed: obs,
        }
    }

    /// Observed rows as a plain dataset, plus their recommendation bits.
    pub fn observed(&self) -> Result<(Dataset, Vec<bool>)> {
        let mut rows = Vec::new();
        let mut recs = Vec::new();
        for r in self.rows.iter().filter(|r| r.a()) {
            rows.push(Row {
                id: r.id,
                x: r.x.clone(),
                w: r.w.clone(),
                y: r.label.expect("observed"),
            });
            recs.push(r.r);
        }
        Ok((Dataset::new(rows, self.task, self.schema)?, recs))
    }

    /// Every row with its true label restored from the vault.
    pub fn restored(&self, access: OracleAccess) -> Result<Dataset> {
        let vault = self
            .vault(access)
            .ok_or_else(|| Error::InvalidInput("vault missing".into()))?;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let y = match r.label {
                    Some(y) => Ok(y),
                    None => vault.get(r.id).ok_or_else(|| {
                        Error::InvalidInput(format!("vault has no label for id {}", r.id))
                    }),
                }?;
                Ok(Row {
                    id: r.id,
                    x: r.x.clone(),
                    w: r.w.clone(),
                    y,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(rows, self.task, self.schema)
    }

    pub fn inputs(&self, view: FeatureView) -> Array2<f64> {
        feature_matrix(
            self.rows.iter().map(|r| (r.x.as_slice(), r.w.as_slice())),
            self.rows.len(),
            view.width(self.schema),
            view,
        )
    }

    pub fn recs(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.r).collect()
    }

    /// Writes the rows in the standard layout plus `r` and `a` columns;
    /// masked labels are left blank. The vault is not written here.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(standard_header(self.schema, &["r", "a"]))?;
        for r in &self.rows {
            let extra = [u8::from(r.r).to_string(), u8::from(r.a()).to_string()];
            wtr.write_record(row_record(r.id, &r.x, &r.w, r.label, &extra))?;
        }
        wtr.flush().map_err(|e| Error::io("<biased writer>", e))?;
        Ok(())
    }

    /// Reads a set written by [`write_csv`](Self::write_csv). The vault is
    /// attached only when an oracle path and access marker are supplied.
    pub fn read_csv(
        path: &Path,
        roles: &ColumnRoles,
        task: TaskSpec,
        vault: Option<(&Path, OracleAccess)>,
    ) -> Result<Self> {
        let mut rdr = data::open_reader(path)?;
        let headers = rdr.headers()?.clone();
        if headers.iter().any(|h| h == Vault::ORACLE_COLUMN) {
            return Err(Error::OracleOnly(path.display().to_string()));
        }
        let cols = data::resolve_columns(&headers, roles)?;
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
        };
        let (rc, ac) = (find("r")?, find("a")?);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row_no = i + 1;
            let rec = rec?;
            let flag = |c: usize, name: &str| match rec.get(c).map(str::trim) {
                Some("1") => Ok(true),
                Some("0") => Ok(false),
                other => Err(Error::InvalidRow {
                    row: row_no,
                    reason: format!("column '{name}' must be 0 or 1, got {other:?}"),
                }),
            };
            let r = flag(rc, "r")?;
            let a = flag(ac, "a")?;
            let x = cols
                .tabular
                .iter()
                .zip(&roles.tabular)
                .map(|(&c, n)| data::parse_cell(&rec, c, n, row_no))
                .collect::<Result<Vec<_>>>()?;
            let w = cols
                .rich
                .iter()
                .zip(&roles.rich)
                .map(|(&c, n)| data::parse_cell(&rec, c, n, row_no))
                .collect::<Result<Vec<_>>>()?;
            let label = if a {
                Some(data::parse_cell(&rec, cols.label, &roles.label, row_no)?)
            } else {
                if rec.get(cols.label).is_some_and(|s| !s.trim().is_empty()) {
                    return Err(Error::InvalidRow {
                        row: row_no,
                        reason: "unobserved row carries a label".into(),
                    });
                }
                None
            };
            rows.push(BiasedRow {
                id: data::parse_id(&rec, cols.id, row_no)?,
                x,
                w,
                r,
                label,
            });
        }
        if rows.is_empty() {
            return Err(Error::NoRows);
        }
        let vault = match vault {
            Some((p, access)) => Some(Vault::read_csv(p, access)?),
            None => None,
        };
        let schema = FeatureSchema {
            d_tab: roles.tabular.len(),
            d_rich: roles.rich.len(),
        };
        Self::from_parts(rows, task, schema, vault)
    }
}

/// Share of recommended rows, for reporting.
pub fn recommendation_rate(r: &[bool]) -> f64 {
    r.iter().filter(|&&v| v).count() as f64 / r.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthConfig};

    fn pool(n: usize) -> Dataset {
        generate_synthetic(&SynthConfig {
            n,
            ..SynthConfig::default()
        })
        .unwrap()
        .0
    }

    #[test]
    fn identity_induction() {
        let d = pool(300);
        let r: Vec<bool> = (0..300).map(|i| i % 2 == 0).collect();
        let b = induce_train_bias(&d, &r, 0.0, 0.0, 1).unwrap();
        assert_eq!(b.len(), 300);
        assert_eq!(b.n_observed(), 300);
        assert!(b.vault(OracleAccess::grant()).unwrap().is_empty());
        assert_eq!(b.observed().unwrap().0, d);
    }

    #[test]
    fn all_recommended_means_no_masking() {
        let d = pool(500);
        let b = induce_train_bias(&d, &vec![true; 500], 0.9, 0.35, 3).unwrap();
        assert_eq!(b.n_observed(), b.len());
        assert!(b.len() < 500);
    }

    #[test]
    fn masked_share_is_binomial() {
        // 10,000 rows with 4,000 non-recommended: observed among them ~ Bin(4000, 0.1)
        let d = pool(10_000);
        let r: Vec<bool> = (0..10_000).map(|i| i >= 4_000).collect();
        let b = induce_train_bias(&d, &r, 0.9, 0.0, 5).unwrap();
        let c0 = b.condition_counts(false);
        assert_eq!(c0.rows, 4_000);
        let sd = (4_000.0f64 * 0.1 * 0.9).sqrt();
        assert!((c0.observed as f64 - 400.0).abs() <= 3.0 * sd, "{c0:?}");
        assert_eq!(b.condition_counts(true).observed, 6_000);
    }

    #[test]
    fn vault_holds_exactly_the_masked_labels() {
        let d = pool(2_000);
        let r: Vec<bool> = (0..2_000).map(|i| i % 3 == 0).collect();
        let b = induce_train_bias(&d, &r, 0.9, 0.35, 9).unwrap();
        let vault = b.vault(OracleAccess::grant()).unwrap();
        let truth: BTreeMap<u64, f64> = d.rows().iter().map(|r| (r.id, r.y)).collect();
        for row in b.rows() {
            assert_eq!(!row.a(), vault.get(row.id).is_some());
            if let Some(v) = vault.get(row.id) {
                assert_eq!(v, truth[&row.id]);
            }
        }
    }

    #[test]
    fn constant_binary_model_recommends_everything() {
        let d = pool(200);
        let mut m = fit_tab_model(&d, d.task(), 0).unwrap();
        if let TabPredictor::Network { net, .. } = &mut m.predictor {
            let last = net.layers.last_mut().unwrap();
            last.weights.fill(0.0);
            last.bias.fill(5.0);
        }
        assert!(predict_recs(&m, &d).unwrap().iter().all(|&r| r));
        let be = make_biased_eval(&d, &m, 0.9, 1).unwrap();
        assert_eq!(be, d);
    }

    #[test]
    fn regression_median_threshold_counts() {
        // predictions 1..=100 with t_rec 50 -> 50 recommended
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let recs = recs_from_values(&values, 50.0);
        assert_eq!(recs.iter().filter(|&&r| r).count(), 50);
        assert_eq!(median(&values), 50.5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let d = pool(100);
        let m = fit_tab_model(&d, d.task(), 0).unwrap();
        let other = generate_synthetic(&SynthConfig {
            n: 10,
            d_tab: 3,
            ..SynthConfig::default()
        })
        .unwrap()
        .0;
        assert!(matches!(
            predict_recs(&m, &other),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn least_squares_recovers_exact_line() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i as f64).powi(j as i32 + 1));
        let y: Vec<f64> = x.rows().into_iter().map(|r| 2.0 * r[0] - r[1] + 3.0).collect();
        let (c, b) = least_squares(&x, &y);
        assert!((c[0] - 2.0).abs() < 1e-6 && (c[1] + 1.0).abs() < 1e-6 && (b - 3.0).abs() < 1e-6);
    }

    #[test]
    fn empty_original_split_is_an_error() {
        let d = pool(10).select(&[]);
        assert!(matches!(fit_tab_model(&d, d.task(), 0), Err(Error::NoRows)));
    }
}
