//! Dataset model, delimited-text ingestion, label binarization and the
//! three-way experimental split.
//!
//! On-disk format: a header row followed by one row per sample. The standard
//! column layout is `id, x_0..x_{d_tab-1}, w_0..w_{d_rich-1}, y`, but column
//! roles are always assigned through [`ColumnRoles`], never guessed from names
//! at load time. Missing values are rejected, not imputed.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TaskKind {
    Binary,
    Multiclass { classes: usize },
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(flatten)]
    pub kind: TaskKind,
    /// Fixed at construction; biased splits can flip empirical minority
    /// status, so it is never re-derived per split.
    #[serde(default)]
    pub minority_class: Option<usize>,
}

impl TaskSpec {
    pub fn binary(minority_class: usize) -> Self {
        TaskSpec {
            kind: TaskKind::Binary,
            minority_class: Some(minority_class),
        }
    }

    pub fn multiclass(classes: usize, minority_class: usize) -> Self {
        TaskSpec {
            kind: TaskKind::Multiclass { classes },
            minority_class: Some(minority_class),
        }
    }

    pub fn regression() -> Self {
        TaskSpec {
            kind: TaskKind::Regression,
            minority_class: None,
        }
    }

    /// Number of classes, `None` for regression.
    pub fn classes(&self) -> Option<usize> {
        match self.kind {
            TaskKind::Binary => Some(2),
            TaskKind::Multiclass { classes } => Some(classes),
            TaskKind::Regression => None,
        }
    }

    pub fn is_classification(&self) -> bool {
        self.classes().is_some()
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.minority_class) {
            (TaskKind::Multiclass { classes }, _) if classes < 2 => Err(Error::InvalidConfig(
                format!("multiclass task needs at least 2 classes, got {classes}"),
            )),
            (TaskKind::Regression, Some(_)) => Err(Error::InvalidConfig(
                "regression task has no minority class".into(),
            )),
            (_, Some(m)) if m >= self.classes().unwrap_or(0) => Err(Error::InvalidConfig(format!(
                "minority class {m} out of range for {:?}",
                self.kind
            ))),
            (TaskKind::Binary | TaskKind::Multiclass { .. }, None) => Err(Error::InvalidConfig(
                "classification task needs a minority class".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Checks that `y` is a legal label for this task.
    pub fn check_label(&self, y: f64) -> std::result::Result<(), String> {
        if !y.is_finite() {
            return Err(format!("label {y} is not finite"));
        }
        match self.classes() {
            None => Ok(()),
            Some(k) => {
                if y.fract() != 0.0 || y < 0.0 || y >= k as f64 {
                    Err(format!("label {y} out of range for {k}-class task"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Which feature blocks a downstream model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureView {
    #[default]
    All,
    Tabular,
    Rich,
}

impl FeatureView {
    pub fn width(self, schema: FeatureSchema) -> usize {
        match self {
            FeatureView::All => schema.d_tab + schema.d_rich,
            FeatureView::Tabular => schema.d_tab,
            FeatureView::Rich => schema.d_rich,
        }
    }

    pub(crate) fn write_into(self, x: &[f64], w: &[f64], out: &mut [f64]) {
        match self {
            FeatureView::All => {
                out[..x.len()].copy_from_slice(x);
                out[x.len()..].copy_from_slice(w);
            }
            FeatureView::Tabular => out.copy_from_slice(x),
            FeatureView::Rich => out.copy_from_slice(w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub d_tab: usize,
    pub d_rich: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub id: u64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub y: f64,
}

/// An immutable, validated collection of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Row>,
    task: TaskSpec,
    schema: FeatureSchema,
}

impl Dataset {
    pub fn new(rows: Vec<Row>, task: TaskSpec, schema: FeatureSchema) -> Result<Self> {
        task.validate()?;
        let mut seen = HashSet::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let invalid = |reason: String| Error::InvalidRow { row: i + 1, reason };
            if !seen.insert(row.id) {
                return Err(invalid(format!("duplicate id {}", row.id)));
            }
            if row.x.len() != schema.d_tab || row.w.len() != schema.d_rich {
                return Err(invalid(format!(
                    "feature width ({}, {}) does not match schema ({}, {})",
                    row.x.len(),
                    row.w.len(),
                    schema.d_tab,
                    schema.d_rich
                )));
            }
            if let Some(v) = row.x.iter().chain(&row.w).find(|v| !v.is_finite()) {
                return Err(invalid(format!("non-finite feature value {v}")));
            }
            task.check_label(row.y).map_err(invalid)?;
        }
        Ok(Dataset { rows, task, schema })
    }

    pub fn rows(&self) -> &[Row] {
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

    pub fn labels(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.id).collect()
    }

    /// Design matrix of the requested feature blocks, one row per sample.
    pub fn inputs(&self, view: FeatureView) -> Array2<f64> {
        feature_matrix(
            self.rows.iter().map(|r| (r.x.as_slice(), r.w.as_slice())),
            self.rows.len(),
            view.width(self.schema),
            view,
        )
    }

    /// Rows at the given positions, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            task: self.task,
            schema: self.schema,
        }
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(standard_header(self.schema, &[]))?;
        for row in &self.rows {
            wtr.write_record(row_record(row.id, &row.x, &row.w, Some(row.y), &[]))?;
        }
        wtr.flush().map_err(|e| Error::io("<dataset writer>", e))?;
        Ok(())
    }
}

pub(crate) fn feature_matrix<'a>(
    rows: impl Iterator<Item = (&'a [f64], &'a [f64])>,
    n: usize,
    width: usize,
    view: FeatureView,
) -> Array2<f64> {
    let mut m = Array2::zeros((n, width));
    for (mut out, (x, w)) in m.rows_mut().into_iter().zip(rows) {
        view.write_into(x, w, out.as_slice_mut().expect("row-major"));
    }
    m
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_value(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn standard_header(schema: FeatureSchema, extra: &[&str]) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend((0..schema.d_tab).map(|i| format!("x_{i}")));
    h.extend((0..schema.d_rich).map(|i| format!("w_{i}")));
    h.push("y".into());
    h.extend(extra.iter().map(|s| s.to_string()));
    h
}

pub(crate) fn row_record(
    id: u64,
    x: &[f64],
    w: &[f64],
    y: Option<f64>,
    extra: &[String],
) -> Vec<String> {
    let mut rec = Vec::with_capacity(2 + x.len() + w.len() + extra.len());
    rec.push(id.to_string());
    rec.extend(x.iter().chain(w).map(|&v| fmt_value(v)));
    rec.push(y.map(fmt_value).unwrap_or_default());
    rec.extend(extra.iter().cloned());
    rec
}

/// Assignment of file columns to roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub id: String,
    pub tabular: Vec<String>,
    #[serde(default)]
    pub rich: Vec<String>,
    pub label: String,
}

impl ColumnRoles {
    /// Roles for the standard layout emitted by this crate.
    pub fn standard(d_tab: usize, d_rich: usize) -> Self {
        ColumnRoles {
            id: "id".into(),
            tabular: (0..d_tab).map(|i| format!("x_{i}")).collect(),
            rich: (0..d_rich).map(|i| format!("w_{i}")).collect(),
            label: "y".into(),
        }
    }

    /// Standard roles sized from a header that follows the `x_i`/`w_i` naming.
    pub fn standard_from_header(path: &Path) -> Result<Self> {
        let mut rdr = open_reader(path)?;
        let headers = rdr.headers()?;
        let d_tab = headers.iter().filter(|h| h.starts_with("x_")).count();
        let d_rich = headers.iter().filter(|h| h.starts_with("w_")).count();
        Ok(Self::standard(d_tab, d_rich))
    }
}

pub(crate) struct ParsedColumns {
    pub id: usize,
    pub tabular: Vec<usize>,
    pub rich: Vec<usize>,
    pub label: usize,
}

pub(crate) fn resolve_columns(headers: &csv::StringRecord, roles: &ColumnRoles) -> Result<ParsedColumns> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    Ok(ParsedColumns {
        id: find(&roles.id)?,
        tabular: roles.tabular.iter().map(|c| find(c)).collect::<Result<_>>()?,
        rich: roles.rich.iter().map(|c| find(c)).collect::<Result<_>>()?,
        label: find(&roles.label)?,
    })
}

pub(crate) fn parse_cell(
    record: &csv::StringRecord,
    col: usize,
    name: &str,
    row: usize,
) -> Result<f64> {
    let raw = record.get(col).unwrap_or("").trim();
    if raw.is_empty() {
        return Err(Error::InvalidRow {
            row,
            reason: format!("missing value in column '{name}'"),
        });
    }
    let v: f64 = raw.parse().map_err(|_| Error::InvalidRow {
        row,
        reason: format!("non-numeric value '{raw}' in column '{name}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::InvalidRow {
            row,
            reason: format!("non-finite value '{raw}' in column '{name}'"),
        });
    }
    Ok(v)
}

pub(crate) fn parse_id(record: &csv::StringRecord, col: usize, row: usize) -> Result<u64> {
    let raw = record.get(col).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::InvalidRow {
        row,
        reason: format!("invalid id '{raw}'"),
    })
}

pub(crate) fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Reads a delimited file into a validated [`Dataset`], preserving row order.
pub fn load_dataset(path: &Path, roles: &ColumnRoles, task: TaskSpec) -> Result<Dataset> {
    task.validate()?;
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let cols = resolve_columns(&headers, roles)?;
    let schema = FeatureSchema {
        d_tab: roles.tabular.len(),
        d_rich: roles.rich.len(),
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row_no = i + 1;
        let rec = rec?;
        let id = parse_id(&rec, cols.id, row_no)?;
        let x = cols
            .tabular
            .iter()
            .zip(&roles.tabular)
            .map(|(&c, name)| parse_cell(&rec, c, name, row_no))
            .collect::<Result<Vec<_>>>()?;
        let w = cols
            .rich
            .iter()
            .zip(&roles.rich)
            .map(|(&c, name)| parse_cell(&rec, c, name, row_no))
            .collect::<Result<Vec<_>>>()?;
        let y = parse_cell(&rec, cols.label, &roles.label, row_no)?;
        task.check_label(y)
            .map_err(|reason| Error::InvalidRow { row: row_no, reason })?;
        rows.push(Row { id, x, w, y });
    }
    if rows.is_empty() {
        return Err(Error::NoRows);
    }
    Dataset::new(rows, task, schema)
}

/// Threshold `t` such that `y > t` marks a positive: the lower empirical
/// `(1 - positive_share)`-quantile of `labels`.
pub fn binarization_threshold(labels: &[f64], positive_share: f64) -> Result<f64> {
    if !(positive_share > 0.0 && positive_share < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "positive_share must be in (0, 1), got {positive_share}"
        )));
    }
    if labels.is_empty() {
        return Err(Error::NoRows);
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let q = 1.0 - positive_share;
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    let t = sorted[idx];
    if sorted[0] == sorted[n - 1] || t >= sorted[n - 1] {
        return Err(Error::InvalidInput(
            "no threshold separates the labels into two classes".into(),
        ));
    }
    Ok(t)
}

/// Maps continuous or ordinal labels to {0, 1}: `y' = 1` iff `y > t`. Values
/// equal to the threshold map to 0.
pub fn binarize_labels(d: &Dataset, positive_share: f64) -> Result<Dataset> {
    let labels = d.labels();
    let t = binarization_threshold(&labels, positive_share)?;
    let rows: Vec<Row> = d
        .rows
        .iter()
        .map(|r| Row {
            y: if r.y > t { 1.0 } else { 0.0 },
            ..r.clone()
        })
        .collect();
    let positives = rows.iter().filter(|r| r.y == 1.0).count();
    let minority = if 2 * positives > rows.len() { 0 } else { 1 };
    Dataset::new(rows, TaskSpec::binary(minority), d.schema)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub original: Dataset,
    pub train_pool: Dataset,
    pub eval: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub original: f64,
    pub train: f64,
    pub eval: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            original: 0.2,
            train: 0.4,
            eval: 0.4,
        }
    }
}

/// Split sizes for `n` rows: rounded fractions, with the rounding remainder
/// going to the evaluation split when the fractions sum to one.
pub fn split_sizes(n: usize, f: SplitFractions) -> Result<(usize, usize, usize)> {
    let fs = [f.original, f.train, f.eval];
    if fs.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig("split fractions must be non-negative".into()));
    }
    let total: f64 = fs.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions sum to {total} > 1"
        )));
    }
    let round = |v: f64| (v * n as f64).round() as usize;
    let o = round(f.original);
    let t = round(f.train).min(n - o.min(n));
    let e = if (total - 1.0).abs() < 1e-9 {
        n - o - t
    } else {
        round(f.eval).min(n - o - t)
    };
    if o == 0 || t == 0 || e == 0 {
        return Err(Error::InvalidConfig(format!(
            "split sizes ({o}, {t}, {e}) include an empty split"
        )));
    }
    Ok((o, t, e))
}

/// Uniform random partition into (original, train pool, eval).
pub fn split_dataset(d: &Dataset, fractions: SplitFractions, seed: u64) -> Result<SplitBundle> {
    let (o, t, e) = split_sizes(d.len(), fractions)?;
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let take = |range: std::ops::Range<usize>| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        d.select(&idx)
    };
    Ok(SplitBundle {
        original: take(0..o),
        train_pool: take(o..o + t),
        eval: take(o + t..o + t + e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn regression_rows(labels: &[f64]) -> Dataset {
        let rows = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| Row {
                id: i as u64,
                x: vec![i as f64],
                w: vec![],
                y,
            })
            .collect();
        Dataset::new(rows, TaskSpec::regression(), FeatureSchema { d_tab: 1, d_rich: 0 }).unwrap()
    }

    #[test]
    fn binarize_permutation_of_one_to_hundred() {
        // brute force: values 26..=100 are the only ones above 25
        let labels: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let expected_ones = labels.iter().filter(|&&v| v > 25.0).count();
        assert_eq!(expected_ones, 75);
        assert_eq!(binarization_threshold(&labels, 0.75).unwrap(), 25.0);
        let b = binarize_labels(&regression_rows(&labels), 0.75).unwrap();
        assert_eq!(b.labels().iter().filter(|&&y| y == 1.0).count(), 75);
        assert_eq!(b.task(), TaskSpec::binary(0));
    }

    #[test]
    fn binarize_binary_labels_is_identity() {
        let labels: Vec<f64> = (0..100).map(|i| if i % 4 == 0 { 0.0 } else { 1.0 }).collect();
        let d = regression_rows(&labels);
        let b = binarize_labels(&d, 0.75).unwrap();
        assert_eq!(b.labels(), labels);
    }

    #[test]
    fn binarize_constant_labels_fails() {
        let d = regression_rows(&[3.0; 10]);
        assert!(binarize_labels(&d, 0.5).is_err());
    }

    #[test]
    fn binarize_ties_go_to_zero() {
        let d = regression_rows(&[1.0, 2.0, 2.0, 2.0, 3.0]);
        let b = binarize_labels(&d, 0.5).unwrap();
        assert_eq!(b.labels(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn split_sizes_match_rounding_arithmetic() {
        let (o, t, e) = split_sizes(22_895, SplitFractions::default()).unwrap();
        // 0.2 * 22895 = 4579, 0.4 * 22895 = 9158; remainder 9158
        assert_eq!((o, t, e), (4579, 9158, 9158));
        assert_eq!(o + t + e, 22_895);
    }

    #[test]
    fn degenerate_split_fails() {
        let f = SplitFractions {
            original: 1.0,
            train: 0.0,
            eval: 0.0,
        };
        assert!(split_sizes(100, f).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let d = regression_rows(&(0..200).map(f64::from).collect::<Vec<_>>());
        let a = split_dataset(&d, SplitFractions::default(), 11).unwrap();
        let b = split_dataset(&d, SplitFractions::default(), 11).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&d, SplitFractions::default(), 12).unwrap();
        assert_ne!(a.original.ids(), c.original.ids());
    }

    #[test]
    fn task_spec_validation() {
        assert!(TaskSpec::multiclass(1, 0).validate().is_err());
        assert!(TaskSpec::binary(2).validate().is_err());
        assert!(TaskSpec::multiclass(5, 4).validate().is_ok());
        assert!(TaskSpec::binary(0).check_label(0.5).is_err());
        assert!(TaskSpec::multiclass(3, 0).check_label(3.0).is_err());
        assert!(TaskSpec::regression().check_label(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn split_partition_is_disjoint(n in 10usize..300, seed in any::<u64>()) {
            let d = regression_rows(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
            let f = SplitFractions { original: 0.3, train: 0.3, eval: 0.3 };
            if let Ok(s) = split_dataset(&d, f, seed) {
                let mut ids: Vec<u64> = s.original.ids();
                ids.extend(s.train_pool.ids());
                ids.extend(s.eval.ids());
                let total = ids.len();
                ids.sort_unstable();
                ids.dedup();
                prop_assert_eq!(ids.len(), total);
                prop_assert!(total <= n);
            }
        }

        #[test]
        fn binarization_is_monotone(labels in proptest::collection::vec(-100.0f64..100.0, 2..80),
                                    share in 0.05f64..0.95) {
            let d = regression_rows(&labels);
            if let Ok(b) = binarize_labels(&d, share) {
                let out = b.labels();
                for i in 0..labels.len() {
                    for j in 0..labels.len() {
                        if labels[i] > labels[j] {
                            prop_assert!(out[i] >= out[j]);
                        }
                    }
                }
            }
        }
    }
}
