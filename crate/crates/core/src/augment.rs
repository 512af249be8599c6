//! Counterfactually augmented training data: observed labels plus generated
//! labels for the rows whose label was never observed.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bias::BiasedTrainSet;
use crate::data::{self, Dataset, FeatureSchema, Row, TaskSpec};
use crate::error::{Error, Result};
use crate::gan::CfLabels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Observed,
    Generated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Observed => "observed",
            Source::Generated => "generated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedDataset {
    rows: Vec<(Row, Source)>,
    task: TaskSpec,
    schema: FeatureSchema,
}

impl CorrectedDataset {
    pub fn rows(&self) -> &[(Row, Source)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn task(&self) -> TaskSpec {
        self.task
    }

    /// `(n_observed, n_generated)`.
    pub fn mixture(&self) -> (usize, usize) {
        let g = self.rows.iter().filter(|(_, s)| *s == Source::Generated).count();
        (self.rows.len() - g, g)
    }

    pub fn labels(&self) -> Vec<f64> {
        self.rows.iter().map(|(r, _)| r.y).collect()
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(
            self.rows.iter().map(|(r, _)| r.clone()).collect(),
            self.task,
            self.schema,
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(f)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(data::standard_header(self.schema, &["source"]))?;
        for (r, s) in &self.rows {
            w.write_record(data::row_record(r.id, &r.x, &r.w, Some(r.y), &[s.as_str().to_string()]))?;
        }
        w.flush().map_err(|e| Error::io("<corrected dataset writer>", e))?;
        Ok(())
    }
}

/// Union of the observed rows and the unobserved rows labeled by `cf`, in
/// the row order of `b`. Features pass through unchanged.
pub fn augment(b: &BiasedTrainSet, cf: &CfLabels) -> Result<CorrectedDataset> {
    let mut used = 0;
    let mut rows = Vec::with_capacity(b.len());
    for r in b.rows() {
        let (y, source) = match r.label {
            Some(y) => {
                if cf.get(r.id).is_some() {
                    return Err(Error::InvalidInput(format!(
                        "generated label for observed row {}",
                        r.id
                    )));
                }
                (y, Source::Observed)
            }
            None => {
                let y = cf.get(r.id).ok_or_else(|| {
                    Error::InvalidInput(format!("no generated label for unobserved row {}", r.id))
                })?;
                used += 1;
                (y, Source::Generated)
            }
        };
        b.task()
            .check_label(y)
            .map_err(|e| Error::InvalidInput(format!("row {}: {e}", r.id)))?;
        rows.push((
            Row {
                id: r.id,
                x: r.x.clone(),
                w: r.w.clone(),
                y,
            },
            source,
        ));
    }
    if used != cf.len() {
        return Err(Error::InvalidInput(format!(
            "{} generated labels refer to rows outside the training set",
            cf.len() - used
        )));
    }
    Ok(CorrectedDataset {
        rows,
        task: b.task(),
        schema: b.schema(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::BiasedRow;
    use std::collections::BTreeMap;

    fn set(labels: &[Option<f64>]) -> BiasedTrainSet {
        let rows = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| BiasedRow {
                id: i as u64 + 10,
                x: vec![i as f64],
                w: vec![],
                r: label.is_some(),
                label,
            })
            .collect();
        BiasedTrainSet::from_parts(rows, TaskSpec::binary(0), FeatureSchema { d_tab: 1, d_rich: 0 }, None)
            .unwrap()
    }

    fn cf(pairs: &[(u64, f64)]) -> CfLabels {
        CfLabels {
            labels: pairs.iter().copied().collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn fills_only_unobserved_rows() {
        let b = set(&[Some(1.0), None, Some(0.0), None]);
        let c = augment(&b, &cf(&[(11, 0.0), (13, 1.0)])).unwrap();
        assert_eq!(c.mixture(), (2, 2));
        assert_eq!(c.labels(), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.rows()[1].1, Source::Generated);
    }

    #[test]
    fn domain_mismatch() {
        let b = set(&[Some(1.0), None]);
        assert!(augment(&b, &cf(&[])).is_err());
        assert!(augment(&b, &cf(&[(11, 0.0), (99, 1.0)])).is_err());
        assert!(augment(&b, &cf(&[(10, 0.0), (11, 1.0)])).is_err());
        assert!(augment(&b, &cf(&[(11, 0.5)])).is_err());
    }
}
