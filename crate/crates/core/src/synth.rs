//! Synthetic dataset with signal in both feature blocks.
//!
//! Features are i.i.d. standard normal. The latent score is
//! `s = b_tab . x + b_rich . w + noise`, where each weight block is drawn once
//! from `weight_seed` and rescaled to unit norm, so both blocks contribute
//! unit variance to `s`. Binary labels threshold `s` at its
//! `(1 - positive_share)`-quantile.

use std::fs::File;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{binarization_threshold, Dataset, FeatureSchema, Row, TaskSpec};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub d_tab: usize,
    pub d_rich: usize,
    pub noise_sd: f64,
    pub positive_share: f64,
    /// Keep the continuous latent score as a regression label.
    pub continuous: bool,
    pub weight_seed: u64,
    pub data_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 22_895,
            d_tab: 8,
            d_rich: 16,
            noise_sd: 0.5,
            positive_share: 0.75,
            continuous: false,
            weight_seed: 0,
            data_seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.d_tab == 0 {
            return Err(Error::InvalidConfig("d_tab must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_sd must be finite and >= 0, got {}",
                self.noise_sd
            )));
        }
        if !self.continuous && !(self.positive_share > 0.0 && self.positive_share < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "positive_share must be in (0, 1), got {}",
                self.positive_share
            )));
        }
        Ok(())
    }
}

/// Generating weights and latent scores, kept for oracle analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta_tab: Vec<f64>,
    pub beta_rich: Vec<f64>,
    /// Latent score per row, in row order (row `i` has id `i`).
    pub latent: Vec<f64>,
    /// Binarization threshold; `None` for the continuous variant.
    pub threshold: Option<f64>,
}

impl GroundTruth {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(f)?)
    }
}

fn unit_normal_vector<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|b| b / norm).collect();
        }
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut wrng = seed::rng(cfg.weight_seed);
    let beta_tab = unit_normal_vector(cfg.d_tab, &mut wrng);
    let beta_rich = unit_normal_vector(cfg.d_rich, &mut wrng);

    let mut rng = seed::rng(cfg.data_seed);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rows = Vec::with_capacity(cfg.n);
    let mut latent = Vec::with_capacity(cfg.n);
    for id in 0..cfg.n as u64 {
        let x: Vec<f64> = (0..cfg.d_tab).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..cfg.d_rich).map(|_| rng.sample(StandardNormal)).collect();
        let eps = noise.sample(&mut rng);
        let s = dot(&beta_tab, &x) + dot(&beta_rich, &w) + eps;
        latent.push(s);
        rows.push(Row { id, x, w, y: s });
    }
    let schema = FeatureSchema {
        d_tab: cfg.d_tab,
        d_rich: cfg.d_rich,
    };

    if cfg.continuous {
        let d = Dataset::new(rows, TaskSpec::regression(), schema)?;
        return Ok((
            d,
            GroundTruth {
                beta_tab,
                beta_rich,
                latent,
                threshold: None,
            },
        ));
    }

    let t = binarization_threshold(&latent, cfg.positive_share)?;
    for r in &mut rows {
        r.y = if r.y > t { 1.0 } else { 0.0 };
    }
    let minority = if cfg.positive_share > 0.5 { 0 } else { 1 };
    let d = Dataset::new(rows, TaskSpec::binary(minority), schema)?;
    Ok((
        d,
        GroundTruth {
            beta_tab,
            beta_rich,
            latent,
            threshold: Some(t),
        },
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
