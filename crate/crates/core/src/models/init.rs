use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conve::{conve_shape, ConvParams};
use super::{ModelKind, ModelParams, ModelSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitFamily {
    Uniform,
    Normal,
    XavierUniform,
    XavierNormal,
}

/// Embedding initialisation. Normal mean and Xavier gains are fixed values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub family: InitFamily,
    pub normal_mean: f64,
    pub normal_std: f64,
    /// Lower bound of the symmetric uniform interval `[lower, -lower]`.
    pub uniform_lower: f64,
    pub xavier_uniform_gain: f64,
    pub xavier_normal_gain: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            family: InitFamily::Normal,
            normal_mean: 0.0,
            normal_std: 0.1,
            uniform_lower: -0.1,
            xavier_uniform_gain: 1.0,
            xavier_normal_gain: 1.0,
        }
    }
}

impl InitSpec {
    pub fn normal(std: f64) -> Self {
        InitSpec {
            family: InitFamily::Normal,
            normal_std: std,
            ..Default::default()
        }
    }

    pub fn uniform(lower: f64) -> Self {
        InitSpec {
            family: InitFamily::Uniform,
            uniform_lower: lower,
            ..Default::default()
        }
    }

    pub fn xavier_uniform() -> Self {
        InitSpec {
            family: InitFamily::XavierUniform,
            ..Default::default()
        }
    }

    pub fn xavier_normal() -> Self {
        InitSpec {
            family: InitFamily::XavierNormal,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.normal_std > 0.0) {
            return Err(Error::Config(format!(
                "normal std must be positive, got {}",
                self.normal_std
            )));
        }
        if !(self.uniform_lower < 0.0) {
            return Err(Error::Config(format!(
                "uniform lower bound must be negative, got {}",
                self.uniform_lower
            )));
        }
        Ok(())
    }

    fn fill(&self, rows: usize, cols: usize, fan: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
        match self.family {
            InitFamily::Uniform => {
                let b = -self.uniform_lower;
                uniform_table(rows, cols, b, rng)
            }
            InitFamily::XavierUniform => {
                let b = xavier_uniform_bound(self.xavier_uniform_gain, fan.0, fan.1);
                uniform_table(rows, cols, b, rng)
            }
            InitFamily::Normal => normal_table(rows, cols, self.normal_mean, self.normal_std, rng),
            InitFamily::XavierNormal => {
                let std = xavier_normal_std(self.xavier_normal_gain, fan.0, fan.1);
                normal_table(rows, cols, 0.0, std, rng)
            }
        }
    }
}

pub fn xavier_uniform_bound(gain: f64, fan_in: usize, fan_out: usize) -> f64 {
    gain * (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn xavier_normal_std(gain: f64, fan_in: usize, fan_out: usize) -> f64 {
    gain * (2.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_table(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

fn normal_table(rows: usize, cols: usize, mean: f64, std: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let dist = Normal::new(mean, std).expect("std validated positive");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Allocates and initializes all tables for `spec`.
///
/// `n_relations` counts base relations; reciprocal specs get twice as many rows.
/// Embedding tables use Xavier fans `(d, d)`; ConvE filter and projection weights are
/// always Xavier-uniform over their true fan-in/fan-out.
pub fn init_params(
    spec: &ModelSpec,
    n_entities: usize,
    n_relations: usize,
    init: &InitSpec,
    seed: u64,
) -> Result<ModelParams> {
    spec.validate()?;
    init.validate()?;
    if n_entities == 0 || n_relations == 0 {
        return Err(Error::Config("models need at least one entity and one relation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;
    let fan = (d, d);
    let rel_rows = if spec.reciprocal { 2 * n_relations } else { n_relations };
    let entities = init.fill(n_entities, spec.entity_width(), fan, &mut rng);
    let relations = init.fill(rel_rows, spec.relation_width(), fan, &mut rng);
    let normals = (spec.kind == ModelKind::TransH).then(|| init.fill(rel_rows, d, fan, &mut rng));
    let conv = (spec.kind == ModelKind::ConvE).then(|| {
        let (k1, k2) = conve_shape(d);
        let ks = spec.conv_kernel;
        let f = spec.conv_filters;
        let filter_bound = xavier_uniform_bound(1.0, ks * ks, f * ks * ks);
        let filter_bank = (0..f * ks * ks)
            .map(|_| rng.random_range(-filter_bound..filter_bound))
            .collect();
        let flat = f * 2 * k1 * k2;
        let projection = uniform_table(flat, d, xavier_uniform_bound(1.0, flat, d), &mut rng);
        ConvParams {
            filters: f,
            kernel: ks,
            k1,
            k2,
            filter_bank,
            projection,
        }
    });
    let mut params = ModelParams {
        spec: *spec,
        base_relations: n_relations,
        entities,
        relations,
        normals,
        conv,
    };
    params.renormalize();
    Ok(params)
}
