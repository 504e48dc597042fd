//! Synthetic heteroscedastic models and sample generation.
//!
//! Five designs on the unit cube. Models 1-3 add Gaussian noise, models 4-5
//! add bounded noise uniform on [-sqrt(3), sqrt(3)] (unit variance). Model 1
//! comes in two noise scales.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    M1a025,
    M1a1,
    M2,
    M3,
    M4,
    M5,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::M1a025,
        ModelId::M1a1,
        ModelId::M2,
        ModelId::M3,
        ModelId::M4,
        ModelId::M5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::M1a025 => "m1a025",
            ModelId::M1a1 => "m1a1",
            ModelId::M2 => "m2",
            ModelId::M3 => "m3",
            ModelId::M4 => "m4",
            ModelId::M5 => "m5",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                let valid: Vec<_> = ModelId::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!(
                    "unknown model {s:?}; valid models: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Uniform on [-sqrt(3), sqrt(3)].
    UniformSqrt3,
}

/// Number of active coordinates of the sparse linear model.
pub const M3_SPARSITY: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: ModelId,
    pub dim: usize,
    pub noise_kind: NoiseKind,
    pub sparsity: Option<usize>,
    pub scale_a: Option<f64>,
}

impl ModelSpec {
    pub fn new(model_id: ModelId) -> Self {
        let (dim, noise_kind, sparsity, scale_a) = match model_id {
            ModelId::M1a025 => (3, NoiseKind::Gaussian, None, Some(0.25)),
            ModelId::M1a1 => (3, NoiseKind::Gaussian, None, Some(1.0)),
            ModelId::M2 => (10, NoiseKind::Gaussian, None, None),
            ModelId::M3 => (50, NoiseKind::Gaussian, Some(M3_SPARSITY), None),
            ModelId::M4 => (2, NoiseKind::UniformSqrt3, None, None),
            ModelId::M5 => (3, NoiseKind::UniformSqrt3, None, None),
        };
        Self {
            model_id,
            dim,
            noise_kind,
            sparsity,
            scale_a,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "{} expects {} features, got {}",
                self.model_id,
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn f_star(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.f_star_unchecked(x))
    }

    pub fn sigma2_star(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.sigma2_star_unchecked(x))
    }

    /// Regression function; `x` must have `self.dim` entries.
    pub(crate) fn f_star_unchecked(&self, x: &[f64]) -> f64 {
        match self.model_id {
            ModelId::M1a025 | ModelId::M1a1 => 0.1 * x[0].cos() + (-x[2] * x[2]).exp(),
            ModelId::M2 => {
                0.1 + (-x[0] * x[0]).exp() + 0.2 * (x[1] + x[2] + x[3] + 0.1 * x[4] * x[4]).sin()
            }
            ModelId::M3 => x[..self.sparsity.unwrap_or(M3_SPARSITY)].iter().sum(),
            ModelId::M4 => x[0] + (-x[1] * x[1]).exp(),
            ModelId::M5 => x[0] + x[1] + 0.5 * x[2].cos(),
        }
    }

    pub(crate) fn sigma2_star_unchecked(&self, x: &[f64]) -> f64 {
        match self.model_id {
            ModelId::M1a025 | ModelId::M1a1 => {
                let a = self.scale_a.unwrap_or(1.0);
                a * (0.1
                    + (-7.0 * (x[0] - 0.2).powi(2)).exp()
                    + (-10.0 * (x[1] - 0.5).powi(2)).exp()
                    + (-50.0 * (x[2] - 0.9).powi(2)).exp())
            }
            ModelId::M2 => {
                let s = x[7] + x[8] + x[9] - 0.5;
                let inner = 0.5
                    + (x[0] * (1.0 - x[1])).sqrt()
                    + 0.8 * x[2] * x[3]
                    + x[4] * x[5] * x[6] * x[6]
                    + 0.9 * (-500.0 * s * s).exp();
                0.5 * inner * inner
            }
            ModelId::M3 => {
                let inner = 0.3 + oscillation(x[0], x[1]) + 0.5 * x[2] + x[3];
                0.5 * inner * inner
            }
            ModelId::M4 => 0.01 + x[0] * (-(x[1] - 0.9).powi(2)).exp(),
            ModelId::M5 => {
                let inner = 0.3 + oscillation(x[0], x[1]) + x[2];
                inner * inner
            }
        }
    }

    fn noise(&self, rng: &mut Rng) -> f64 {
        match self.noise_kind {
            NoiseKind::Gaussian => rng.standard_normal(),
            NoiseKind::UniformSqrt3 => rng.uniform_range(-SQRT3, SQRT3),
        }
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn oscillation(x1: f64, x2: f64) -> f64 {
    (x1 * (1.0 - x1)).sqrt() * (2.1 * PI / (x2 + 0.05)).sin()
}

pub fn eval_f_star(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    spec.f_star(x)
}

pub fn eval_sigma2_star(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    spec.sigma2_star(x)
}

/// `n` i.i.d. feature rows, uniform on the unit cube, flattened row-major.
pub fn sample_features(spec: &ModelSpec, n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n * spec.dim).map(|_| rng.uniform()).collect()
}

fn generate_impl(spec: &ModelSpec, n: usize, rng: &mut Rng, noisy: bool) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::input("sample size must be at least 1"));
    }
    let mut x = Vec::with_capacity(n * spec.dim);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        x.extend((0..spec.dim).map(|_| rng.uniform()));
        let row = &x[start..];
        let eps = spec.noise(rng);
        let mut value = spec.f_star_unchecked(row);
        if noisy {
            value += spec.sigma2_star_unchecked(row).sqrt() * eps;
        }
        y.push(value);
    }
    Dataset::new(x, y, spec.dim)
}

/// Draw `n` labeled observations `Y = f*(X) + sigma(X) * noise`.
pub fn generate(spec: &ModelSpec, n: usize, rng: &mut Rng) -> Result<Dataset> {
    generate_impl(spec, n, rng, true)
}

/// Diagnostic variant with the noise term removed (`Y = f*(X)`). Consumes the
/// random stream exactly like [`generate`], so features coincide for equal seeds.
pub fn generate_noiseless(spec: &ModelSpec, n: usize, rng: &mut Rng) -> Result<Dataset> {
    generate_impl(spec, n, rng, false)
}

/// Randomly permute the rows and cut them into consecutive disjoint parts.
pub fn split(data: &Dataset, sizes: &[usize], rng: &mut Rng) -> Result<Vec<Dataset>> {
    let total: usize = sizes.iter().sum();
    if total > data.len() {
        return Err(Error::input(format!(
            "split sizes sum to {total} but the dataset has {} rows",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &size in sizes {
        parts.push(data.subset(&order[start..start + size]));
        start += size;
    }
    Ok(parts)
}
