use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SystemConfig;
use crate::error::{Error, Result};

/// Variance of the additive measurement error in the synthetic outputs.
pub const MEASUREMENT_NOISE_VAR: f64 = 0.2;

/// Synthetic ridge-regression data partitioned over the devices.
///
/// The loss is `F(w) = (1/2K)‖v − Uw‖² + (reg/2)‖w‖²`. Each sample carries
/// an equal share of the regulariser so that device gradients weighted by
/// their sample counts add up to `K·∇F`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeDataset {
    pub inputs: DMatrix<f64>,
    pub outputs: DVector<f64>,
    pub partition: Vec<Range<usize>>,
    pub reg_coefficient: f64,
    pub w_true: DVector<f64>,
}

/// Draws a dataset with the default measurement-noise variance.
pub fn generate_ridge_dataset<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    reg_coefficient: f64,
    rng: &mut R,
) -> Result<RidgeDataset> {
    generate_ridge_dataset_with_noise(cfg, reg_coefficient, MEASUREMENT_NOISE_VAR, rng)
}

pub fn generate_ridge_dataset_with_noise<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    reg_coefficient: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<RidgeDataset> {
    if !(reg_coefficient > 0.0) {
        return Err(Error::InvalidArgument("reg_coefficient must be positive".into()));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidArgument("measurement noise variance must be >= 0".into()));
    }
    let d = cfg.model_dim;
    let k = cfg.total_samples();
    if k == 0 || cfg.samples_per_device.len() != cfg.num_devices {
        return Err(Error::InvalidConfig("samples_per_device does not match num_devices".into()));
    }

    let w_true = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut inputs = DMatrix::zeros(k, d);
    for row in 0..k {
        for col in 0..d {
            inputs[(row, col)] = rng.sample(StandardNormal);
        }
    }
    let noise = Normal::new(0.0, noise_var.sqrt()).expect("finite std");
    let clean = &inputs * &w_true;
    let outputs = DVector::from_fn(k, |i, _| {
        let n = if noise_var > 0.0 { noise.sample(rng) } else { 0.0 };
        clean[i] + n
    });

    let mut partition = Vec::with_capacity(cfg.num_devices);
    let mut start = 0;
    for &km in &cfg.samples_per_device {
        partition.push(start..start + km);
        start += km;
    }
    Ok(RidgeDataset { inputs, outputs, partition, reg_coefficient, w_true })
}

impl RidgeDataset {
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: DVector<f64>,
        partition: Vec<Range<usize>>,
        reg_coefficient: f64,
    ) -> Result<Self> {
        let k = inputs.nrows();
        if outputs.len() != k {
            return Err(Error::InvalidArgument("inputs and outputs disagree on K".into()));
        }
        if !(reg_coefficient > 0.0) {
            return Err(Error::InvalidArgument("reg_coefficient must be positive".into()));
        }
        let mut next = 0;
        for r in &partition {
            if r.start != next || r.end <= r.start {
                return Err(Error::InvalidArgument("partition must be a contiguous cover".into()));
            }
            next = r.end;
        }
        if next != k {
            return Err(Error::InvalidArgument("partition does not cover all samples".into()));
        }
        let d = inputs.ncols();
        Ok(RidgeDataset { inputs, outputs, partition, reg_coefficient, w_true: DVector::zeros(d) })
    }

    pub fn num_samples(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        let k = self.num_samples() as f64;
        let r = &self.outputs - &self.inputs * w;
        r.norm_squared() / (2.0 * k) + 0.5 * self.reg_coefficient * w.norm_squared()
    }

    /// Full-batch gradient `∇F(w)`.
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let k = self.num_samples() as f64;
        let r = &self.outputs - &self.inputs * w;
        -(self.inputs.transpose() * r) / k + w * self.reg_coefficient
    }

    /// Gradient of the `k`-th sample's loss including its regulariser share.
    pub fn sample_gradient(&self, k: usize, w: &DVector<f64>) -> DVector<f64> {
        let u = self.inputs.row(k);
        let resid = self.outputs[k] - (u * w)[0];
        DVector::from_fn(self.dim(), |i, _| -resid * u[i] + self.reg_coefficient * w[i])
    }

    /// `w* = (UᵀU + K·reg·I)⁻¹Uᵀv`.
    pub fn exact_minimizer(&self) -> DVector<f64> {
        let k = self.num_samples() as f64;
        let mut normal = self.inputs.transpose() * &self.inputs;
        for i in 0..self.dim() {
            normal[(i, i)] += k * self.reg_coefficient;
        }
        let rhs = self.inputs.transpose() * &self.outputs;
        normal.cholesky().expect("regularised normal matrix is positive definite").solve(&rhs)
    }

    /// Extreme eigenvalues `(μ, ω)` of the Hessian `(1/K)UᵀU + reg·I`.
    pub fn strong_convexity_params(&self) -> (f64, f64) {
        let h = self.hessian();
        let eig = nalgebra::SymmetricEigen::new(h);
        let mu = eig.eigenvalues.min().max(self.reg_coefficient);
        let omega = eig.eigenvalues.max().max(mu);
        (mu, omega)
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let k = self.num_samples() as f64;
        let mut h = self.inputs.transpose() * &self.inputs / k;
        for i in 0..self.dim() {
            h[(i, i)] += self.reg_coefficient;
        }
        h
    }

    /// Device `m`'s local gradient: per-sample gradients clipped to norm
    /// `√d·clip_level`, then averaged.
    pub fn local_gradient(&self, m: usize, w: &DVector<f64>, clip_level: f64) -> DVector<f64> {
        let range = self.partition[m].clone();
        let d = self.dim();
        let bound = (d as f64).sqrt() * clip_level;
        let count = range.len() as f64;
        let mut acc = DVector::zeros(d);
        let mut g = DVector::zeros(d);
        for k in range {
            let u = self.inputs.row(k);
            let resid = self.outputs[k] - (u * w)[0];
            for i in 0..d {
                g[i] = -resid * u[i] + self.reg_coefficient * w[i];
            }
            let scale = 1.0 / (g.norm() / bound).max(1.0);
            acc.axpy(scale, &g, 1.0);
        }
        acc / count
    }
}
