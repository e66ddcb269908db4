//! Over-the-air federated training: masked transmission, superposition at the
//! receiver, combining, extraction and the global gradient step.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::{ChannelMatrix, RidgeDataset, SystemConfig};
use crate::privacy::TransceiverDesign;

/// A run is declared divergent once the loss exceeds this multiple of `F(w₀)`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    /// `F(w_t)` for `t = 0..=T`.
    pub loss_trajectory: Vec<f64>,
    /// `(F(w_t) − F(w*))/F(w*)` for `t = 0..=T`.
    pub gap_trajectory: Vec<f64>,
    /// `‖e_t‖ = ‖g_t − ĝ_t‖/K` for `t = 0..T`.
    pub gradient_error_norms: Vec<f64>,
    pub final_w: DVector<f64>,
    /// Set when the loss blew up; trajectories are NaN-padded after that round.
    pub diverged: bool,
}

impl TrainResult {
    /// Writes `round,loss,gap` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "loss", "gap"])?;
        for (t, (l, g)) in self.loss_trajectory.iter().zip(&self.gap_trajectory).enumerate() {
            w.write_record([t.to_string(), l.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_shapes(design: &TransceiverDesign, grads: &[DVector<f64>], channel: &ChannelMatrix) -> Result<usize> {
    let m = channel.num_devices();
    if design.s1.len() != m || design.s2.len() != m || grads.len() != m {
        return Err(Error::InvalidArgument(format!("expected {m} devices in design and gradients")));
    }
    let d = grads.first().map_or(0, |g| g.len());
    if grads.iter().any(|g| g.len() != d) {
        return Err(Error::InvalidArgument("local gradients differ in length".into()));
    }
    Ok(d)
}

/// Received block `y[i] = Σ_m h_m(s1_m·g_m[i]/L + s2_m·n_m[i]) + z[i]`, one
/// column per gradient entry.
///
/// `n_m` is real standard normal and `z` is circularly symmetric complex
/// Gaussian with variance `σ_z²` per antenna.
pub fn transmit_round<R: Rng + ?Sized>(
    design: &TransceiverDesign,
    grads: &[DVector<f64>],
    rng: &mut R,
    cfg: &SystemConfig,
    channel: &ChannelMatrix,
) -> Result<DMatrix<C64>> {
    let d = check_shapes(design, grads, channel)?;
    let n = channel.num_antennas();
    let z_std = (cfg.noise_var() / 2.0).sqrt();
    let mut block = DMatrix::from_fn(n, d, |_, _| {
        if z_std > 0.0 {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * z_std, im * z_std)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    for (m, g) in grads.iter().enumerate() {
        let h = channel.column(m);
        let s1 = design.s1[m] / cfg.clip_level;
        let s2 = design.s2[m];
        for i in 0..d {
            let noise: f64 = if s2 != 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            let x = s1 * g[i] + s2 * noise;
            for (a, hm) in h.iter().enumerate() {
                block[(a, i)] += hm * x;
            }
        }
    }
    Ok(block)
}

/// Expected per-symbol transmit power `|s1|²‖g‖²/(dL²) + s2²` of device `m`.
pub fn expected_transmit_power(design: &TransceiverDesign, grad: &DVector<f64>, m: usize, cfg: &SystemConfig) -> f64 {
    let d = grad.len().max(1) as f64;
    design.s1[m].norm_sqr() * grad.norm_squared() / (d * cfg.clip_level * cfg.clip_level) + design.s2[m] * design.s2[m]
}

/// `r[i] = fᴴy[i]`.
pub fn extract(block: &DMatrix<C64>, f: &[C64]) -> Vec<C64> {
    block.column_iter().map(|col| f.iter().zip(col.iter()).map(|(a, y)| a.conj() * y).sum()).collect()
}

/// `f₀ᴴy[i]/√η` before the real part is taken.
pub fn aggregate_complex(block: &DMatrix<C64>, f0: &[C64], eta: f64) -> Vec<C64> {
    let scale = 1.0 / eta.sqrt();
    extract(block, f0).into_iter().map(|r| r * scale).collect()
}

/// Real part of `f₀ᴴy[i]/√η`.
pub fn aggregate(block: &DMatrix<C64>, f0: &[C64], eta: f64) -> DVector<f64> {
    let est = aggregate_complex(block, f0, eta);
    DVector::from_iterator(est.len(), est.iter().map(|z| z.re))
}

/// `Σ_m K_m·g_m`.
pub fn ideal_aggregate(grads: &[DVector<f64>], cfg: &SystemConfig) -> DVector<f64> {
    let d = grads.first().map_or(0, |g| g.len());
    grads.iter().zip(&cfg.samples_per_device).fold(DVector::zeros(d), |acc, (g, &k)| acc + g * k as f64)
}

/// Runs `T` rounds of over-the-air gradient descent from `w₀ = 0` with step
/// `w ← w − (λ/K)ĝ`.
pub fn train<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    channel: &ChannelMatrix,
    design: &TransceiverDesign,
    ds: &RidgeDataset,
    rng: &mut R,
) -> Result<TrainResult> {
    if ds.dim() != cfg.model_dim || ds.partition.len() != channel.num_devices() {
        return Err(Error::InvalidArgument("dataset does not match the configuration".into()));
    }
    let rounds = cfg.rounds;
    let k = cfg.total_samples() as f64;
    let step = cfg.learning_rate() / k;
    let optimal_loss = ds.loss(&ds.exact_minimizer());
    let gap_of = |loss: f64| (loss - optimal_loss) / optimal_loss;

    let mut w = DVector::zeros(ds.dim());
    let initial = ds.loss(&w);
    let mut loss_trajectory = vec![initial];
    let mut gap_trajectory = vec![gap_of(initial)];
    let mut gradient_error_norms = Vec::with_capacity(rounds);
    let mut diverged = false;

    for _ in 0..rounds {
        let grads: Vec<DVector<f64>> =
            (0..channel.num_devices()).map(|m| ds.local_gradient(m, &w, cfg.clip_level)).collect();
        let block = transmit_round(design, &grads, rng, cfg, channel)?;
        let estimate = aggregate(&block, &design.f0, design.eta);
        let error = (ideal_aggregate(&grads, cfg) - &estimate) / k;
        gradient_error_norms.push(error.norm());
        w.axpy(-step, &estimate, 1.0);
        let loss = ds.loss(&w);
        loss_trajectory.push(loss);
        gap_trajectory.push(gap_of(loss));
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial {
            diverged = true;
            break;
        }
    }
    loss_trajectory.resize(rounds + 1, f64::NAN);
    gap_trajectory.resize(rounds + 1, f64::NAN);
    gradient_error_norms.resize(rounds, f64::NAN);
    Ok(TrainResult { loss_trajectory, gap_trajectory, gradient_error_norms, final_w: w, diverged })
}

/// `(F(w_T) − F(w*))/F(w*)` re-evaluated from `final_w`.
pub fn normalized_gap(result: &TrainResult, ds: &RidgeDataset) -> Result<f64> {
    let optimal_loss = ds.loss(&ds.exact_minimizer());
    if optimal_loss == 0.0 {
        return Err(Error::InvalidArgument("optimal loss is zero; the normalised gap is undefined".into()));
    }
    Ok((ds.loss(&result.final_w) - optimal_loss) / optimal_loss)
}
