//! Closed-form transceiver for a single-antenna base station.

use serde::{Deserialize, Serialize};

use crate::convergence::noise_term_a;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::{ChannelMatrix, SystemConfig};
use crate::privacy::{phi_constant, TransceiverDesign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `T ≥ T₀`: the privacy constraint of the strictest device binds.
    NoiseLimited,
    /// `T < T₀`: the power budget of the weakest device binds.
    PowerLimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisoSolution {
    pub design: TransceiverDesign,
    pub t0_threshold: f64,
    pub regime: Regime,
}

/// Residuals of the optimality conditions; all are relative and nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub satisfied: bool,
    pub alignment: f64,
    pub power_violation: f64,
    pub dp_violation: f64,
    pub binding: f64,
    pub suboptimality: f64,
}

impl OptimalityReport {
    pub fn max_residual(&self) -> f64 {
        self.alignment.max(self.power_violation).max(self.dp_violation).max(self.binding).max(self.suboptimality)
    }
}

pub const OPTIMALITY_TOL: f64 = 1e-8;

fn require_single_antenna(channel: &ChannelMatrix) -> Result<()> {
    if channel.num_antennas() != 1 {
        return Err(Error::InvalidArgument(format!("closed form requires N = 1, got N = {}", channel.num_antennas())));
    }
    Ok(())
}

fn phis(cfg: &SystemConfig) -> Result<Vec<f64>> {
    (0..cfg.num_devices).map(|m| phi_constant(cfg, m)).collect()
}

fn gains(channel: &ChannelMatrix) -> Result<Vec<f64>> {
    channel
        .columns()
        .iter()
        .enumerate()
        .map(|(m, h)| {
            let g = h[0].norm_sqr();
            if g > 0.0 {
                Ok(g)
            } else {
                Err(Error::DegenerateChannel { device: m })
            }
        })
        .collect()
}

/// `T₀ = σ²/(P·max φ)·max K_m²/|h_m|²`; infinite without privacy targets.
pub fn t0_threshold(cfg: &SystemConfig, channel: &ChannelMatrix) -> Result<f64> {
    require_single_antenna(channel)?;
    let phi_max = phis(cfg)?.into_iter().fold(0.0, f64::max);
    if phi_max == 0.0 {
        return Ok(f64::INFINITY);
    }
    let g = gains(channel)?;
    let worst = cfg.samples_per_device.iter().zip(&g).map(|(&k, &g)| (k * k) as f64 / g).fold(0.0, f64::max);
    Ok(cfg.noise_var() / (cfg.max_power * phi_max) * worst)
}

/// Largest η compatible with both constraint families for given `s2`.
pub fn max_feasible_eta(cfg: &SystemConfig, channel: &ChannelMatrix, s2: &[f64]) -> Result<f64> {
    require_single_antenna(channel)?;
    let g = gains(channel)?;
    let phi = phis(cfg)?;
    let l2 = cfg.clip_level * cfg.clip_level;
    let t = cfg.rounds as f64;
    let noise: f64 = g.iter().zip(s2).map(|(g, s)| g * s * s).sum::<f64>() + cfg.noise_var();
    let mut eta = f64::INFINITY;
    for m in 0..g.len() {
        let k2 = (cfg.samples_per_device[m] as f64).powi(2);
        let headroom = cfg.max_power - s2[m] * s2[m];
        if headroom <= 0.0 {
            return Err(Error::Infeasible(format!("device {m} has no power left for its gradient")));
        }
        eta = eta.min(headroom * g[m] / (l2 * k2));
        if phi[m] > 0.0 {
            eta = eta.min(noise / (l2 * t * phi[m]));
        }
    }
    Ok(eta)
}

/// Gradient scalars `s1_m = √η·L·K_m·h̄_m/|h_m|²` for a single antenna.
pub fn aligned_scalars(cfg: &SystemConfig, channel: &ChannelMatrix, eta: f64) -> Vec<C64> {
    channel
        .columns()
        .iter()
        .zip(&cfg.samples_per_device)
        .map(|(h, &k)| h[0].conj() * (eta.sqrt() * cfg.clip_level * k as f64 / h[0].norm_sqr()))
        .collect()
}

pub fn miso_optimal_design(cfg: &SystemConfig, channel: &ChannelMatrix) -> Result<MisoSolution> {
    require_single_antenna(channel)?;
    channel.check_matches(cfg)?;
    let g = gains(channel)?;
    let phi_max = phis(cfg)?.into_iter().fold(0.0, f64::max);
    let t0 = t0_threshold(cfg, channel)?;
    let l2 = cfg.clip_level * cfg.clip_level;
    let (regime, eta) = if (cfg.rounds as f64) >= t0 {
        (Regime::NoiseLimited, cfg.noise_var() / (l2 * cfg.rounds as f64 * phi_max))
    } else {
        let min_ratio =
            g.iter().zip(&cfg.samples_per_device).map(|(&g, &k)| g / (k * k) as f64).fold(f64::INFINITY, f64::min);
        (Regime::PowerLimited, cfg.max_power / l2 * min_ratio)
    };
    let one = vec![C64::new(1.0, 0.0)];
    let design = TransceiverDesign {
        s1: aligned_scalars(cfg, channel, eta),
        s2: vec![0.0; cfg.num_devices],
        eta,
        f0: one.clone(),
        extractors: vec![one; cfg.num_devices],
    };
    Ok(MisoSolution { design, t0_threshold: t0, regime })
}

/// Checks phase alignment, feasibility, that η sits on the binding constraint
/// for its `s2`, and that the objective attains the closed-form optimum.
pub fn check_optimality_conditions(
    sol: &MisoSolution,
    cfg: &SystemConfig,
    channel: &ChannelMatrix,
) -> Result<OptimalityReport> {
    require_single_antenna(channel)?;
    let d = &sol.design;
    let g = gains(channel)?;
    let phi = phis(cfg)?;
    let l = cfg.clip_level;
    let t = cfg.rounds as f64;

    let mut alignment: f64 = 0.0;
    let mut power_violation: f64 = 0.0;
    let mut dp_violation: f64 = 0.0;
    let noise: f64 = g.iter().zip(&d.s2).map(|(g, s)| g * s * s).sum::<f64>() + cfg.noise_var();
    for m in 0..g.len() {
        let k = cfg.samples_per_device[m] as f64;
        let h = channel.column(m)[0];
        let received = (d.f0[0].conj() * h * d.s1[m]) / (d.eta.sqrt() * l);
        alignment = alignment.max((received - C64::new(k, 0.0)).norm() / k);
        power_violation = power_violation.max((d.power(m) - cfg.max_power).max(0.0) / cfg.max_power);
        let leak = g[m] * d.s1[m].norm_sqr() * t * phi[m] / (k * k);
        dp_violation = dp_violation.max((leak - noise).max(0.0) / noise);
    }

    let eta_star = max_feasible_eta(cfg, channel, &d.s2)?;
    let binding = (d.eta - eta_star).abs() / eta_star;
    let optimum = miso_optimal_design(cfg, channel)?;
    let a_opt = noise_term_a(&optimum.design, channel, cfg);
    let a = noise_term_a(d, channel, cfg);
    let suboptimality = ((a - a_opt) / a_opt).max(0.0);

    let mut report =
        OptimalityReport { satisfied: false, alignment, power_violation, dp_violation, binding, suboptimality };
    report.satisfied = report.max_residual() <= OPTIMALITY_TOL;
    Ok(report)
}
