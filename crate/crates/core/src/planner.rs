//! Alternating transceiver optimisation: MMSE extractors, rank-one SDP for the
//! combiner and normaliser, LP for artificial-noise powers, aligned scalars.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conic::{self, LpProblem, SdpSubproblem};
use crate::convergence::noise_term_a;
use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::model::{ChannelMatrix, Epsilon, SystemConfig};
use crate::privacy::{self, DpReport, TransceiverDesign};

/// Below this `|f₀ᴴh_m|` the aligned scalar is undefined.
pub const DEGENERATE_GAIN: f64 = 1e-12;
const PERTURBATION_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerOptions {
    /// Enforce the per-device privacy targets.
    pub with_dp: bool,
    /// Keep `s2 = 0` throughout instead of solving the noise-power LP.
    pub zero_artificial_noise: bool,
    /// Relative tolerance handed to the conic solvers.
    pub tol: f64,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        PlannerOptions { with_dp: true, zero_artificial_noise: false, tol: conic::DEFAULT_TOL }
    }
}

/// Starting point of the alternation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerInit {
    pub s1: Vec<C64>,
    pub s2: Vec<f64>,
    pub f0: Vec<C64>,
}

impl PlannerInit {
    /// `s1_m ~ U[0, √P]`, `s2_m = √(P − s1_m²)`, `f₀ = h₁/‖h₁‖`.
    pub fn random<R: Rng + ?Sized>(cfg: &SystemConfig, channel: &ChannelMatrix, rng: &mut R) -> Result<Self> {
        let p = cfg.max_power;
        let s1: Vec<f64> = (0..channel.num_devices()).map(|_| rng.random::<f64>() * p.sqrt()).collect();
        let s2 = s1.iter().map(|s| (p - s * s).max(0.0).sqrt()).collect();
        let f0 = linalg::normalized(channel.column(0)).ok_or(Error::DegenerateChannel { device: 0 })?;
        Ok(PlannerInit { s1: s1.into_iter().map(|s| C64::new(s, 0.0)).collect(), s2, f0 })
    }
}

/// Constraint residuals of a design; positive entries are violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `(leak − noise)/noise` per device, in the privacy constraint's form.
    pub dp: Vec<f64>,
    /// `(|s1|² + s2² − P)/P` per device.
    pub power: Vec<f64>,
    /// Largest deviation of a combiner or extractor norm from one.
    pub norm: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerTrace {
    /// Objective `A` after each outer iteration.
    pub objectives: Vec<f64>,
    /// Largest constraint residual after each outer iteration.
    pub residuals: Vec<f64>,
    /// Relative `tr F − ‖F‖₂` of each DC solve.
    pub trace_gaps: Vec<f64>,
    /// MM steps used by each DC solve.
    pub mm_iterations: Vec<usize>,
    pub early_stop_iteration: Option<usize>,
    pub best_iteration: usize,
    pub report: DpReport,
}

/// `s1_m = √η·L·K_m·conj(f₀ᴴh_m)/|f₀ᴴh_m|²`, which makes
/// `f₀ᴴh_m·s1_m/(√η·L) = K_m`.
pub fn s1_closed_form(eta: f64, f0: &[C64], channel: &ChannelMatrix, cfg: &SystemConfig) -> Result<Vec<C64>> {
    let scale = eta.sqrt() * cfg.clip_level;
    (0..channel.num_devices())
        .map(|m| {
            let g = linalg::inner(f0, channel.column(m));
            if g.norm() < DEGENERATE_GAIN {
                return Err(Error::DegenerateChannel { device: m });
            }
            Ok(g.conj() * (scale * cfg.samples_per_device[m] as f64 / g.norm_sqr()))
        })
        .collect()
}

pub fn feasibility_check(
    design: &TransceiverDesign,
    cfg: &SystemConfig,
    channel: &ChannelMatrix,
) -> Result<FeasibilityReport> {
    let t = cfg.rounds as f64;
    let mut dp = Vec::with_capacity(channel.num_devices());
    let mut power = Vec::with_capacity(channel.num_devices());
    for m in 0..channel.num_devices() {
        let f = &design.extractors[m];
        let phi = privacy::phi_constant(cfg, m)?;
        let k = cfg.samples_per_device[m] as f64;
        let noise = privacy::masking_noise(f, design, channel, cfg.noise_var());
        let leak = linalg::gain(f, channel.column(m)) * design.s1[m].norm_sqr() * t * phi / (k * k);
        dp.push((leak - noise) / noise);
        power.push((design.power(m) - cfg.max_power) / cfg.max_power);
    }
    let norm = std::iter::once(&design.f0)
        .chain(&design.extractors)
        .map(|f| (linalg::norm(f) - 1.0).abs())
        .fold(0.0, f64::max);
    let max_residual = dp.iter().chain(&power).copied().fold(norm, f64::max);
    Ok(FeasibilityReport { dp, power, norm, max_residual })
}

struct Context<'a> {
    cfg: &'a SystemConfig,
    channel: &'a ChannelMatrix,
    phi: Vec<f64>,
    tol: f64,
}

impl Context<'_> {
    fn devices(&self) -> usize {
        self.channel.num_devices()
    }

    fn k(&self, m: usize) -> f64 {
        self.cfg.samples_per_device[m] as f64
    }

    fn l2(&self) -> f64 {
        self.cfg.clip_level * self.cfg.clip_level
    }

    fn t(&self) -> f64 {
        self.cfg.rounds as f64
    }

    /// Lower bounds on `h_mᴴFh_m`: the larger of the privacy and power families.
    fn sdp_bounds(&self, extractors: &[Vec<C64>], s2: &[f64], s1: &[C64]) -> Result<Vec<f64>> {
        let probe = TransceiverDesign {
            s1: s1.to_vec(),
            s2: s2.to_vec(),
            eta: 1.0,
            f0: extractors[0].clone(),
            extractors: extractors.to_vec(),
        };
        (0..self.devices())
            .map(|m| {
                let headroom = self.cfg.max_power - s2[m] * s2[m];
                if headroom <= 0.0 {
                    return Err(Error::Infeasible(format!("device {m} spends its whole budget on noise")));
                }
                let power = self.k(m).powi(2) * self.l2() / headroom;
                let dp = if self.phi[m] > 0.0 {
                    let f = &extractors[m];
                    let noise = privacy::masking_noise(f, &probe, self.channel, self.cfg.noise_var());
                    linalg::gain(f, self.channel.column(m)) * self.t() * self.l2() * self.phi[m] / noise
                } else {
                    0.0
                };
                Ok(power.max(dp))
            })
            .collect()
    }

    /// Largest η meeting every constraint for fixed combiner, noise and extractors.
    fn max_eta(&self, f0: &[C64], s2: &[f64], extractors: &[Vec<C64>]) -> f64 {
        let probe = TransceiverDesign {
            s1: vec![C64::new(0.0, 0.0); self.devices()],
            s2: s2.to_vec(),
            eta: 1.0,
            f0: f0.to_vec(),
            extractors: extractors.to_vec(),
        };
        let mut eta = f64::INFINITY;
        for m in 0..self.devices() {
            let g0 = linalg::gain(f0, self.channel.column(m));
            let headroom = (self.cfg.max_power - s2[m] * s2[m]).max(0.0);
            eta = eta.min(headroom * g0 / (self.k(m).powi(2) * self.l2()));
            if self.phi[m] > 0.0 {
                let f = &extractors[m];
                let noise = privacy::masking_noise(f, &probe, self.channel, self.cfg.noise_var());
                let gm = linalg::gain(f, self.channel.column(m));
                if gm > 0.0 {
                    eta = eta.min(noise * g0 / (gm * self.t() * self.l2() * self.phi[m]));
                }
            }
        }
        eta
    }

    fn noise_lp(&self, f0: &[C64], eta: f64, extractors: &[Vec<C64>]) -> Result<Vec<f64>> {
        let m = self.devices();
        let h = self.channel;
        let g0: Vec<f64> = (0..m).map(|j| linalg::gain(f0, h.column(j))).collect();
        let lp = LpProblem {
            costs: g0.clone(),
            constraint_matrix: DMatrix::from_fn(m, m, |i, j| {
                if self.phi[i] > 0.0 {
                    linalg::gain(&extractors[i], h.column(j))
                } else {
                    0.0
                }
            }),
            rhs: (0..m)
                .map(|i| {
                    if self.phi[i] > 0.0 {
                        linalg::gain(&extractors[i], h.column(i)) * self.t() * self.l2() * self.phi[i] * eta / g0[i]
                            - self.cfg.noise_var()
                    } else {
                        -self.cfg.noise_var()
                    }
                })
                .collect(),
            box_upper: (0..m).map(|j| self.cfg.max_power - self.k(j).powi(2) * self.l2() * eta / g0[j]).collect(),
        };
        let sol = conic::solve_lp(&lp, self.tol)?;
        Ok(sol.x.iter().map(|x| x.max(0.0).sqrt()).collect())
    }
}

/// Runs the alternating optimisation for at most `cfg.outer_iters` outer
/// iterations, stopping early once `|A − A_prev| ≤ cfg.early_stop_tol`.
///
/// Every accepted iterate ends with MMSE extractors matched to its noise
/// powers, the largest feasible η for those extractors and aligned `s1`; the
/// iterate with the smallest `A` is returned.
pub fn optimize_transceivers(
    cfg: &SystemConfig,
    channel: &ChannelMatrix,
    init: &PlannerInit,
    opts: &PlannerOptions,
) -> Result<(TransceiverDesign, PlannerTrace)> {
    cfg.validate()?;
    channel.check_matches(cfg)?;
    let mut cfg = cfg.clone();
    if !opts.with_dp {
        cfg.dp_epsilon = vec![Epsilon::NONE; cfg.num_devices];
    }
    let phi = (0..cfg.num_devices).map(|m| privacy::phi_constant(&cfg, m)).collect::<Result<Vec<_>>>()?;
    let ctx = Context { cfg: &cfg, channel, phi, tol: opts.tol };
    let devices = ctx.devices();
    if init.s1.len() != devices || init.s2.len() != devices || init.f0.len() != channel.num_antennas() {
        return Err(Error::InvalidArgument("initial point has the wrong shape".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut design = TransceiverDesign {
        s1: init.s1.clone(),
        s2: if opts.zero_artificial_noise { vec![0.0; devices] } else { init.s2.clone() },
        eta: 1.0,
        f0: linalg::normalized(&init.f0).ok_or_else(|| Error::InvalidArgument("initial f0 is zero".into()))?,
        extractors: vec![init.f0.clone(); devices],
    };
    let mut direction: Option<Vec<C64>> = None;
    let mut best: Option<(f64, TransceiverDesign)> = None;
    let mut trace = PlannerTrace {
        objectives: Vec::new(),
        residuals: Vec::new(),
        trace_gaps: Vec::new(),
        mm_iterations: Vec::new(),
        early_stop_iteration: None,
        best_iteration: 0,
        report: DpReport { phi: vec![], sensitivity: vec![], eps_bs: vec![], feasible: vec![] },
    };

    for iter in 0..cfg.outer_iters {
        let extractors = privacy::mmse_extractors(channel, &design, &cfg)?;

        let bounds = ctx.sdp_bounds(&extractors, &design.s2, &design.s1)?;
        let sub = SdpSubproblem {
            channels: channel.columns().to_vec(),
            noise_weights: design.s2.iter().map(|s| s * s).collect(),
            noise_var: cfg.noise_var(),
            lower_bounds: bounds.clone(),
            penalty: cfg.penalty,
            direction: None,
        };
        let dc = conic::solve_dc_sdp(&sub, cfg.penalty, cfg.mm_iters, direction.as_deref(), opts.tol)?;
        trace.trace_gaps.push(dc.relative_trace_gap());
        trace.mm_iterations.push(dc.iterations);
        let f0 = nondegenerate(channel, conic::principal_eigvec(&dc.f), &mut rng)?;
        direction = Some(f0.clone());
        let eta = (0..devices).map(|m| linalg::gain(&f0, channel.column(m)) / bounds[m]).fold(f64::INFINITY, f64::min);

        let s2 = if opts.zero_artificial_noise || ctx.phi.iter().all(|&p| p == 0.0) {
            vec![0.0; devices]
        } else {
            ctx.noise_lp(&f0, eta, &extractors)?
        };

        let s1 = s1_closed_form(eta, &f0, channel, &cfg)?;
        let mut next = TransceiverDesign { s1, s2, eta, f0, extractors };

        // Re-match the extractors to the new noise powers and move η onto the
        // tightest constraint.
        next.extractors = privacy::mmse_extractors(channel, &next, &cfg)?;
        next.eta = ctx.max_eta(&next.f0, &next.s2, &next.extractors);
        if !(next.eta > 0.0 && next.eta.is_finite()) {
            return Err(Error::Infeasible("no positive aggregation normaliser is feasible".into()));
        }
        next.s1 = s1_closed_form(next.eta, &next.f0, channel, &cfg)?;

        let a = noise_term_a(&next, channel, &cfg);
        let residual = feasibility_check(&next, &cfg, channel)?.max_residual;
        trace.objectives.push(a);
        trace.residuals.push(residual);
        if best.as_ref().is_none_or(|(b, _)| a < *b) {
            best = Some((a, next.clone()));
            trace.best_iteration = iter;
        }
        design = next;
        if iter > 0 {
            let prev = trace.objectives[iter - 1];
            if (a - prev).abs() <= cfg.early_stop_tol {
                trace.early_stop_iteration = Some(iter);
                break;
            }
        }
    }

    let (_, design) = best.expect("at least one outer iteration");
    trace.report = privacy::dp_report(&design, channel, &cfg)?;
    Ok((design, trace))
}

/// Perturbs `f0` slightly and renormalises it, up to a few times, while it
/// is orthogonal to some channel.
fn nondegenerate(channel: &ChannelMatrix, mut f0: Vec<C64>, rng: &mut ChaCha8Rng) -> Result<Vec<C64>> {
    let mut attempt = 0;
    loop {
        let Some(device) =
            (0..channel.num_devices()).find(|&m| linalg::inner(&f0, channel.column(m)).norm() < DEGENERATE_GAIN)
        else {
            return Ok(f0);
        };
        if attempt == PERTURBATION_RETRIES {
            return Err(Error::DegenerateChannel { device });
        }
        attempt += 1;
        let noisy: Vec<C64> = f0
            .iter()
            .map(|z| z + C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * 1e-6)
            .collect();
        f0 = linalg::normalized(&noisy).ok_or(Error::DegenerateChannel { device })?;
        linalg::fix_phase(&mut f0);
    }
}
