//! Differential-privacy accounting at the base station.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::model::{ChannelMatrix, SystemConfig};

/// Relative slack allowed when comparing ε_BS against the device target.
pub const FEASIBILITY_RTOL: f64 = 1e-9;

/// Transceiver decision variables: gradient scalars, artificial-noise
/// magnitudes, aggregation normaliser, combiner and per-device extractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransceiverDesign {
    pub s1: Vec<C64>,
    pub s2: Vec<f64>,
    pub eta: f64,
    pub f0: Vec<C64>,
    pub extractors: Vec<Vec<C64>>,
}

impl TransceiverDesign {
    pub fn num_devices(&self) -> usize {
        self.s1.len()
    }

    /// Per-symbol transmit power `|s1|² + s2²` of device `m`.
    pub fn power(&self, m: usize) -> f64 {
        self.s1[m].norm_sqr() + self.s2[m] * self.s2[m]
    }

    /// Copy of the design with every extractor replaced by the combiner.
    pub fn with_combiner_extractors(&self) -> Self {
        let mut d = self.clone();
        d.extractors = vec![self.f0.clone(); self.num_devices()];
        d
    }

    /// Checks shapes, unit norms, η > 0, s2 ≥ 0 and per-device power.
    pub fn validate(&self, cfg: &SystemConfig, channel: &ChannelMatrix) -> Result<()> {
        let m = channel.num_devices();
        let n = channel.num_antennas();
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.s1.len() != m || self.s2.len() != m || self.extractors.len() != m {
            return bad(format!("design must describe {m} devices"));
        }
        if self.f0.len() != n || self.extractors.iter().any(|f| f.len() != n) {
            return bad(format!("combiner and extractors must have length {n}"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive and finite".into());
        }
        if (linalg::norm(&self.f0) - 1.0).abs() > 1e-9 {
            return bad("f0 must have unit norm".into());
        }
        for (i, f) in self.extractors.iter().enumerate() {
            if (linalg::norm(f) - 1.0).abs() > 1e-9 {
                return bad(format!("extractor {i} must have unit norm"));
            }
        }
        for i in 0..m {
            if !(self.s2[i] >= 0.0) || !self.s1[i].re.is_finite() || !self.s1[i].im.is_finite() {
                return bad(format!("device {i}: s1 must be finite and s2 nonnegative"));
            }
            if self.power(i) > cfg.max_power + 1e-9 {
                return bad(format!("device {i} exceeds the power budget"));
            }
        }
        Ok(())
    }
}

/// Per-device accounting summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpReport {
    pub phi: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub eps_bs: Vec<f64>,
    pub feasible: Vec<bool>,
}

impl DpReport {
    pub fn all_feasible(&self) -> bool {
        self.feasible.iter().all(|&f| f)
    }

    pub fn mean_eps_bs(&self) -> f64 {
        self.eps_bs.iter().sum::<f64>() / self.eps_bs.len() as f64
    }
}

/// `φ = 8·d·ln(1/δ)/ε²`, zero for ε = ∞.
pub fn phi_value(d: usize, delta: f64, eps: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    if eps.is_infinite() {
        return Ok(0.0);
    }
    Ok(8.0 * d as f64 * (1.0 / delta).ln() / (eps * eps))
}

pub fn phi_constant(cfg: &SystemConfig, m: usize) -> Result<f64> {
    phi_value(cfg.model_dim, cfg.dp_delta[m], cfg.dp_epsilon[m].0)
}

/// Sensitivity bound `2√d·|fᴴh|·|s1|/K_m`. The clipping level cancels and is
/// accepted only for symmetry with the other accounting helpers.
pub fn sensitivity_bound(f: &[C64], h: &[C64], s1: C64, k_m: usize, d: usize, _clip: f64) -> f64 {
    2.0 * (d as f64).sqrt() * linalg::inner(f, h).norm() * s1.norm() / k_m as f64
}

/// Noise power `Σ_{m'}|fᴴh_{m'}|²s2_{m'}² + σ²` seen through extractor `f`.
pub fn masking_noise(f: &[C64], design: &TransceiverDesign, channel: &ChannelMatrix, noise_var: f64) -> f64 {
    channel.columns().iter().zip(&design.s2).map(|(h, &s)| linalg::gain(f, h) * s * s).sum::<f64>() + noise_var
}

/// Achieved ε at the base station for device `m` when observed through `f`.
pub fn epsilon_bs_with(
    f: &[C64],
    design: &TransceiverDesign,
    channel: &ChannelMatrix,
    cfg: &SystemConfig,
    m: usize,
) -> Result<f64> {
    let noise = masking_noise(f, design, channel, cfg.noise_var());
    if !(noise > 0.0) {
        return Err(Error::InvalidArgument("total masking noise power is zero".into()));
    }
    let delta = cfg.dp_delta[m];
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let k = cfg.samples_per_device[m] as f64;
    let signal = linalg::gain(f, channel.column(m)) * design.s1[m].norm_sqr();
    let eps2 = 8.0 * signal * cfg.model_dim as f64 * cfg.rounds as f64 * (1.0 / delta).ln() / (k * k * noise);
    Ok(eps2.sqrt())
}

/// Achieved ε at the base station using the design's own extractor.
pub fn epsilon_bs(design: &TransceiverDesign, channel: &ChannelMatrix, cfg: &SystemConfig, m: usize) -> Result<f64> {
    epsilon_bs_with(&design.extractors[m], design, channel, cfg, m)
}

/// SINR of device `m`'s gradient signal after combining with `f`.
pub fn sinr(f: &[C64], m: usize, design: &TransceiverDesign, channel: &ChannelMatrix, cfg: &SystemConfig) -> f64 {
    let signal = linalg::gain(f, channel.column(m)) * design.s1[m].norm_sqr();
    let interference: f64 = channel
        .columns()
        .iter()
        .zip(&design.s2)
        .enumerate()
        .filter(|(i, _)| *i != m)
        .map(|(_, (h, &s))| linalg::gain(f, h) * s * s)
        .sum();
    signal / (interference + cfg.noise_var())
}

/// SINR-maximising extractor for device `m`: the normalised `m`-th column of
/// `H̃(H̃ᴴH̃ + σ²I)⁻¹`, where `H̃` carries `h_m·s1_m` in column `m` and
/// `h_{m'}·s2_{m'}` elsewhere.
///
/// The direction does not depend on `|s1_m|`, so a zero `s1_m` is replaced
/// by one.
pub fn mmse_extractor(
    channel: &ChannelMatrix,
    design: &TransceiverDesign,
    cfg: &SystemConfig,
    m: usize,
) -> Result<Vec<C64>> {
    let n = channel.num_antennas();
    let devices = channel.num_devices();
    let s1 = if design.s1[m].norm() > 0.0 { design.s1[m] } else { C64::new(1.0, 0.0) };
    let h_tilde = DMatrix::from_fn(n, devices, |i, j| {
        let h = channel.column(j)[i];
        if j == m {
            h * s1
        } else {
            h * design.s2[j]
        }
    });
    let mut gram = h_tilde.adjoint() * &h_tilde;
    for i in 0..devices {
        gram[(i, i)] += C64::new(cfg.noise_var(), 0.0);
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("extractor Gram matrix is not positive definite".into()))?;
    let mut e = DVector::zeros(devices);
    e[m] = C64::new(1.0, 0.0);
    let col = h_tilde * chol.solve(&e);
    let mut f = linalg::normalized(col.as_slice()).ok_or(Error::DegenerateChannel { device: m })?;
    linalg::fix_phase(&mut f);
    Ok(f)
}

/// MMSE extractors for every device.
pub fn mmse_extractors(
    channel: &ChannelMatrix,
    design: &TransceiverDesign,
    cfg: &SystemConfig,
) -> Result<Vec<Vec<C64>>> {
    (0..channel.num_devices()).map(|m| mmse_extractor(channel, design, cfg, m)).collect()
}

/// Unit-norm extractor drawn with i.i.d. `N(0, 1/N)` real entries.
pub fn random_extractor<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let std = 1.0 / (n as f64).sqrt();
    loop {
        let v: Vec<C64> = (0..n).map(|_| C64::new(std * rng.sample::<f64, _>(StandardNormal), 0.0)).collect();
        if let Some(f) = linalg::normalized(&v) {
            return f;
        }
    }
}

pub fn dp_report(design: &TransceiverDesign, channel: &ChannelMatrix, cfg: &SystemConfig) -> Result<DpReport> {
    let devices = channel.num_devices();
    let mut report = DpReport {
        phi: Vec::with_capacity(devices),
        sensitivity: Vec::with_capacity(devices),
        eps_bs: Vec::with_capacity(devices),
        feasible: Vec::with_capacity(devices),
    };
    for m in 0..devices {
        let f = &design.extractors[m];
        let target = cfg.dp_epsilon[m].0;
        let eps = epsilon_bs(design, channel, cfg, m)?;
        report.phi.push(phi_constant(cfg, m)?);
        report.sensitivity.push(sensitivity_bound(
            f,
            channel.column(m),
            design.s1[m],
            cfg.samples_per_device[m],
            cfg.model_dim,
            cfg.clip_level,
        ));
        report.feasible.push(eps <= target * (1.0 + FEASIBILITY_RTOL));
        report.eps_bs.push(eps);
    }
    Ok(report)
}

/// Sensitivity and masking-noise standard deviation of device `m`'s
/// revealed signal, the inputs of [`empirical_privacy_tail`].
pub fn mechanism_parameters(
    design: &TransceiverDesign,
    channel: &ChannelMatrix,
    cfg: &SystemConfig,
    m: usize,
) -> (f64, f64) {
    let f = &design.extractors[m];
    let delta =
        sensitivity_bound(f, channel.column(m), design.s1[m], cfg.samples_per_device[m], cfg.model_dim, cfg.clip_level);
    (delta, masking_noise(f, design, channel, cfg.noise_var()).sqrt())
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Estimates `Pr(|Σ_t L_t| > ε)` for per-round privacy losses
/// `L_t ~ N(Δ²/2σ², Δ²/σ²)` of the scalar Gaussian mechanism.
pub fn empirical_privacy_tail<R: Rng + ?Sized>(
    sensitivity: f64,
    noise_std: f64,
    rounds: usize,
    eps: f64,
    draws: usize,
    rng: &mut R,
) -> Result<TailEstimate> {
    if !(noise_std > 0.0) {
        return Err(Error::InvalidArgument("noise_std must be positive".into()));
    }
    if draws < 10_000 {
        return Err(Error::InvalidArgument("at least 10^4 Monte Carlo draws are required".into()));
    }
    if !(sensitivity >= 0.0) || !(eps >= 0.0) {
        return Err(Error::InvalidArgument("sensitivity and epsilon must be nonnegative".into()));
    }
    let c = (sensitivity / noise_std).powi(2);
    let per_round = Normal::new(c / 2.0, c.sqrt()).expect("finite parameters");
    let mut hits = 0usize;
    for _ in 0..draws {
        let total: f64 = (0..rounds).map(|_| per_round.sample(rng)).sum();
        if total.abs() > eps {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    Ok(TailEstimate { probability: p, std_error: (p * (1.0 - p) / draws as f64).sqrt(), draws })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rayleigh_channel, Epsilon};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn unit(n: usize, i: usize) -> Vec<C64> {
        let mut v = vec![c(0.0, 0.0); n];
        v[i] = c(1.0, 0.0);
        v
    }

    fn scalar_cfg(devices: usize, antennas: usize) -> SystemConfig {
        let mut cfg = SystemConfig::reference();
        cfg.num_devices = devices;
        cfg.num_antennas = antennas;
        cfg.model_dim = 1;
        cfg.rounds = 1;
        cfg.samples_per_device = vec![1; devices];
        cfg.dp_epsilon = vec![Epsilon(1.0); devices];
        cfg.dp_delta = vec![(-1.0f64).exp(); devices];
        cfg.set_noise_var(8.0);
        cfg
    }

    fn random_design(channel: &ChannelMatrix, rng: &mut ChaCha8Rng) -> TransceiverDesign {
        let m = channel.num_devices();
        let n = channel.num_antennas();
        let f0 = random_extractor(n, rng);
        TransceiverDesign {
            s1: (0..m).map(|_| c(rng.random::<f64>(), rng.random::<f64>() - 0.5)).collect(),
            s2: (0..m).map(|_| rng.random::<f64>()).collect(),
            eta: 1.0,
            extractors: vec![f0.clone(); m],
            f0,
        }
    }

    fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vec<C64> {
        let v: Vec<C64> = (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        linalg::normalized(&v).unwrap()
    }

    #[test]
    fn phi_values() {
        let cfg = SystemConfig::reference();
        let expect = 8.0 * 20.0 * 1000f64.ln() / 900.0;
        assert!((phi_constant(&cfg, 0).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 1.2281).abs() < 1e-4);
        assert_eq!(phi_value(20, 1e-3, f64::INFINITY).unwrap(), 0.0);
        let one = phi_value(1, (-1.0f64).exp(), 8f64.sqrt()).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        assert!(phi_value(1, 1.0, 1.0).is_err());
        assert!(phi_value(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn sensitivity_values() {
        let h = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let orth = vec![c(0.0, 0.0), c(1.0, 0.0)];
        assert_eq!(sensitivity_bound(&orth, &h, c(1.0, 0.0), 1, 1, 0.1), 0.0);
        assert!((sensitivity_bound(&unit(2, 0), &h, c(1.0, 0.0), 1, 1, 0.1) - 2.0).abs() < 1e-15);
        let a = sensitivity_bound(&unit(2, 0), &h, c(0.3, 0.4), 10, 4, 1.0);
        let b = sensitivity_bound(&unit(2, 0), &h, c(0.3, 0.4), 20, 4, 1.0);
        assert!((a - 2.0 * b).abs() < 1e-15);
    }

    #[test]
    fn epsilon_bs_values() {
        let cfg = scalar_cfg(1, 1);
        let channel = ChannelMatrix::from_columns(vec![vec![c(1.0, 0.0)]]).unwrap();
        let mut design = TransceiverDesign {
            s1: vec![c(1.0, 0.0)],
            s2: vec![0.0],
            eta: 1.0,
            f0: unit(1, 0),
            extractors: vec![unit(1, 0)],
        };
        assert!((epsilon_bs(&design, &channel, &cfg, 0).unwrap() - 1.0).abs() < 1e-12);
        design.s1[0] = c(0.0, 0.0);
        assert_eq!(epsilon_bs(&design, &channel, &cfg, 0).unwrap(), 0.0);
    }

    #[test]
    fn epsilon_bs_decreases_with_artificial_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let channel = rayleigh_channel(4, 3, &mut rng);
        let cfg = scalar_cfg(3, 4);
        let design = random_design(&channel, &mut rng);
        for other in 0..3 {
            let mut louder = design.clone();
            louder.s2[other] += 0.5;
            for m in 0..3 {
                let before = epsilon_bs(&design, &channel, &cfg, m).unwrap();
                let after = epsilon_bs(&louder, &channel, &cfg, m).unwrap();
                assert!(after < before);
            }
        }
    }

    #[test]
    fn epsilon_bs_rejects_zero_noise() {
        let mut cfg = scalar_cfg(1, 1);
        cfg.noise_var = Some(0.0);
        let channel = ChannelMatrix::from_columns(vec![vec![c(1.0, 0.0)]]).unwrap();
        let design = TransceiverDesign {
            s1: vec![c(1.0, 0.0)],
            s2: vec![0.0],
            eta: 1.0,
            f0: unit(1, 0),
            extractors: vec![unit(1, 0)],
        };
        assert!(epsilon_bs(&design, &channel, &cfg, 0).is_err());
    }

    #[test]
    fn sinr_matched_filter_and_orthogonal() {
        let cfg = scalar_cfg(1, 3);
        let h = vec![c(1.0, 1.0), c(0.0, 2.0), c(-1.0, 0.0)];
        let channel = ChannelMatrix::from_columns(vec![h.clone()]).unwrap();
        let design = TransceiverDesign {
            s1: vec![c(0.5, 0.0)],
            s2: vec![0.7],
            eta: 1.0,
            f0: unit(3, 0),
            extractors: vec![unit(3, 0)],
        };
        let f = linalg::normalized(&h).unwrap();
        let expect = linalg::norm(&h).powi(2) * 0.25 / 8.0;
        assert!((sinr(&f, 0, &design, &channel, &cfg) - expect).abs() < 1e-12);
        let orth = linalg::normalized(&[c(1.0, 0.0), c(0.0, 0.0), c(1.0, -1.0)]).unwrap();
        assert!(linalg::inner(&orth, &h).norm() < 1e-15);
        assert!(sinr(&orth, 0, &design, &channel, &cfg) < 1e-30);
    }

    #[test]
    fn mmse_orthogonal_channels() {
        let mut cfg = scalar_cfg(2, 2);
        cfg.set_noise_var(1e-12);
        let channel =
            ChannelMatrix::from_columns(vec![vec![c(0.6, 0.8), c(0.0, 0.0)], vec![c(0.0, 0.0), c(2.0, 0.0)]]).unwrap();
        let design = TransceiverDesign {
            s1: vec![c(0.3, 0.1), c(0.2, 0.0)],
            s2: vec![0.5, 0.5],
            eta: 1.0,
            f0: unit(2, 0),
            extractors: vec![unit(2, 0), unit(2, 1)],
        };
        let f = mmse_extractor(&channel, &design, &cfg, 0).unwrap();
        let h = linalg::normalized(channel.column(0)).unwrap();
        assert!((linalg::inner(&f, &h).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mmse_single_antenna_has_unit_modulus() {
        let cfg = scalar_cfg(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let channel = rayleigh_channel(1, 3, &mut rng);
        let design = random_design(&channel, &mut rng);
        for m in 0..3 {
            let f = mmse_extractor(&channel, &design, &cfg, m).unwrap();
            assert_eq!(f.len(), 1);
            assert!((f[0].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mmse_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let channel = rayleigh_channel(6, 4, &mut rng);
        let mut cfg = scalar_cfg(4, 6);
        cfg.set_noise_var(0.1);
        let design = random_design(&channel, &mut rng);
        for m in 0..4 {
            let f = mmse_extractor(&channel, &design, &cfg, m).unwrap();
            let best = sinr(&f, m, &design, &channel, &cfg);
            for _ in 0..10_000 {
                let probe = random_unit(6, &mut rng);
                assert!(best >= sinr(&probe, m, &design, &channel, &cfg) - 1e-9);
            }
        }
    }

    #[test]
    fn mmse_matches_whitened_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let channel = rayleigh_channel(5, 3, &mut rng);
        let mut cfg = scalar_cfg(3, 5);
        cfg.set_noise_var(0.2);
        let design = random_design(&channel, &mut rng);
        let m = 1;
        let mut r = DMatrix::<C64>::identity(5, 5) * c(0.2, 0.0);
        for j in [0, 2] {
            let h = linalg::to_dvector(channel.column(j));
            r += &h * h.adjoint() * c(design.s2[j] * design.s2[j], 0.0);
        }
        let w = r.cholesky().unwrap().solve(&linalg::to_dvector(channel.column(m)));
        let oracle = linalg::normalized(w.as_slice()).unwrap();
        let f = mmse_extractor(&channel, &design, &cfg, m).unwrap();
        assert!((linalg::inner(&f, &oracle).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_for_silent_devices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let channel = rayleigh_channel(3, 2, &mut rng);
        let cfg = scalar_cfg(2, 3);
        let mut design = random_design(&channel, &mut rng);
        design.s1 = vec![c(0.0, 0.0); 2];
        let rep = dp_report(&design, &channel, &cfg).unwrap();
        assert!(rep.eps_bs.iter().all(|&e| e == 0.0));
        assert!(rep.all_feasible());
    }

    #[test]
    fn report_without_dp_target_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let channel = rayleigh_channel(3, 2, &mut rng);
        let mut cfg = scalar_cfg(2, 3);
        cfg.dp_epsilon = vec![Epsilon::NONE; 2];
        let mut design = random_design(&channel, &mut rng);
        design.s2 = vec![0.0; 2];
        let rep = dp_report(&design, &channel, &cfg).unwrap();
        assert!(rep.all_feasible());
        assert!(rep.phi.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn random_extractor_is_real_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_extractor(8, &mut rng);
        assert!((linalg::norm(&f) - 1.0).abs() < 1e-12);
        assert!(f.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn tail_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let zero = empirical_privacy_tail(0.0, 1.0, 5, 0.1, 10_000, &mut rng).unwrap();
        assert_eq!(zero.probability, 0.0);
        let far = empirical_privacy_tail(1.0, 1.0, 1, 10.0, 100_000, &mut rng).unwrap();
        assert!(far.probability < 1e-4);
        assert!(empirical_privacy_tail(1.0, 0.0, 1, 1.0, 10_000, &mut rng).is_err());
        assert!(empirical_privacy_tail(1.0, 1.0, 1, 1.0, 9_999, &mut rng).is_err());
    }

    #[test]
    fn tail_matches_gaussian_cdf() {
        use statrs::function::erf::erfc;
        // Σ L_t ~ N(Tc/2, Tc); compare with the analytic two-sided tail.
        let (t, eps) = (4usize, 3.0);
        let c = 0.5f64;
        let mean = t as f64 * c / 2.0;
        let std = (t as f64 * c).sqrt();
        let upper = 0.5 * erfc((eps - mean) / (std * 2f64.sqrt()));
        let lower = 0.5 * erfc((eps + mean) / (std * 2f64.sqrt()));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let est = empirical_privacy_tail(c.sqrt(), 1.0, t, eps, 200_000, &mut rng).unwrap();
        assert!((est.probability - (upper + lower)).abs() < 4.0 * est.std_error);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn epsilon_bs_ignores_phases(seed in 0u64..10_000, a in 0.0f64..6.3, b in 0.0f64..6.3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let channel = rayleigh_channel(3, 3, &mut rng);
                let mut cfg = scalar_cfg(3, 3);
                cfg.model_dim = 5;
                let mut design = random_design(&channel, &mut rng);
                design.extractors[0] = random_unit(3, &mut rng);
                let base = epsilon_bs(&design, &channel, &cfg, 0).unwrap();
                design.s1[0] *= C64::from_polar(1.0, a);
                for z in design.extractors[0].iter_mut() {
                    *z *= C64::from_polar(1.0, b);
                }
                let rotated = epsilon_bs(&design, &channel, &cfg, 0).unwrap();
                prop_assert!((base - rotated).abs() <= 1e-12 * base.max(1.0));
            }

            #[test]
            fn epsilon_bs_linear_in_s1(seed in 0u64..10_000, scale in 0.01f64..10.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let channel = rayleigh_channel(4, 2, &mut rng);
                let cfg = scalar_cfg(2, 4);
                let design = random_design(&channel, &mut rng);
                let mut scaled = design.clone();
                scaled.s1[1] *= scale;
                let a = epsilon_bs(&design, &channel, &cfg, 1).unwrap();
                let b = epsilon_bs(&scaled, &channel, &cfg, 1).unwrap();
                prop_assert!((b / a - scale).abs() <= 1e-12 * scale);
            }

            #[test]
            fn mmse_dominates_probes(seed in 0u64..10_000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let channel = rayleigh_channel(2, 2, &mut rng);
                let mut cfg = scalar_cfg(2, 2);
                cfg.set_noise_var(0.05);
                let design = random_design(&channel, &mut rng);
                let f = mmse_extractor(&channel, &design, &cfg, 0).unwrap();
                let best = sinr(&f, 0, &design, &channel, &cfg);
                for _ in 0..200 {
                    let probe = random_unit(2, &mut rng);
                    prop_assert!(best >= sinr(&probe, 0, &design, &channel, &cfg) - 1e-9);
                }
            }

            #[test]
            fn mmse_not_below_combiner_or_random(seed in 0u64..10_000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let channel = rayleigh_channel(4, 3, &mut rng);
                let mut cfg = scalar_cfg(3, 4);
                cfg.set_noise_var(0.1);
                let design = random_design(&channel, &mut rng);
                let probe = random_extractor(4, &mut rng);
                for m in 0..3 {
                    let f = mmse_extractor(&channel, &design, &cfg, m).unwrap();
                    let best = epsilon_bs_with(&f, &design, &channel, &cfg, m).unwrap();
                    let comb = epsilon_bs_with(&design.f0, &design, &channel, &cfg, m).unwrap();
                    let rand = epsilon_bs_with(&probe, &design, &channel, &cfg, m).unwrap();
                    prop_assert!(best >= comb * (1.0 - 1e-9) && best >= rand * (1.0 - 1e-9));
                }
            }
        }
    }
}
