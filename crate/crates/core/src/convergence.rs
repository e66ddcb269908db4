//! Expected-loss upper bound for over-the-air gradient descent.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::model::{ChannelMatrix, RidgeDataset, SystemConfig};
use crate::privacy::TransceiverDesign;

/// Terms of the bound and its value after `mismatch_terms.len()` rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub contraction: f64,
    pub noise_term: f64,
    pub mismatch_terms: Vec<f64>,
    pub initial_gap: f64,
    pub optimal_loss: f64,
    pub bound_value: f64,
}

/// `B = 1 − μ/ω`.
pub fn contraction_factor(mu: f64, omega: f64) -> Result<f64> {
    if !(mu > 0.0 && omega >= mu && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 < mu <= omega, got mu={mu}, omega={omega}")));
    }
    Ok(1.0 - mu / omega)
}

/// `A = d(Σ_m|f₀ᴴh_m|²s2_m² + σ²)/(2ωK²η)`.
pub fn noise_term_a(design: &TransceiverDesign, channel: &ChannelMatrix, cfg: &SystemConfig) -> f64 {
    let noise = crate::privacy::masking_noise(&design.f0, design, channel, cfg.noise_var());
    let k = cfg.total_samples() as f64;
    cfg.model_dim as f64 * noise / (2.0 * cfg.smoothness * k * k * design.eta)
}

/// Per-device misalignment `K_m − f₀ᴴh_m·s1_m/(√η·L)`.
pub fn misalignment(design: &TransceiverDesign, channel: &ChannelMatrix, cfg: &SystemConfig) -> Vec<C64> {
    let scale = 1.0 / (design.eta.sqrt() * cfg.clip_level);
    (0..channel.num_devices())
        .map(|m| {
            let received = linalg::inner(&design.f0, channel.column(m)) * design.s1[m] * scale;
            C64::new(cfg.samples_per_device[m] as f64, 0.0) - received
        })
        .collect()
}

/// `C_t = (1/2ωK²)·Σ_i |Σ_m (K_m − f₀ᴴh_m·s1_m/(√η·L))·g_m[i]|²` on realised
/// local gradients.
pub fn mismatch_term_ct(
    design: &TransceiverDesign,
    channel: &ChannelMatrix,
    cfg: &SystemConfig,
    grads: &[DVector<f64>],
) -> f64 {
    let coeff = misalignment(design, channel, cfg);
    let k = cfg.total_samples() as f64;
    let d = grads.first().map_or(0, |g| g.len());
    let mut total = 0.0;
    for i in 0..d {
        let mut acc = C64::new(0.0, 0.0);
        for (c, g) in coeff.iter().zip(grads) {
            acc += c * g[i];
        }
        total += acc.norm_sqr();
    }
    total / (2.0 * cfg.smoothness * k * k)
}

/// `F* + B^T·gap + A(1 − B^T)/(1 − B) + Σ_t B^{T−t}C_t` with `T = mismatch.len()`.
pub fn loss_upper_bound(
    optimal_loss: f64,
    initial_gap: f64,
    contraction: f64,
    noise_term: f64,
    mismatch: &[f64],
) -> f64 {
    let t = mismatch.len() as i32;
    let bt = contraction.powi(t);
    let geometric = if contraction == 0.0 {
        if t > 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - bt) / (1.0 - contraction)
    };
    let carried: f64 = mismatch.iter().enumerate().map(|(idx, c)| contraction.powi(t - 1 - idx as i32) * c).sum();
    optimal_loss + bt * initial_gap + noise_term * geometric + carried
}

/// Bound report for `design` on `ds`, starting from `w₀ = 0`.
///
/// `mismatch` holds the per-round `C_t`; pass zeros for aligned designs.
pub fn bound_report(
    design: &TransceiverDesign,
    channel: &ChannelMatrix,
    cfg: &SystemConfig,
    ds: &RidgeDataset,
    mismatch: Vec<f64>,
) -> Result<BoundReport> {
    let contraction = contraction_factor(cfg.strong_convexity, cfg.smoothness)?;
    let noise_term = noise_term_a(design, channel, cfg);
    let w_star = ds.exact_minimizer();
    let optimal_loss = ds.loss(&w_star);
    let initial_gap = ds.loss(&DVector::zeros(ds.dim())) - optimal_loss;
    let bound_value = loss_upper_bound(optimal_loss, initial_gap, contraction, noise_term, &mismatch);
    Ok(BoundReport { contraction, noise_term, mismatch_terms: mismatch, initial_gap, optimal_loss, bound_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_ridge_dataset, rayleigh_channel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn unit_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::reference();
        cfg.num_devices = 1;
        cfg.num_antennas = 1;
        cfg.model_dim = 1;
        cfg.samples_per_device = vec![1];
        cfg.dp_epsilon.truncate(1);
        cfg.dp_delta.truncate(1);
        cfg.set_noise_var(1.0);
        cfg.clip_level = 1.0;
        cfg.with_curvature(1.0, 1.0)
    }

    fn unit_design() -> TransceiverDesign {
        TransceiverDesign {
            s1: vec![c(1.0, 0.0)],
            s2: vec![0.0],
            eta: 1.0,
            f0: vec![c(1.0, 0.0)],
            extractors: vec![vec![c(1.0, 0.0)]],
        }
    }

    #[test]
    fn contraction_values() {
        assert_eq!(contraction_factor(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(contraction_factor(1.0, 2.0).unwrap(), 0.5);
        assert!(contraction_factor(2.0, 1.0).is_err());
        assert!(contraction_factor(0.0, 1.0).is_err());
    }

    #[test]
    fn contraction_matches_hessian_spectrum() {
        let cfg = SystemConfig::reference();
        let ds = generate_ridge_dataset(&cfg, 1e-3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (eigs, _) = {
            let h = ds.hessian();
            let e = nalgebra::SymmetricEigen::new(h);
            (e.eigenvalues, ())
        };
        let (mu, om) = ds.strong_convexity_params();
        let b = contraction_factor(mu, om).unwrap();
        assert!((b - (1.0 - eigs.min() / eigs.max())).abs() < 1e-10);
    }

    #[test]
    fn noise_term_values() {
        let cfg = unit_cfg();
        let channel = ChannelMatrix::from_columns(vec![vec![c(0.3, 0.4)]]).unwrap();
        let mut design = unit_design();
        assert!((noise_term_a(&design, &channel, &cfg) - 0.5).abs() < 1e-15);

        design.eta = 1e12;
        assert!(noise_term_a(&design, &channel, &cfg) < 1e-12);

        design.eta = 1.0;
        let mut louder = cfg.clone();
        louder.set_noise_var(2.0);
        assert!((noise_term_a(&design, &channel, &louder) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn aligned_design_has_no_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cfg = SystemConfig::reference();
        cfg.num_devices = 3;
        cfg.num_antennas = 4;
        cfg.model_dim = 5;
        cfg.samples_per_device = vec![10, 20, 30];
        cfg.dp_epsilon.truncate(3);
        cfg.dp_delta.truncate(3);
        let channel = rayleigh_channel(4, 3, &mut rng);
        let f0 = linalg::normalized(channel.column(0)).unwrap();
        let eta: f64 = 0.37;
        let s1 = (0..3)
            .map(|m| {
                let g = linalg::inner(&f0, channel.column(m));
                g.conj() * (eta.sqrt() * cfg.clip_level * cfg.samples_per_device[m] as f64 / g.norm_sqr())
            })
            .collect();
        let design = TransceiverDesign { s1, s2: vec![0.1; 3], eta, f0: f0.clone(), extractors: vec![f0; 3] };
        let grads: Vec<_> = (0..3).map(|_| DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
        assert!(mismatch_term_ct(&design, &channel, &cfg, &grads) <= 1e-18);
        let zeros = vec![DVector::zeros(5); 3];
        let mut skew = design.clone();
        skew.s1[1] *= 2.0;
        assert_eq!(mismatch_term_ct(&skew, &channel, &cfg, &zeros), 0.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn mismatch_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = SystemConfig::reference();
        cfg.num_devices = 4;
        cfg.num_antennas = 3;
        cfg.model_dim = 6;
        cfg.samples_per_device = vec![5, 7, 9, 11];
        cfg.dp_epsilon.truncate(4);
        cfg.dp_delta.truncate(4);
        cfg = cfg.with_curvature(0.2, 1.7);
        let channel = rayleigh_channel(3, 4, &mut rng);
        let f0 = linalg::normalized(channel.column(2)).unwrap();
        let design = TransceiverDesign {
            s1: (0..4).map(|_| c(rng.random(), rng.random())).collect(),
            s2: vec![0.0; 4],
            eta: 0.8,
            f0: f0.clone(),
            extractors: vec![f0.clone(); 4],
        };
        let grads: Vec<_> = (0..4).map(|_| DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();

        // Split into real and imaginary parts and accumulate element by element.
        let k_total = 32.0;
        let mut brute = 0.0;
        for i in 0..6 {
            let (mut re, mut im) = (0.0, 0.0);
            for m in 0..4 {
                let mut fh = c(0.0, 0.0);
                for n in 0..3 {
                    fh += f0[n].conj() * channel.column(m)[n];
                }
                let z = fh * design.s1[m] / (0.8f64.sqrt() * cfg.clip_level);
                re += (cfg.samples_per_device[m] as f64 - z.re) * grads[m][i];
                im += -z.im * grads[m][i];
            }
            brute += re * re + im * im;
        }
        brute /= 2.0 * 1.7 * k_total * k_total;
        let got = mismatch_term_ct(&design, &channel, &cfg, &grads);
        assert!((got - brute).abs() <= 1e-12 * brute.max(1.0), "{got} vs {brute}");
    }

    #[test]
    fn bound_special_cases() {
        assert!((loss_upper_bound(2.0, 5.0, 0.5, 0.0, &vec![0.0; 2000]) - 2.0).abs() < 1e-12);
        let one = loss_upper_bound(1.0, 4.0, 0.3, 0.2, &[0.05]);
        assert!((one - (1.0 + 0.3 * 4.0 + 0.2 + 0.05)).abs() < 1e-15);
        let zero_b = loss_upper_bound(1.0, 4.0, 0.0, 0.2, &[0.1, 0.3]);
        assert!((zero_b - (1.0 + 0.2 + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn bound_report_from_dataset() {
        let cfg0 = SystemConfig::reference();
        let ds = generate_ridge_dataset(&cfg0, 1e-3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let (mu, om) = ds.strong_convexity_params();
        let cfg = cfg0.with_curvature(mu, om);
        let channel = rayleigh_channel(20, 10, &mut ChaCha8Rng::seed_from_u64(5));
        let f0 = linalg::normalized(channel.column(0)).unwrap();
        let design = TransceiverDesign {
            s1: vec![c(0.1, 0.0); 10],
            s2: vec![0.0; 10],
            eta: 1e-4,
            f0: f0.clone(),
            extractors: vec![f0; 10],
        };
        let rep = bound_report(&design, &channel, &cfg, &ds, vec![0.0; 30]).unwrap();
        assert!(rep.bound_value >= rep.optimal_loss);
        assert!(rep.initial_gap >= 0.0);
        assert!((0.0..1.0).contains(&rep.contraction));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bound_monotone_in_terms(
                b in 0.0f64..0.999,
                a in 0.0f64..10.0,
                da in 0.0f64..1.0,
                cs in proptest::collection::vec(0.0f64..1.0, 1..20),
                idx in 0usize..20,
                dc in 0.0f64..1.0,
            ) {
                let base = loss_upper_bound(1.0, 2.0, b, a, &cs);
                prop_assert!(loss_upper_bound(1.0, 2.0, b, a + da, &cs) >= base);
                let mut bumped = cs.clone();
                let i = idx % cs.len();
                bumped[i] += dc;
                prop_assert!(loss_upper_bound(1.0, 2.0, b, a, &bumped) >= base);
                prop_assert!(base >= 1.0);
            }

            #[test]
            fn aligned_bound_nonincreasing_in_eta(eta in 1e-6f64..1.0, factor in 1.0f64..10.0) {
                let cfg = unit_cfg();
                let channel = ChannelMatrix::from_columns(vec![vec![c(1.0, 0.0)]]).unwrap();
                let mut design = unit_design();
                design.eta = eta;
                let a1 = noise_term_a(&design, &channel, &cfg);
                design.eta = eta * factor;
                let a2 = noise_term_a(&design, &channel, &cfg);
                let zeros = vec![0.0; 10];
                prop_assert!(
                    loss_upper_bound(1.0, 1.0, 0.5, a2, &zeros)
                        <= loss_upper_bound(1.0, 1.0, 0.5, a1, &zeros)
                );
            }
        }
    }
}
