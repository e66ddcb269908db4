use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::C64;

/// Uplink channel, one column `h_m ∈ ℂᴺ` per device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    num_antennas: usize,
    columns: Vec<Vec<C64>>,
}

impl ChannelMatrix {
    pub fn from_columns(columns: Vec<Vec<C64>>) -> Result<Self> {
        let n = columns.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(Error::InvalidArgument("channel must be non-empty".into()));
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("channel columns differ in length".into()));
        }
        if columns.iter().flatten().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidArgument("channel entries must be finite".into()));
        }
        Ok(ChannelMatrix { num_antennas: n, columns })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_devices(&self) -> usize {
        self.columns.len()
    }

    /// `h_m`.
    pub fn column(&self, m: usize) -> &[C64] {
        &self.columns[m]
    }

    pub fn columns(&self) -> &[Vec<C64>] {
        &self.columns
    }

    /// `(rows, cols) = (N, M)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.num_antennas, self.columns.len())
    }

    /// Keeps the first `n` antennas.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.num_antennas {
            return Err(Error::InvalidArgument(format!("cannot keep {n} of {} antennas", self.num_antennas)));
        }
        Ok(ChannelMatrix { num_antennas: n, columns: self.columns.iter().map(|c| c[..n].to_vec()).collect() })
    }

    pub fn check_matches(&self, cfg: &SystemConfig) -> Result<()> {
        if self.shape() != (cfg.num_antennas, cfg.num_devices) {
            return Err(Error::InvalidArgument(format!(
                "channel shape {:?} does not match configuration ({}, {})",
                self.shape(),
                cfg.num_antennas,
                cfg.num_devices
            )));
        }
        Ok(())
    }
}

/// Rayleigh fading: i.i.d. `CN(0, 1)` entries, drawn device by device.
pub fn generate_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelMatrix {
    rayleigh_channel(cfg.num_antennas, cfg.num_devices, rng)
}

pub fn rayleigh_channel<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> ChannelMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let columns = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    C64::new(re * s, im * s)
                })
                .collect()
        })
        .collect();
    ChannelMatrix { num_antennas: n, columns }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_under_seed() {
        let mut cfg = SystemConfig::reference();
        cfg.num_antennas = 1;
        cfg.num_devices = 1;
        let a = generate_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = generate_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.shape(), (1, 1));
        assert_eq!(a.column(0)[0].re.to_bits(), b.column(0)[0].re.to_bits());
        assert_eq!(a.column(0)[0].im.to_bits(), b.column(0)[0].im.to_bits());
    }

    #[test]
    fn reference_shape() {
        let mut cfg = SystemConfig::reference();
        cfg.num_antennas = 20;
        let h = generate_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(h.shape(), (20, 10));
        h.check_matches(&cfg).unwrap();
    }

    #[test]
    fn moments_match_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut sum = C64::new(0.0, 0.0);
        let mut power = 0.0;
        let draws = 100_000 / 40 + 1;
        let mut count = 0usize;
        for _ in 0..draws {
            let h = rayleigh_channel(4, 10, &mut rng);
            for x in h.columns().iter().flatten() {
                sum += x;
                power += x.norm_sqr();
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!(mean.norm() < 0.02, "mean {mean}");
        let p = power / count as f64;
        assert!((0.98..=1.02).contains(&p), "power {p}");
    }

    #[test]
    fn truncation_keeps_leading_antennas() {
        let h = rayleigh_channel(4, 3, &mut ChaCha8Rng::seed_from_u64(3));
        let t = h.truncated(2).unwrap();
        assert_eq!(t.shape(), (2, 3));
        assert_eq!(t.column(2), &h.column(2)[..2]);
        assert!(h.truncated(5).is_err());
    }
}
