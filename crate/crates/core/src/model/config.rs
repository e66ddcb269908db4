use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Per-device DP target ε. `f64::INFINITY` means "no privacy requirement".
///
/// In JSON a finite value is a plain number; infinity is written as the string
/// `"inf"` (`"infinity"` and `null` are also accepted on input).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon(pub f64);

impl Epsilon {
    pub const NONE: Epsilon = Epsilon(f64::INFINITY);

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EpsVisitor;

        impl<'de> Visitor<'de> for EpsVisitor {
            type Value = Epsilon;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number, \"inf\" or null")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Epsilon, E> {
                Ok(Epsilon(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Epsilon, E> {
                Ok(Epsilon(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Epsilon, E> {
                Ok(Epsilon(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Epsilon, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" | "+inf" => Ok(Epsilon::NONE),
                    other => Err(E::custom(format!("unrecognised epsilon {other:?}"))),
                }
            }

            fn visit_unit<E: de::Error>(self) -> std::result::Result<Epsilon, E> {
                Ok(Epsilon::NONE)
            }

            fn visit_none<E: de::Error>(self) -> std::result::Result<Epsilon, E> {
                Ok(Epsilon::NONE)
            }
        }

        d.deserialize_any(EpsVisitor)
    }
}

/// All scenario constants of one over-the-air FL deployment.
///
/// Exactly one of `noise_var` and `snr_db` must be set; the SNR is defined
/// as `max_power / noise_var`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub num_devices: usize,
    pub num_antennas: usize,
    pub model_dim: usize,
    pub rounds: usize,
    pub samples_per_device: Vec<usize>,
    pub max_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub clip_level: f64,
    pub dp_epsilon: Vec<Epsilon>,
    pub dp_delta: Vec<f64>,
    pub strong_convexity: f64,
    pub smoothness: f64,
    /// Defaults to `1/smoothness` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    pub penalty: f64,
    pub mm_iters: usize,
    pub outer_iters: usize,
    pub early_stop_tol: f64,
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Ridge-regression scenario with M=10 devices of 100 samples, d=20,
    /// N=20, T=30, P=1 W, SNR 15 dB, L=0.1, ε=30, δ=1e-3, ρ=1, J=50, I=10.
    ///
    /// `strong_convexity`/`smoothness` are placeholders until
    /// [`SystemConfig::with_curvature`] is applied with the dataset's values.
    pub fn reference() -> Self {
        let m = 10;
        SystemConfig {
            num_devices: m,
            num_antennas: 20,
            model_dim: 20,
            rounds: 30,
            samples_per_device: vec![100; m],
            max_power: 1.0,
            noise_var: None,
            snr_db: Some(15.0),
            clip_level: 0.1,
            dp_epsilon: vec![Epsilon(30.0); m],
            dp_delta: vec![1e-3; m],
            strong_convexity: 1.0,
            smoothness: 1.0,
            learning_rate: None,
            penalty: 1.0,
            mm_iters: 50,
            outer_iters: 10,
            early_stop_tol: 1e-4,
            rng_seed: 0,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// σ_z², from `noise_var` or `snr_db`.
    pub fn noise_var(&self) -> f64 {
        match (self.noise_var, self.snr_db) {
            (Some(v), _) => v,
            (None, Some(db)) => self.max_power / 10f64.powf(db / 10.0),
            (None, None) => f64::NAN,
        }
    }

    /// Replaces the noise specification by an SNR in dB.
    pub fn set_snr_db(&mut self, db: f64) {
        self.snr_db = Some(db);
        self.noise_var = None;
    }

    pub fn set_noise_var(&mut self, v: f64) {
        self.noise_var = Some(v);
        self.snr_db = None;
    }

    /// Sets the same ε for every device.
    pub fn set_uniform_epsilon(&mut self, eps: f64) {
        self.dp_epsilon = vec![Epsilon(eps); self.num_devices];
    }

    pub fn with_curvature(mut self, mu: f64, omega: f64) -> Self {
        self.strong_convexity = mu;
        self.smoothness = omega;
        self
    }

    pub fn total_samples(&self) -> usize {
        self.samples_per_device.iter().sum()
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(1.0 / self.smoothness)
    }

    /// Splits `total` samples evenly over `devices`.
    pub fn equal_split(total: usize, devices: usize) -> Result<Vec<usize>> {
        if devices == 0 || !total.is_multiple_of(devices) {
            return Err(Error::InvalidConfig(format!("{total} samples cannot be split evenly over {devices} devices")));
        }
        Ok(vec![total / devices; devices])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let m = self.num_devices;
        if m == 0 || self.num_antennas == 0 || self.model_dim == 0 || self.rounds == 0 {
            return bad("num_devices, num_antennas, model_dim and rounds must be >= 1".into());
        }
        if self.samples_per_device.len() != m || self.samples_per_device.contains(&0) {
            return bad(format!("samples_per_device must hold {m} positive entries"));
        }
        if !(self.max_power > 0.0 && self.max_power.is_finite()) {
            return bad("max_power must be positive".into());
        }
        match (self.noise_var, self.snr_db) {
            (Some(_), Some(_)) => return bad("set only one of noise_var and snr_db".into()),
            (None, None) => return bad("one of noise_var and snr_db is required".into()),
            _ => {}
        }
        let nv = self.noise_var();
        if !(nv > 0.0 && nv.is_finite()) {
            return bad("noise variance must be positive and finite".into());
        }
        if !(self.clip_level > 0.0 && self.clip_level.is_finite()) {
            return bad("clip_level must be positive".into());
        }
        if self.dp_epsilon.len() != m || self.dp_epsilon.iter().any(|e| !(e.0 > 0.0)) {
            return bad(format!("dp_epsilon must hold {m} positive entries (or \"inf\")"));
        }
        if self.dp_delta.len() != m || self.dp_delta.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return bad(format!("dp_delta must hold {m} entries in (0, 1)"));
        }
        let (mu, om) = (self.strong_convexity, self.smoothness);
        if !(mu > 0.0 && om >= mu && om.is_finite()) {
            return bad(format!("need 0 < strong_convexity <= smoothness, got {mu}, {om}"));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("learning_rate must be positive".into());
            }
        }
        if !(self.penalty > 0.0) || self.mm_iters == 0 || self.outer_iters == 0 {
            return bad("penalty must be positive, mm_iters and outer_iters >= 1".into());
        }
        if !(self.early_stop_tol > 0.0) {
            return bad("early_stop_tol must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_valid() {
        let cfg = SystemConfig::reference();
        cfg.validate().unwrap();
        assert_eq!(cfg.total_samples(), 1000);
        assert!((cfg.noise_var() - 10f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_with_infinite_epsilon() {
        let mut cfg = SystemConfig::reference();
        cfg.dp_epsilon[3] = Epsilon::NONE;
        let s = cfg.to_json().unwrap();
        assert!(s.contains("\"inf\""));
        let back = SystemConfig::from_json(&s).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let cfg = SystemConfig::reference();
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        v["reg"] = serde_json::json!(1.0);
        assert!(SystemConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn null_epsilon_means_no_dp() {
        let cfg = SystemConfig::reference();
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        v["dp_epsilon"][0] = serde_json::Value::Null;
        let back = SystemConfig::from_json(&v.to_string()).unwrap();
        assert!(!back.dp_epsilon[0].is_finite());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = SystemConfig::reference();
        cfg.dp_delta[0] = 1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = SystemConfig::reference();
        cfg.strong_convexity = 2.0;
        assert!(cfg.validate().is_err());

        let mut cfg = SystemConfig::reference();
        cfg.noise_var = Some(1.0);
        assert!(cfg.validate().is_err());

        let mut cfg = SystemConfig::reference();
        cfg.samples_per_device.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn equal_split_requires_divisibility() {
        assert_eq!(SystemConfig::equal_split(1000, 10).unwrap(), vec![100; 10]);
        assert!(SystemConfig::equal_split(1001, 10).is_err());
    }
}
