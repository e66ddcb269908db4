//! C ABI over the transceiver-design library.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every fallible call returns an [`OtaStatus`]; on failure a message is
//! available from [`ota_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ota_dp::convergence::noise_term_a;
use ota_dp::harness::derived_rng;
use ota_dp::miso::miso_optimal_design;
use ota_dp::model::{generate_channel, ChannelMatrix, SystemConfig};
use ota_dp::planner::{optimize_transceivers, PlannerInit, PlannerOptions};
use ota_dp::privacy::{epsilon_bs, TransceiverDesign};
use ota_dp::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Infeasible = 4,
    NumericalFailure = 5,
    Serialization = 6,
    Panic = 7,
}

/// System configuration.
pub struct OtaConfig(SystemConfig);
/// Channel realisation, one column per device.
pub struct OtaChannel(ChannelMatrix);
/// Transceiver design.
pub struct OtaDesign(TransceiverDesign);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OtaStatus {
    match e {
        Error::InvalidConfig(_) => OtaStatus::InvalidConfig,
        Error::InvalidArgument(_) | Error::DegenerateChannel { .. } | Error::Schema(_) => OtaStatus::InvalidArgument,
        Error::Infeasible(_) => OtaStatus::Infeasible,
        Error::NumericalFailure(_) | Error::RankTooHigh { .. } => OtaStatus::NumericalFailure,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => OtaStatus::Serialization,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (OtaStatus, String)>>(f: F) -> OtaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OtaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            OtaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (OtaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (OtaStatus, String) {
    (OtaStatus::NullPointer, format!("{name} is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (OtaStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (OtaStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

fn put<T>(out: *mut *mut T, value: T) {
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ota_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Default scenario: M=10, N=20, d=20, T=30, SNR 15 dB, ε=30.
#[no_mangle]
pub extern "C" fn ota_config_default(out: *mut *mut OtaConfig) -> OtaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, OtaConfig(SystemConfig::reference()));
        Ok(())
    })
}

/// Parses a configuration from NUL-terminated JSON.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ota_config_from_json(json: *const c_char, out: *mut *mut OtaConfig) -> OtaStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text =
            CStr::from_ptr(json).to_str().map_err(|_| (OtaStatus::InvalidArgument, "json is not UTF-8".to_string()))?;
        put(out, OtaConfig(SystemConfig::from_json(text).map_err(lib_err)?));
        Ok(())
    })
}

/// Sets the same privacy target for every device; pass `INFINITY` for none.
///
/// # Safety
/// `cfg` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ota_config_set_epsilon(cfg: *mut OtaConfig, epsilon: f64) -> OtaStatus {
    guard(|| {
        let cfg = deref_mut(cfg, "cfg")?;
        if !(epsilon > 0.0) {
            return Err((OtaStatus::InvalidArgument, "epsilon must be positive".into()));
        }
        cfg.0.set_uniform_epsilon(epsilon);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ota_config_set_snr_db(cfg: *mut OtaConfig, snr_db: f64) -> OtaStatus {
    guard(|| {
        let cfg = deref_mut(cfg, "cfg")?;
        if !snr_db.is_finite() {
            return Err((OtaStatus::InvalidArgument, "snr_db must be finite".into()));
        }
        cfg.0.set_snr_db(snr_db);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn ota_config_free(cfg: *mut OtaConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Draws a Rayleigh channel of the configured shape from `seed`.
///
/// # Safety
/// `cfg` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ota_channel_generate(
    cfg: *const OtaConfig,
    seed: u64,
    out: *mut *mut OtaChannel,
) -> OtaStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        cfg.0.validate().map_err(lib_err)?;
        put(out, OtaChannel(generate_channel(&cfg.0, &mut derived_rng(seed, 0, 0, 0, 0))));
        Ok(())
    })
}

/// Builds a channel from interleaved `(re, im)` pairs, column-major with
/// `num_antennas` rows and `num_devices` columns.
///
/// # Safety
/// `data` must point to `2·num_antennas·num_devices` doubles.
#[no_mangle]
pub unsafe extern "C" fn ota_channel_from_data(
    data: *const f64,
    num_antennas: usize,
    num_devices: usize,
    out: *mut *mut OtaChannel,
) -> OtaStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = num_antennas
            .checked_mul(num_devices)
            .and_then(|n| n.checked_mul(2))
            .ok_or_else(|| (OtaStatus::InvalidArgument, "channel dimensions overflow".to_string()))?;
        let raw = std::slice::from_raw_parts(data, len);
        let columns = raw
            .chunks(2 * num_antennas.max(1))
            .map(|col| col.chunks(2).map(|p| ota_dp::linalg::C64::new(p[0], p[1])).collect())
            .collect();
        put(out, OtaChannel(ChannelMatrix::from_columns(columns).map_err(lib_err)?));
        Ok(())
    })
}

/// # Safety
/// `channel` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn ota_channel_free(channel: *mut OtaChannel) {
    if !channel.is_null() {
        drop(Box::from_raw(channel));
    }
}

/// Runs the alternating transceiver optimisation from the default starting
/// point drawn with `cfg.rng_seed`.
///
/// # Safety
/// `cfg` and `channel` must be handles from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ota_optimize(
    cfg: *const OtaConfig,
    channel: *const OtaChannel,
    with_dp: bool,
    out: *mut *mut OtaDesign,
) -> OtaStatus {
    guard(|| {
        let (cfg, channel) = (deref(cfg, "cfg")?, deref(channel, "channel")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let mut rng = derived_rng(cfg.0.rng_seed, 0, 0, 0, 2);
        let init = PlannerInit::random(&cfg.0, &channel.0, &mut rng).map_err(lib_err)?;
        let opts = PlannerOptions { with_dp, ..PlannerOptions::default() };
        let (design, _) = optimize_transceivers(&cfg.0, &channel.0, &init, &opts).map_err(lib_err)?;
        put(out, OtaDesign(design));
        Ok(())
    })
}

/// Closed-form design for a single-antenna receiver (`num_antennas == 1`).
///
/// # Safety
/// `cfg` and `channel` must be handles from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ota_miso_design(
    cfg: *const OtaConfig,
    channel: *const OtaChannel,
    out: *mut *mut OtaDesign,
) -> OtaStatus {
    guard(|| {
        let (cfg, channel) = (deref(cfg, "cfg")?, deref(channel, "channel")?);
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, OtaDesign(miso_optimal_design(&cfg.0, &channel.0).map_err(lib_err)?.design));
        Ok(())
    })
}

/// Noise-induced loss term `A` of a design.
///
/// # Safety
/// All handles must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ota_design_objective(
    design: *const OtaDesign,
    cfg: *const OtaConfig,
    channel: *const OtaChannel,
    out: *mut f64,
) -> OtaStatus {
    guard(|| {
        let (design, cfg, channel) = (deref(design, "design")?, deref(cfg, "cfg")?, deref(channel, "channel")?);
        let out = deref_mut(out, "out")?;
        design.0.validate(&cfg.0, &channel.0).map_err(lib_err)?;
        *out = noise_term_a(&design.0, &channel.0, &cfg.0);
        Ok(())
    })
}

/// Privacy level ε_BS of `device` under the design's extractors.
///
/// # Safety
/// All handles must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ota_design_epsilon_bs(
    design: *const OtaDesign,
    cfg: *const OtaConfig,
    channel: *const OtaChannel,
    device: usize,
    out: *mut f64,
) -> OtaStatus {
    guard(|| {
        let (design, cfg, channel) = (deref(design, "design")?, deref(cfg, "cfg")?, deref(channel, "channel")?);
        let out = deref_mut(out, "out")?;
        design.0.validate(&cfg.0, &channel.0).map_err(lib_err)?;
        if device >= channel.0.num_devices() {
            return Err((OtaStatus::InvalidArgument, format!("device {device} out of range")));
        }
        *out = epsilon_bs(&design.0, &channel.0, &cfg.0, device).map_err(lib_err)?;
        Ok(())
    })
}

/// Aggregation normaliser η of a design.
///
/// # Safety
/// `design` must be a handle from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ota_design_eta(design: *const OtaDesign, out: *mut f64) -> OtaStatus {
    guard(|| {
        let design = deref(design, "design")?;
        *deref_mut(out, "out")? = design.0.eta;
        Ok(())
    })
}

/// Serialises a design as JSON; release the string with [`ota_string_free`].
///
/// # Safety
/// `design` must be a handle from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ota_design_to_json(design: *const OtaDesign, out: *mut *mut c_char) -> OtaStatus {
    guard(|| {
        let design = deref(design, "design")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = serde_json::to_string(&design.0).map_err(|e| lib_err(e.into()))?;
        *out = CString::new(json).expect("JSON has no NULs").into_raw();
        Ok(())
    })
}

/// # Safety
/// `design` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn ota_design_free(design: *mut OtaDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// # Safety
/// `s` must be a string returned by this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn ota_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
