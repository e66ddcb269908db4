use std::ffi::{CStr, CString};
use std::ptr;

use ota_dp::model::SystemConfig;
use ota_dp_ffi::*;

fn last_error() -> String {
    let p = ota_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config_handle(cfg: &SystemConfig) -> *mut OtaConfig {
    let text = CString::new(cfg.to_json().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { ota_config_from_json(text.as_ptr(), &mut handle) }, OtaStatus::Ok, "{}", last_error());
    handle
}

fn small(num_antennas: usize) -> SystemConfig {
    let mut c = SystemConfig::reference();
    c.num_devices = 3;
    c.num_antennas = num_antennas;
    c.model_dim = 5;
    c.rounds = 8;
    c.samples_per_device = vec![30; 3];
    c.dp_delta = vec![1e-3; 3];
    c.set_uniform_epsilon(5.0);
    c.outer_iters = 3;
    c.mm_iters = 20;
    c
}

fn small_config() -> *mut OtaConfig {
    config_handle(&small(4))
}

#[test]
fn design_round_trip() {
    let cfg = small_config();
    let mut channel = ptr::null_mut();
    unsafe {
        assert_eq!(ota_channel_generate(cfg, 7, &mut channel), OtaStatus::Ok);
        let mut design = ptr::null_mut();
        assert_eq!(ota_optimize(cfg, channel, true, &mut design), OtaStatus::Ok, "{}", last_error());

        let mut a = f64::NAN;
        assert_eq!(ota_design_objective(design, cfg, channel, &mut a), OtaStatus::Ok);
        assert!(a.is_finite() && a > 0.0);
        for m in 0..3 {
            let mut eps = f64::NAN;
            assert_eq!(ota_design_epsilon_bs(design, cfg, channel, m, &mut eps), OtaStatus::Ok);
            assert!(eps <= 5.0 * (1.0 + 1e-4), "device {m}: {eps}");
        }
        let mut eps = 0.0;
        assert_eq!(ota_design_epsilon_bs(design, cfg, channel, 3, &mut eps), OtaStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let mut eta = 0.0;
        assert_eq!(ota_design_eta(design, &mut eta), OtaStatus::Ok);
        assert!(eta > 0.0);

        let mut json = ptr::null_mut();
        assert_eq!(ota_design_to_json(design, &mut json), OtaStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["eta"].as_f64().unwrap(), eta);
        ota_string_free(json);

        ota_design_free(design);
        ota_channel_free(channel);
        ota_config_free(cfg);
    }
}

#[test]
fn dp_constrained_design_is_not_better_than_unconstrained() {
    let cfg = small_config();
    unsafe {
        let mut channel = ptr::null_mut();
        assert_eq!(ota_channel_generate(cfg, 11, &mut channel), OtaStatus::Ok);
        let (mut with_dp, mut without) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ota_optimize(cfg, channel, true, &mut with_dp), OtaStatus::Ok);
        assert_eq!(ota_optimize(cfg, channel, false, &mut without), OtaStatus::Ok);
        let (mut a_dp, mut a_free) = (0.0, 0.0);
        ota_design_objective(with_dp, cfg, channel, &mut a_dp);
        ota_design_objective(without, cfg, channel, &mut a_free);
        assert!(a_free <= a_dp * (1.0 + 1e-3), "{a_free} vs {a_dp}");
        ota_design_free(with_dp);
        ota_design_free(without);
        ota_channel_free(channel);
        ota_config_free(cfg);
    }
}

#[test]
fn miso_design_from_explicit_channel() {
    let cfg = small_config();
    unsafe {
        // Reject a multi-antenna configuration.
        let data: Vec<f64> = vec![1.0, 0.0, 0.5, -0.5, 0.2, 0.9];
        let mut channel = ptr::null_mut();
        assert_eq!(ota_channel_from_data(data.as_ptr(), 1, 3, &mut channel), OtaStatus::Ok, "{}", last_error());
        let mut design = ptr::null_mut();
        assert_ne!(ota_miso_design(cfg, channel, &mut design), OtaStatus::Ok);
        assert!(design.is_null());

        let miso_cfg = config_handle(&small(1));
        assert_eq!(ota_miso_design(miso_cfg, channel, &mut design), OtaStatus::Ok, "{}", last_error());
        let mut a = 0.0;
        assert_eq!(ota_design_objective(design, miso_cfg, channel, &mut a), OtaStatus::Ok);
        assert!(a > 0.0);
        ota_design_free(design);
        ota_config_free(miso_cfg);
        ota_channel_free(channel);
        ota_config_free(cfg);
    }
}

#[test]
fn argument_errors() {
    unsafe {
        assert_eq!(ota_config_default(ptr::null_mut()), OtaStatus::NullPointer);
        assert_eq!(ota_config_from_json(ptr::null(), &mut ptr::null_mut()), OtaStatus::NullPointer);
        let bad = CString::new("{not json").unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(ota_config_from_json(bad.as_ptr(), &mut cfg), OtaStatus::Serialization);
        assert!(cfg.is_null());

        assert_eq!(ota_config_default(&mut cfg), OtaStatus::Ok);
        assert_eq!(ota_config_set_epsilon(cfg, -1.0), OtaStatus::InvalidArgument);
        assert_eq!(ota_config_set_epsilon(cfg, f64::NAN), OtaStatus::InvalidArgument);
        assert_eq!(ota_config_set_epsilon(cfg, f64::INFINITY), OtaStatus::Ok);
        assert_eq!(ota_config_set_snr_db(cfg, f64::NAN), OtaStatus::InvalidArgument);
        assert_eq!(ota_config_set_snr_db(cfg, 20.0), OtaStatus::Ok);
        assert_eq!(ota_config_set_epsilon(ptr::null_mut(), 1.0), OtaStatus::NullPointer);
        assert!(last_error().contains("cfg"));

        let mut out = 0.0;
        assert_eq!(ota_design_eta(ptr::null(), &mut out), OtaStatus::NullPointer);
        ota_config_free(cfg);

        // Freeing NULL is a no-op.
        ota_config_free(ptr::null_mut());
        ota_channel_free(ptr::null_mut());
        ota_design_free(ptr::null_mut());
        ota_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ota_dp.h")).unwrap();
    for name in [
        "ota_last_error_message",
        "ota_config_default",
        "ota_config_from_json",
        "ota_config_set_epsilon",
        "ota_config_set_snr_db",
        "ota_config_free",
        "ota_channel_generate",
        "ota_channel_from_data",
        "ota_channel_free",
        "ota_optimize",
        "ota_miso_design",
        "ota_design_objective",
        "ota_design_epsilon_bs",
        "ota_design_eta",
        "ota_design_to_json",
        "ota_design_free",
        "ota_string_free",
        "OTA_STATUS_PANIC",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
