use serde::{Deserialize, Serialize};

use super::experiment::{derived_rng, Scheme, DEFAULT_REG_COEFFICIENT};
use crate::airsim::{normalized_gap, train, TrainResult};
use crate::error::{Error, Result};
use crate::miso::miso_optimal_design;
use crate::model::{generate_channel, generate_ridge_dataset, ChannelMatrix, Epsilon, RidgeDataset, SystemConfig};
use crate::planner::{
    feasibility_check, optimize_transceivers, FeasibilityReport, PlannerInit, PlannerOptions, PlannerTrace,
};
use crate::privacy::{dp_report, DpReport, TransceiverDesign};

const CHANNEL_STREAM: u64 = 0;
const DATASET_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TRAINING_STREAM: u64 = 3;

/// Channel, dataset and a configuration carrying the dataset's curvature,
/// all derived from `cfg.rng_seed`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: SystemConfig,
    pub channel: ChannelMatrix,
    pub dataset: RidgeDataset,
}

pub fn build_scenario(cfg: &SystemConfig) -> Result<Scenario> {
    cfg.validate()?;
    let seed = cfg.rng_seed;
    let channel = generate_channel(cfg, &mut derived_rng(seed, 0, 0, 0, CHANNEL_STREAM));
    let dataset =
        generate_ridge_dataset(cfg, DEFAULT_REG_COEFFICIENT, &mut derived_rng(seed, 0, 0, 0, DATASET_STREAM))?;
    let (mu, omega) = dataset.strong_convexity_params();
    Ok(Scenario { cfg: cfg.clone().with_curvature(mu, omega), channel, dataset })
}

/// Output of the `optimize` command; input of the `train` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub scheme: Scheme,
    /// Configuration the design was computed for; for single-antenna schemes
    /// `num_antennas` is 1.
    pub config: SystemConfig,
    pub channel: ChannelMatrix,
    pub design: TransceiverDesign,
    pub dp: DpReport,
    pub feasibility: FeasibilityReport,
    pub feasible: bool,
    /// Present for the multi-antenna schemes.
    pub trace: Option<PlannerTrace>,
}

/// Designs transceivers for the scenario of `cfg` under `scheme`.
pub fn optimize_command(cfg: &SystemConfig, scheme: Scheme) -> Result<OptimizeReport> {
    let scenario = build_scenario(cfg)?;
    let mut cfg = scenario.cfg;
    if !scheme.with_dp() {
        cfg.dp_epsilon = vec![Epsilon::NONE; cfg.num_devices];
    }
    let (design, channel, trace) = if scheme.multi_antenna() {
        let channel = scenario.channel;
        let init = PlannerInit::random(&cfg, &channel, &mut derived_rng(cfg.rng_seed, 0, 0, 0, INIT_STREAM))?;
        let opts = PlannerOptions { with_dp: scheme.with_dp(), ..PlannerOptions::default() };
        let (design, trace) = optimize_transceivers(&cfg, &channel, &init, &opts)?;
        (design, channel, Some(trace))
    } else {
        cfg.num_antennas = 1;
        let channel = scenario.channel.truncated(1)?;
        (miso_optimal_design(&cfg, &channel)?.design, channel, None)
    };
    let dp = dp_report(&design, &channel, &cfg)?;
    let feasibility = feasibility_check(&design, &cfg, &channel)?;
    Ok(OptimizeReport { scheme, feasible: dp.all_feasible(), config: cfg, channel, design, dp, feasibility, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub scheme: Scheme,
    pub normalized_gap: f64,
    pub result: TrainResult,
}

/// Trains with a stored design on the dataset of `cfg`'s seed.
pub fn train_command(cfg: &SystemConfig, report: &OptimizeReport) -> Result<TrainReport> {
    let scenario = build_scenario(cfg)?;
    let mut run_cfg = report.config.clone();
    run_cfg.rounds = cfg.rounds;
    run_cfg.strong_convexity = scenario.cfg.strong_convexity;
    run_cfg.smoothness = scenario.cfg.smoothness;
    run_cfg.learning_rate = cfg.learning_rate;
    if run_cfg.samples_per_device != scenario.cfg.samples_per_device || run_cfg.model_dim != scenario.cfg.model_dim {
        return Err(Error::InvalidArgument("design was computed for a different dataset layout".into()));
    }
    let mut rng = derived_rng(cfg.rng_seed, 0, 0, 0, TRAINING_STREAM);
    let result = train(&run_cfg, &report.channel, &report.design, &scenario.dataset, &mut rng)?;
    let gap = normalized_gap(&result, &scenario.dataset)?;
    Ok(TrainReport { scheme: report.scheme, normalized_gap: gap, result })
}
