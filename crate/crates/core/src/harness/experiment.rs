use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airsim::{normalized_gap, train};
use crate::error::{Error, Result};
use crate::miso::miso_optimal_design;
use crate::model::{generate_channel, generate_ridge_dataset, ChannelMatrix, Epsilon, RidgeDataset, SystemConfig};
use crate::planner::{optimize_transceivers, PlannerInit, PlannerOptions};
use crate::privacy::{self, dp_report, TransceiverDesign};

/// Regulariser of the ridge-regression task.
pub const DEFAULT_REG_COEFFICIENT: f64 = 1e-3;
pub const DEFAULT_TRIALS: usize = 500;

/// Exact header of a results file.
pub const RESULT_HEADER: [&str; 8] =
    ["trial", "scheme", "sweep_name", "sweep_value", "gap", "eps_bs_mean", "feasible", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    Extractors,
    GapVsEpsilon,
    GapVsSnr,
    #[serde(rename = "gap_vs_T")]
    GapVsT,
    #[serde(rename = "gap_vs_N")]
    GapVsN,
}

impl FigureId {
    pub const ALL: [FigureId; 5] =
        [FigureId::Extractors, FigureId::GapVsEpsilon, FigureId::GapVsSnr, FigureId::GapVsT, FigureId::GapVsN];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Extractors => "extractors",
            FigureId::GapVsEpsilon => "gap_vs_epsilon",
            FigureId::GapVsSnr => "gap_vs_snr",
            FigureId::GapVsT => "gap_vs_T",
            FigureId::GapVsN => "gap_vs_N",
        }
    }

    /// Value written to the `sweep_name` column.
    pub fn sweep_name(self) -> &'static str {
        match self {
            FigureId::Extractors | FigureId::GapVsEpsilon => "epsilon",
            FigureId::GapVsSnr => "snr_db",
            FigureId::GapVsT => "rounds",
            FigureId::GapVsN => "antennas",
        }
    }

    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            FigureId::Extractors | FigureId::GapVsEpsilon => vec![1.0, 5.0, 10.0, 20.0, 30.0, 40.0, 60.0],
            FigureId::GapVsSnr => vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            FigureId::GapVsT => (1..=10).map(|t| 10.0 * t as f64).collect(),
            FigureId::GapVsN => vec![1.0, 2.0, 4.0, 8.0, 16.0, 20.0, 32.0],
        }
    }

    fn integer_sweep(self) -> bool {
        matches!(self, FigureId::GapVsT | FigureId::GapVsN)
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown figure id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    MimoDp,
    MisoDp,
    MimoNodp,
    MisoNodp,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::MimoDp, Scheme::MisoDp, Scheme::MimoNodp, Scheme::MisoNodp];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::MimoDp => "mimo_dp",
            Scheme::MisoDp => "miso_dp",
            Scheme::MimoNodp => "mimo_nodp",
            Scheme::MisoNodp => "miso_nodp",
        }
    }

    pub fn with_dp(self) -> bool {
        matches!(self, Scheme::MimoDp | Scheme::MisoDp)
    }

    pub fn multi_antenna(self) -> bool {
        matches!(self, Scheme::MimoDp | Scheme::MimoNodp)
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme {s:?}")))
    }
}

/// Extractor families compared in the extractor experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorKind {
    Mmse,
    Combiner,
    Random,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 3] = [ExtractorKind::Mmse, ExtractorKind::Combiner, ExtractorKind::Random];

    pub fn label(self) -> &'static str {
        match self {
            ExtractorKind::Mmse => "extractor_mmse",
            ExtractorKind::Combiner => "extractor_combiner",
            ExtractorKind::Random => "extractor_random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub figure: FigureId,
    /// Ignored by the extractor experiment, which always plans with `mimo_dp`.
    pub schemes: Vec<Scheme>,
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub base: SystemConfig,
    pub seed: u64,
    pub reg_coefficient: f64,
}

impl ExperimentSpec {
    /// Default sweep, all four schemes and the default scenario.
    pub fn new(figure: FigureId, trials: usize, seed: u64) -> Self {
        ExperimentSpec {
            figure,
            schemes: Scheme::ALL.to_vec(),
            sweep: figure.default_sweep(),
            trials,
            base: SystemConfig::reference(),
            seed,
            reg_coefficient: DEFAULT_REG_COEFFICIENT,
        }
    }

    pub fn with_schemes(mut self, schemes: &[Scheme]) -> Self {
        self.schemes = schemes.to_vec();
        self
    }

    pub fn with_sweep(mut self, sweep: &[f64]) -> Self {
        self.sweep = sweep.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.sweep.is_empty() {
            return bad("sweep must not be empty".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.figure != FigureId::Extractors && self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return bad(format!("scheme {s} listed twice"));
            }
        }
        if self.sweep.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite".into());
        }
        if self.figure.integer_sweep() && self.sweep.iter().any(|&v| !(v >= 1.0 && v.fract() == 0.0)) {
            return bad(format!("{} sweep values must be positive integers", self.figure.sweep_name()));
        }
        if (self.figure == FigureId::Extractors || self.figure == FigureId::GapVsEpsilon)
            && self.sweep.iter().any(|&v| v <= 0.0)
        {
            return bad("epsilon sweep values must be positive".into());
        }
        if !(self.reg_coefficient > 0.0) {
            return bad("reg_coefficient must be positive".into());
        }
        self.base.validate()
    }

    /// Configuration at one sweep point.
    pub fn config_at(&self, value: f64) -> SystemConfig {
        let mut cfg = self.base.clone();
        match self.figure {
            FigureId::Extractors | FigureId::GapVsEpsilon => cfg.set_uniform_epsilon(value),
            FigureId::GapVsSnr => cfg.set_snr_db(value),
            FigureId::GapVsT => cfg.rounds = value as usize,
            FigureId::GapVsN => cfg.num_antennas = value as usize,
        }
        cfg
    }

    /// Row labels in output order.
    pub fn row_labels(&self) -> Vec<&'static str> {
        if self.figure == FigureId::Extractors {
            ExtractorKind::ALL.iter().map(|k| k.label()).collect()
        } else {
            self.schemes.iter().map(|s| s.as_str()).collect()
        }
    }

    fn channel_antennas(&self) -> usize {
        if self.figure == FigureId::GapVsN {
            self.sweep.iter().fold(1.0f64, |a, &b| a.max(b)) as usize
        } else {
            self.base.num_antennas
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: usize,
    pub scheme: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    /// NaN when the instance was infeasible.
    pub gap: f64,
    pub eps_bs_mean: f64,
    pub feasible: bool,
    pub seed: u64,
}

impl ResultRow {
    fn infeasible(trial: usize, label: &str, name: &str, value: f64, seed: u64) -> Self {
        ResultRow {
            trial,
            scheme: label.to_string(),
            sweep_name: name.to_string(),
            sweep_value: value,
            gap: f64::NAN,
            eps_bs_mean: f64::NAN,
            feasible: false,
            seed,
        }
    }
}

/// Stream purposes; the low four bits of a stream id.
#[derive(Clone, Copy)]
enum Purpose {
    Channel = 0,
    Dataset = 1,
    Init = 2,
    Training = 3,
    Extractor = 4,
}

/// Scheme slot for streams shared by every scheme of a trial.
const SHARED: u64 = 0xff;

/// Counter-based split of the master seed: the stream id packs the trial,
/// scheme and sweep indices and the purpose.
pub fn derived_rng(master: u64, trial: usize, scheme: u64, sweep: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(
        ((trial as u64) << 24) | ((scheme & 0xff) << 16) | (((sweep as u64) & 0xfff) << 4) | (purpose & 0xf),
    );
    rng
}

fn stream(spec: &ExperimentSpec, trial: usize, scheme: u64, sweep: usize, purpose: Purpose) -> ChaCha8Rng {
    derived_rng(spec.seed, trial, scheme, sweep, purpose as u64)
}

/// Errors that make a single instance infeasible rather than aborting the run.
fn is_instance_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Infeasible(_) | Error::NumericalFailure(_) | Error::RankTooHigh { .. } | Error::DegenerateChannel { .. }
    )
}

struct Trial<'a> {
    spec: &'a ExperimentSpec,
    index: usize,
    channel: ChannelMatrix,
    dataset: RidgeDataset,
    /// `(μ, ω)` of the dataset.
    curvature: (f64, f64),
}

struct Planned {
    design: TransceiverDesign,
    cfg: SystemConfig,
    channel: ChannelMatrix,
    feasible: bool,
}

impl Trial<'_> {
    fn config(&self, value: f64) -> SystemConfig {
        let mut cfg = self.spec.config_at(value).with_curvature(self.curvature.0, self.curvature.1);
        cfg.rng_seed = self.spec.seed ^ ((self.index as u64) << 20);
        cfg
    }

    fn plan(&self, scheme: Scheme, mut cfg: SystemConfig) -> Result<Option<Planned>> {
        if !scheme.with_dp() {
            cfg.dp_epsilon = vec![Epsilon::NONE; cfg.num_devices];
        }
        let outcome = if scheme.multi_antenna() {
            let channel = self.channel.truncated(cfg.num_antennas)?;
            let init =
                PlannerInit::random(&cfg, &channel, &mut stream(self.spec, self.index, SHARED, 0, Purpose::Init));
            init.and_then(|init| {
                let opts = PlannerOptions { with_dp: scheme.with_dp(), ..PlannerOptions::default() };
                optimize_transceivers(&cfg, &channel, &init, &opts)
            })
            .map(|(design, trace)| Planned {
                feasible: trace.report.all_feasible(),
                design,
                cfg: cfg.clone(),
                channel,
            })
        } else {
            cfg.num_antennas = 1;
            let channel = self.channel.truncated(1)?;
            miso_optimal_design(&cfg, &channel).and_then(|sol| {
                let report = dp_report(&sol.design, &channel, &cfg)?;
                Ok(Planned { feasible: report.all_feasible(), design: sol.design, cfg: cfg.clone(), channel })
            })
        };
        match outcome {
            Ok(p) => Ok(Some(p)),
            Err(e) if is_instance_failure(&e) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn evaluate(&self, planned: &Planned, scheme_tag: u64, sweep: usize) -> Result<(f64, f64)> {
        let mut rng = stream(self.spec, self.index, scheme_tag, sweep, Purpose::Training);
        let result = train(&planned.cfg, &planned.channel, &planned.design, &self.dataset, &mut rng)?;
        let gap = normalized_gap(&result, &self.dataset)?;
        let eps = dp_report(&planned.design, &planned.channel, &planned.cfg)?.mean_eps_bs();
        Ok((gap, eps))
    }

    fn scheme_rows(&self, scheme: Scheme) -> Result<Vec<ResultRow>> {
        let spec = self.spec;
        let name = spec.figure.sweep_name();
        // No-DP designs do not depend on ε or T.
        let reusable = !scheme.with_dp() && matches!(spec.figure, FigureId::GapVsEpsilon | FigureId::GapVsT);
        let mut cached: Option<Option<Planned>> = None;
        let mut rows = Vec::with_capacity(spec.sweep.len());
        for (si, &value) in spec.sweep.iter().enumerate() {
            let cfg = self.config(value);
            let planned = if reusable {
                if cached.is_none() {
                    cached = Some(self.plan(scheme, cfg.clone())?);
                }
                cached.as_ref().unwrap().as_ref().map(|p| Planned {
                    design: p.design.clone(),
                    cfg: {
                        let mut c = p.cfg.clone();
                        c.rounds = cfg.rounds;
                        c
                    },
                    channel: p.channel.clone(),
                    feasible: p.feasible,
                })
            } else {
                self.plan(scheme, cfg)?
            };
            let row = match planned {
                Some(p) if p.feasible => {
                    let (gap, eps) = self.evaluate(&p, scheme.tag(), si)?;
                    ResultRow {
                        trial: self.index,
                        scheme: scheme.as_str().into(),
                        sweep_name: name.into(),
                        sweep_value: value,
                        gap,
                        eps_bs_mean: eps,
                        feasible: true,
                        seed: spec.seed,
                    }
                }
                _ => ResultRow::infeasible(self.index, scheme.as_str(), name, value, spec.seed),
            };
            rows.push(row);
        }
        Ok(rows)
    }

    fn extractor_rows(&self) -> Result<Vec<Vec<ResultRow>>> {
        let spec = self.spec;
        let name = spec.figure.sweep_name();
        let mut out: Vec<Vec<ResultRow>> = vec![Vec::new(); ExtractorKind::ALL.len()];
        for (si, &value) in spec.sweep.iter().enumerate() {
            let planned = match self.plan(Scheme::MimoDp, self.config(value))? {
                Some(p) if p.feasible => p,
                _ => {
                    for (k, kind) in ExtractorKind::ALL.iter().enumerate() {
                        out[k].push(ResultRow::infeasible(self.index, kind.label(), name, value, spec.seed));
                    }
                    continue;
                }
            };
            let (gap, _) = self.evaluate(&planned, Scheme::MimoDp.tag(), si)?;
            let (cfg, channel) = (&planned.cfg, &planned.channel);
            let mut design = planned.design.clone();
            design.extractors = privacy::mmse_extractors(channel, &design, cfg)?;
            let mut rng = stream(spec, self.index, SHARED, si, Purpose::Extractor);
            for (k, kind) in ExtractorKind::ALL.iter().enumerate() {
                let variant = match kind {
                    ExtractorKind::Mmse => design.clone(),
                    ExtractorKind::Combiner => design.with_combiner_extractors(),
                    ExtractorKind::Random => {
                        let mut d = design.clone();
                        d.extractors = (0..channel.num_devices())
                            .map(|_| privacy::random_extractor(channel.num_antennas(), &mut rng))
                            .collect();
                        d
                    }
                };
                let eps = dp_report(&variant, channel, cfg)?.mean_eps_bs();
                out[k].push(ResultRow {
                    trial: self.index,
                    scheme: kind.label().into(),
                    sweep_name: name.into(),
                    sweep_value: value,
                    gap,
                    eps_bs_mean: eps,
                    feasible: true,
                    seed: spec.seed,
                });
            }
        }
        Ok(out)
    }

    /// Rows grouped by row label, in label order.
    fn run(&self) -> Result<Vec<Vec<ResultRow>>> {
        if self.spec.figure == FigureId::Extractors {
            self.extractor_rows()
        } else {
            self.spec.schemes.iter().map(|&s| self.scheme_rows(s)).collect()
        }
    }
}

fn setup_trial(spec: &ExperimentSpec, index: usize) -> Result<Trial<'_>> {
    let mut env = spec.base.clone();
    env.num_antennas = spec.channel_antennas();
    let channel = generate_channel(&env, &mut stream(spec, index, SHARED, 0, Purpose::Channel));
    let dataset = generate_ridge_dataset(
        &spec.base,
        spec.reg_coefficient,
        &mut stream(spec, index, SHARED, 0, Purpose::Dataset),
    )?;
    let curvature = dataset.strong_convexity_params();
    Ok(Trial { spec, index, channel, dataset, curvature })
}

/// Runs every trial and returns rows sorted by (row label, sweep point, trial).
///
/// Each trial draws its channel, dataset and planner starting point from
/// streams shared by all schemes; training noise has its own stream per
/// (trial, scheme, sweep point).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let per_trial: Vec<Vec<Vec<ResultRow>>> =
        (0..spec.trials).into_par_iter().map(|t| setup_trial(spec, t)?.run()).collect::<Result<_>>()?;
    let labels = spec.row_labels().len();
    let mut rows = Vec::with_capacity(spec.trials * spec.sweep.len() * labels);
    for label in 0..labels {
        for sweep in 0..spec.sweep.len() {
            for trial in &per_trial {
                rows.push(trial[label][sweep].clone());
            }
        }
    }
    Ok(rows)
}

fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:?}")
    }
}

pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.trial.to_string(),
            r.scheme.clone(),
            r.sweep_name.clone(),
            format_real(r.sweep_value),
            format_real(r.gap),
            format_real(r.eps_bs_mean),
            r.feasible.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| Error::Schema(format!("line {line}: cannot parse {:?} in column {}", raw, RESULT_HEADER[i])))
}

/// Parses a results file, rejecting any deviation from the fixed schema.
pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RESULT_HEADER.iter().copied()) {
        return Err(Error::Schema(format!(
            "expected header {:?}, found {:?}",
            RESULT_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != RESULT_HEADER.len() {
            return Err(Error::Schema(format!("line {line}: expected {} fields", RESULT_HEADER.len())));
        }
        rows.push(ResultRow {
            trial: parse_field(&rec, 0, line)?,
            scheme: rec[1].to_string(),
            sweep_name: rec[2].to_string(),
            sweep_value: parse_field(&rec, 3, line)?,
            gap: parse_field(&rec, 4, line)?,
            eps_bs_mean: parse_field(&rec, 5, line)?,
            feasible: parse_field(&rec, 6, line)?,
            seed: parse_field(&rec, 7, line)?,
        });
    }
    Ok(rows)
}
