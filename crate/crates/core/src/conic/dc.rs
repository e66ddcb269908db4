use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::sdp::{solve_sdp_mm_step, SdpSubproblem, TAU_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::{self, C64};

/// Largest admissible `λ₂/λ₁` for a rank-one factorisation.
pub const RANK_ONE_RATIO: f64 = 0.1;

/// Relative change of the penalised objective below which the MM loop stops.
pub const MM_STOP_RTOL: f64 = 1e-7;

/// Relative trace gap above which the MM loop is restarted once.
pub const RESTART_GAP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct DcResult {
    pub f: DMatrix<C64>,
    pub tau: f64,
    /// `tr F − ‖F‖₂ ≥ 0`.
    pub trace_gap: f64,
    /// Penalised objective after each MM step.
    pub objectives: Vec<f64>,
    pub iterations: usize,
}

impl DcResult {
    pub fn relative_trace_gap(&self) -> f64 {
        self.trace_gap / self.tau
    }
}

/// Diagnostic summary of a DC solve, suitable for JSON dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcSummary {
    pub tau: f64,
    pub trace_gap: f64,
    pub objectives: Vec<f64>,
    pub iterations: usize,
}

impl From<&DcResult> for DcSummary {
    fn from(r: &DcResult) -> Self {
        DcSummary { tau: r.tau, trace_gap: r.trace_gap, objectives: r.objectives.clone(), iterations: r.iterations }
    }
}

/// Unit eigenvector of the largest eigenvalue.
///
/// For a repeated top eigenvalue the first canonical axis with a nonzero
/// projection onto the top eigenspace is used; the phase is fixed so that the
/// largest-modulus entry is real and positive.
pub fn principal_eigvec(f: &DMatrix<C64>) -> Vec<C64> {
    let n = f.nrows();
    let (eigs, vecs) = linalg::hermitian_eigh(f);
    let scale = eigs[0].abs().max(eigs[n - 1].abs()).max(1e-300);
    let mult = eigs.iter().take_while(|&&l| (eigs[0] - l) <= 1e-12 * scale).count();
    let mut v: Vec<C64> = if mult <= 1 {
        vecs.column(0).iter().copied().collect()
    } else {
        let basis = vecs.columns(0, mult);
        let proj = basis * basis.adjoint();
        (0..n)
            .find_map(|k| {
                let col: Vec<C64> = proj.column(k).iter().copied().collect();
                (linalg::norm(&col) > 1e-8).then_some(col)
            })
            .expect("a nonzero eigenspace projects onto some canonical axis")
    };
    v = linalg::normalized(&v).expect("eigenvector is nonzero");
    linalg::fix_phase(&mut v);
    v
}

/// Recovers `(f₀, η)` from a near rank-one `F = f₀f₀ᴴ/η`.
pub fn rank_one_factor(f: &DMatrix<C64>, tau: f64) -> Result<(Vec<C64>, f64)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    let (eigs, _) = linalg::hermitian_eigh(f);
    if !(eigs[0] > 0.0) {
        return Err(Error::NumericalFailure("matrix has no positive eigenvalue".into()));
    }
    let ratio = eigs.get(1).map_or(0.0, |l| l.max(0.0) / eigs[0]);
    if ratio > RANK_ONE_RATIO {
        return Err(Error::RankTooHigh { ratio });
    }
    Ok((principal_eigvec(f), 1.0 / tau))
}

/// Penalised SDP solved by majorisation-minimisation: each step linearises
/// `‖F‖₂` at the principal eigenvector of the previous iterate.
///
/// Without `init_direction` the first direction comes from the unpenalised
/// relaxation. Stops after `max_iters` steps or once the penalised objective
/// changes by less than [`MM_STOP_RTOL`] relative. A run ending with a
/// relative trace gap above [`RESTART_GAP`] is repeated once from the
/// direction `Σ√λ_i·u_i` of its eigenpairs.
pub fn solve_dc_sdp(
    instance: &SdpSubproblem,
    penalty: f64,
    max_iters: usize,
    init_direction: Option<&[C64]>,
    tol: f64,
) -> Result<DcResult> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument("at least one MM iteration is required".into()));
    }
    let mut p = instance.clone();
    p.penalty = penalty;
    let zeta = match init_direction {
        Some(z) => linalg::normalized(z).ok_or_else(|| Error::InvalidArgument("initial direction is zero".into()))?,
        None => {
            let mut relaxed = p.clone();
            relaxed.direction = None;
            principal_eigvec(&solve_sdp_mm_step(&relaxed, tol)?.f)
        }
    };

    let first = mm_loop(&mut p, zeta, max_iters, tol)?;
    if first.relative_trace_gap() <= RESTART_GAP {
        return Ok(first);
    }
    // Stalled at a symmetric stationary point: restart once from the
    // direction that combines all eigenvectors and keep the better result.
    let (eigs, vecs) = linalg::hermitian_eigh(&first.f);
    let combined: Vec<C64> =
        (0..eigs.len()).map(|i| vecs.row(i).iter().zip(&eigs).map(|(u, l)| u * l.max(0.0).sqrt()).sum()).collect();
    let Some(restart) = linalg::normalized(&combined) else { return Ok(first) };
    let second = mm_loop(&mut p, restart, max_iters, tol)?;
    let (a, b) = (p.penalized_objective(&first.f), p.penalized_objective(&second.f));
    Ok(if b < a { second } else { first })
}

fn mm_loop(p: &mut SdpSubproblem, mut zeta: Vec<C64>, max_iters: usize, tol: f64) -> Result<DcResult> {
    let mut objectives = Vec::with_capacity(max_iters);
    let mut last = None;
    for j in 0..max_iters {
        p.direction = Some(zeta);
        let step = solve_sdp_mm_step(p, tol)?;
        let obj = p.penalized_objective(&step.f);
        let prev = objectives.last().copied();
        objectives.push(obj);
        zeta = principal_eigvec(&step.f);
        last = Some(step);
        if let Some(prev) = prev {
            if (prev - obj).abs() <= MM_STOP_RTOL * obj.abs().max(f64::MIN_POSITIVE) {
                let step = last.take().unwrap();
                return Ok(finish(step.f, objectives, j + 1));
            }
        }
    }
    let step = last.expect("at least one iteration ran");
    Ok(finish(step.f, objectives, max_iters))
}

fn finish(f: DMatrix<C64>, objectives: Vec<f64>, iterations: usize) -> DcResult {
    let (eigs, _) = linalg::hermitian_eigh(&f);
    let tau = linalg::real_trace(&f).max(TAU_FLOOR);
    let trace_gap = (tau - eigs[0]).max(0.0);
    DcResult { f, tau, trace_gap, objectives, iterations }
}
