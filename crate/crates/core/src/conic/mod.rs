//! Interior-point solvers for the transceiver subproblems: a Hermitian SDP
//! with rank-one constraints, its DC rank-one penalty loop, and a small LP.

mod dc;
mod lp;
mod sdp;

pub use dc::{principal_eigvec, rank_one_factor, solve_dc_sdp, DcResult, DcSummary, MM_STOP_RTOL, RANK_ONE_RATIO};
pub use lp::{solve_lp, LpProblem, LpSolution};
pub use sdp::{
    solve_rank_one_sdp, solve_sdp_mm_step, SdpSolution, SdpStep, SdpSubproblem, DEFAULT_TOL, MAX_ITERS, TAU_FLOOR,
};
