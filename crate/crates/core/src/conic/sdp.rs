use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, matmul as mm, C64};

/// Iteration cap of the interior-point solvers.
pub const MAX_ITERS: usize = 200;
/// Default relative tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Floor on `tr(F)`; keeps the aggregation normaliser finite.
pub const TAU_FLOOR: f64 = 1e-12;

/// One convex subproblem of the penalised transceiver SDP:
///
/// minimise `Σ_m w_m·h_mᴴFh_m + σ²·tr F + ρ·tr(F(I − ζζᴴ))`
/// subject to `h_mᴴFh_m ≥ b_m`, `F ⪰ 0`, with `τ = tr F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSubproblem {
    pub channels: Vec<Vec<C64>>,
    /// Artificial-noise powers `s2_m²` weighting each channel's cost term.
    pub noise_weights: Vec<f64>,
    pub noise_var: f64,
    /// Combined lower bounds (the larger of the privacy and power families).
    pub lower_bounds: Vec<f64>,
    pub penalty: f64,
    /// Direction of the linearised penalty; `None` drops the penalty term.
    pub direction: Option<Vec<C64>>,
}

impl SdpSubproblem {
    pub fn dim(&self) -> usize {
        self.channels.first().map_or(0, |h| h.len())
    }

    /// Cost matrix without the penalty term.
    pub fn base_cost(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut c = DMatrix::<C64>::identity(n, n) * C64::new(self.noise_var, 0.0);
        for (h, &w) in self.channels.iter().zip(&self.noise_weights) {
            if w != 0.0 {
                let v = linalg::to_dvector(h);
                c += &v * v.adjoint() * C64::new(w, 0.0);
            }
        }
        c
    }

    /// Cost matrix including `ρ(I − ζζᴴ)` when a direction is set.
    pub fn cost(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut c = self.base_cost();
        if let Some(z) = &self.direction {
            let v = linalg::to_dvector(z);
            c += (DMatrix::<C64>::identity(n, n) - &v * v.adjoint()) * C64::new(self.penalty, 0.0);
        }
        c
    }

    /// Penalised objective `⟨C₀,F⟩ + ρ(tr F − λ₁(F))`.
    pub fn penalized_objective(&self, f: &DMatrix<C64>) -> f64 {
        let (eigs, _) = linalg::hermitian_eigh(f);
        let trace = linalg::real_trace(f);
        linalg::re_trace_product(&self.base_cost(), f) + self.penalty * (trace - eigs[0])
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        let m = self.channels.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("subproblem needs at least one channel".into()));
        }
        if self.channels.iter().any(|h| h.len() != n) || self.noise_weights.len() != m || self.lower_bounds.len() != m {
            return Err(Error::InvalidArgument("subproblem dimensions disagree".into()));
        }
        if !(self.noise_var >= 0.0) || !(self.penalty >= 0.0) || self.noise_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        if let Some(z) = &self.direction {
            if z.len() != n {
                return Err(Error::InvalidArgument("direction has the wrong length".into()));
            }
        }
        Ok(())
    }
}

/// Solution of one subproblem.
#[derive(Debug, Clone)]
pub struct SdpStep {
    pub f: DMatrix<C64>,
    pub tau: f64,
    /// Value of the (linearised) objective at `f`.
    pub objective: f64,
    pub dual_objective: f64,
    pub duals: Vec<f64>,
    pub iterations: usize,
}

/// Solves one MM subproblem to relative tolerance `tol`.
pub fn solve_sdp_mm_step(p: &SdpSubproblem, tol: f64) -> Result<SdpStep> {
    p.validate()?;
    let sol = solve_rank_one_sdp(&p.cost(), &p.channels, &p.lower_bounds, tol)?;
    let tau = linalg::real_trace(&sol.x).max(TAU_FLOOR);
    Ok(SdpStep {
        tau,
        objective: sol.primal_objective,
        dual_objective: sol.dual_objective,
        duals: sol.duals,
        iterations: sol.iterations,
        f: sol.x,
    })
}

/// Output of [`solve_rank_one_sdp`].
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<C64>,
    pub duals: Vec<f64>,
    pub dual_slack: DMatrix<C64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

/// Primal-dual interior-point method (Mehrotra predictor-corrector, HKM
/// direction) for
///
/// minimise `⟨C, X⟩` subject to `a_iᴴXa_i ≥ b_i`, `X ⪰ 0`
///
/// over complex Hermitian `X`. Dual: maximise `bᵀy` subject to
/// `Σ y_i a_ia_iᴴ + Z = C`, `y ≥ 0`, `Z ⪰ 0`.
pub fn solve_rank_one_sdp(cost: &DMatrix<C64>, vectors: &[Vec<C64>], lower: &[f64], tol: f64) -> Result<SdpSolution> {
    let n = cost.nrows();
    let m = vectors.len();
    if lower.len() != m || vectors.iter().any(|a| a.len() != n) || cost.ncols() != n {
        return Err(Error::InvalidArgument("SDP dimensions disagree".into()));
    }
    // Infeasibility probe: X = t·I satisfies every constraint for large t
    // unless some a_i vanishes with b_i > 0.
    for (i, (a, &b)) in vectors.iter().zip(lower).enumerate() {
        if !b.is_finite() {
            return Err(Error::Infeasible(format!("constraint {i} has a non-finite bound")));
        }
        if linalg::norm(a) == 0.0 && b > 0.0 {
            return Err(Error::Infeasible(format!("constraint {i} cannot be met by any F")));
        }
    }

    // Scale to unit-norm constraint vectors, unit-size bounds and costs.
    let norms: Vec<f64> = vectors.iter().map(|a| linalg::norm(a)).collect();
    let a_hat: Vec<DVector<C64>> = vectors
        .iter()
        .zip(&norms)
        .map(|(a, &nrm)| {
            let s = if nrm > 0.0 { 1.0 / nrm } else { 0.0 };
            DVector::from_iterator(n, a.iter().map(|z| z * s))
        })
        .collect();
    let b_unit: Vec<f64> =
        lower.iter().zip(&norms).map(|(&b, &nrm)| if nrm > 0.0 { b / (nrm * nrm) } else { b.min(0.0) }).collect();
    let beta = match b_unit.iter().fold(0.0f64, |acc, b| acc.max(b.abs())) {
        v if v > 0.0 => v,
        _ => 1.0,
    };
    let gamma = {
        let g = cost.norm() / (n as f64).sqrt();
        if g > 0.0 {
            g
        } else {
            1.0
        }
    };
    let c_hat = linalg::hermitian_part(&(cost / C64::new(gamma, 0.0)));
    let b_hat: Vec<f64> = b_unit.iter().map(|b| b / beta).collect();

    let ipm = HermitianIpm { c: &c_hat, a: &a_hat, b: &b_hat, n, m };
    let raw = ipm.run(tol)?;

    let x = raw.x * C64::new(beta, 0.0);
    let duals: Vec<f64> =
        raw.y.iter().zip(&norms).map(|(&y, &nrm)| if nrm > 0.0 { y * gamma / (nrm * nrm) } else { 0.0 }).collect();
    let dual_slack = raw.z * C64::new(gamma, 0.0);
    let primal_objective = linalg::re_trace_product(cost, &x);
    let dual_objective: f64 = duals.iter().zip(lower).map(|(y, b)| y * b).sum();
    Ok(SdpSolution { x, duals, dual_slack, primal_objective, dual_objective, iterations: raw.iterations })
}

struct RawSolution {
    x: DMatrix<C64>,
    y: Vec<f64>,
    z: DMatrix<C64>,
    iterations: usize,
}

struct HermitianIpm<'a> {
    c: &'a DMatrix<C64>,
    a: &'a [DVector<C64>],
    b: &'a [f64],
    n: usize,
    m: usize,
}

fn lower_inverse(chol: &Cholesky<C64, Dyn>, n: usize) -> DMatrix<C64> {
    chol.l().solve_lower_triangular(&DMatrix::identity(n, n)).expect("nonsingular factor")
}

struct Direction {
    dx: DMatrix<C64>,
    ds: Vec<f64>,
    dy: Vec<f64>,
    dz: DMatrix<C64>,
}

struct Iterate {
    x: DMatrix<C64>,
    s: Vec<f64>,
    y: Vec<f64>,
    z: DMatrix<C64>,
}

fn cz(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Fraction of the distance to the boundary taken by each step.
const STEP_FRACTION: f64 = 0.98;
/// Fraction used when the longest feasible step is short.
const STEP_FRACTION_MIN: f64 = 0.9;
/// Steps are never longer than one, so boundary distances beyond this are not resolved.
const STEP_CAP: f64 = 1.0 / STEP_FRACTION;
/// Bisections for the predictor step, which only sets the centering weight.
const PREDICTOR_BISECTIONS: usize = 5;

/// `min(STEP_CAP, largest α with X + α·dX ⪰ 0)`, given `L⁻¹` for the
/// Cholesky factor `L` of `X`.
fn psd_step(x: &DMatrix<C64>, l_inv: &DMatrix<C64>, dx: &DMatrix<C64>) -> f64 {
    if linalg::is_positive_definite_along(x, dx, STEP_CAP) {
        return STEP_CAP;
    }
    let mat = linalg::hermitian_part(&mm(&mm(l_inv, dx), &l_inv.adjoint()));
    let lam_min = mat.symmetric_eigenvalues().min();
    if lam_min < 0.0 {
        (-1.0 / lam_min).min(STEP_CAP)
    } else {
        STEP_CAP
    }
}

/// Lower bracket of the largest feasible step from a few Cholesky bisections;
/// accurate to `STEP_CAP/2^PREDICTOR_BISECTIONS`.
fn psd_step_coarse(x: &DMatrix<C64>, dx: &DMatrix<C64>) -> f64 {
    let feasible = |a: f64| linalg::is_positive_definite_along(x, dx, a);
    if feasible(STEP_CAP) {
        return STEP_CAP;
    }
    let (mut lo, mut hi) = (0.0, STEP_CAP);
    for _ in 0..PREDICTOR_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn ratio_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, &d)| d < 0.0).map(|(&x, &d)| -x / d).fold(f64::INFINITY, f64::min)
}

impl HermitianIpm<'_> {
    fn run(&self, tol: f64) -> Result<RawSolution> {
        let (n, m) = (self.n, self.m);
        let b_max = self.b.iter().fold(0.0f64, |acc, b| acc.max(*b));
        let x0 = (1.0 + b_max).max(1.0) * 1.5;
        let z0 = 1.0 + self.c.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
        let mut it = Iterate {
            x: DMatrix::identity(n, n) * cz(x0),
            s: self.a.iter().zip(self.b).map(|(a, b)| (x0 * a.norm_squared() - b).max(1.0)).collect(),
            y: vec![1.0; m],
            z: DMatrix::identity(n, n) * cz(z0),
        };
        let b_norm = 1.0 + self.b.iter().map(|b| b * b).sum::<f64>().sqrt();
        let c_norm = 1.0 + self.c.norm();
        let degree = (n + m) as f64;

        let amat = DMatrix::from_columns(self.a);
        let amat_h = amat.adjoint();
        // `Σ_i w_i a_i a_iᴴ`.
        let weighted = |w: &[f64]| -> DMatrix<C64> {
            let mut scaled = amat.clone();
            for (mut col, &wi) in scaled.column_iter_mut().zip(w) {
                col *= cz(wi);
            }
            mm(&scaled, &amat_h)
        };
        // `Re(a_iᴴ M a_i)` for every constraint.
        let diag_quad = |mat: &DMatrix<C64>| -> Vec<f64> {
            let ma = mm(mat, &amat);
            (0..m).map(|i| amat.column(i).dotc(&ma.column(i)).re).collect()
        };

        let mut best: Option<Best> = None;
        for iter in 0..MAX_ITERS {
            let (Some(z_chol), Some(x_chol)) =
                (linalg::hermitian_cholesky(it.z.clone()), linalg::hermitian_cholesky(it.x.clone()))
            else {
                return accept_stalled(best, tol);
            };
            let z_inv = z_chol.inverse();
            let x_linv = lower_inverse(&x_chol, n);
            let z_linv = lower_inverse(&z_chol, n);

            // Residuals.
            let ax = diag_quad(&it.x);
            let rp: Vec<f64> = (0..m).map(|i| self.b[i] - ax[i] + it.s[i]).collect();
            let rd = self.c - &it.z - weighted(&it.y);
            let xz = linalg::re_trace_product(&it.x, &it.z);
            let sy: f64 = it.s.iter().zip(&it.y).map(|(s, y)| s * y).sum();
            let mu = (xz + sy) / degree;
            let pobj = linalg::re_trace_product(self.c, &it.x);
            let dobj: f64 = self.b.iter().zip(&it.y).map(|(b, y)| b * y).sum();
            let p_inf = rp.iter().map(|r| r * r).sum::<f64>().sqrt() / b_norm;
            let d_inf = rd.norm() / c_norm;
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let compl = (xz + sy) / (1.0 + pobj.abs() + dobj.abs());
            let err = p_inf.max(d_inf).max(gap).max(compl);
            if err <= tol {
                return Ok(RawSolution { x: it.x, y: it.y, z: it.z, iterations: iter });
            }
            if best.as_ref().is_none_or(|b| err < 0.9 * b.0) {
                best = Some((err, iter, it.x.clone(), it.y.clone(), it.z.clone()));
            } else if iter - best.as_ref().map_or(0, |b| b.1) >= STALL_ITERS {
                return accept_stalled(best, tol);
            }

            // Schur complement from `XA` and `Z⁻¹A`.
            let xa = mm(&it.x, &amat);
            let zia = mm(&z_inv, &amat);
            let axa = mm(&amat_h, &xa);
            let awa = mm(&amat_h, &zia);
            let mut schur = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let v = (axa[(i, j)] * awa[(j, i)]).re;
                    schur[(i, j)] = v;
                    schur[(j, i)] = v;
                }
                schur[(i, i)] += it.s[i] / it.y[i];
            }
            let Some(schur_chol) = Cholesky::new(schur) else {
                return accept_stalled(best, tol);
            };

            // With `dZ = R_d − A·diag(dy)·Aᴴ`, the direction for a
            // complementarity residual `R_c` only needs `R_c·Z⁻¹`:
            // `dX = R_c·Z⁻¹ − X·R_d·Z⁻¹ + XA·diag(dy)·(Z⁻¹A)ᴴ`.
            let x_rd_zi = mm(&mm(&it.x, &rd), &z_inv);
            let q = diag_quad(&x_rd_zi);
            let solve = |rcz: &DMatrix<C64>, rcz_quad: &[f64], rcs: &[f64]| -> Direction {
                let rhs = DVector::from_fn(m, |i, _| rp[i] - (rcz_quad[i] - q[i]) + rcs[i] / it.y[i]);
                let dy = schur_chol.solve(&rhs);
                let dz = &rd - weighted(dy.as_slice());
                let mut scaled = xa.clone();
                for (mut col, &d) in scaled.column_iter_mut().zip(dy.iter()) {
                    col *= cz(d);
                }
                let dx = linalg::hermitian_part(&(rcz - &x_rd_zi + mm(&scaled, &zia.adjoint())));
                let ds = (0..m).map(|i| (rcs[i] - it.s[i] * dy[i]) / it.y[i]).collect();
                Direction { dx, ds, dy: dy.iter().copied().collect(), dz }
            };
            let steps = |d: &Direction| -> (f64, f64) {
                let ap = psd_step(&it.x, &x_linv, &d.dx).min(ratio_step(&it.s, &d.ds));
                let ad = psd_step(&it.z, &z_linv, &d.dz).min(ratio_step(&it.y, &d.dy));
                (ap, ad)
            };

            // Predictor: `R_c = −XZ`, so `R_c·Z⁻¹ = −X`.
            let rcz_aff = -&it.x;
            let ax_neg: Vec<f64> = ax.iter().map(|v| -v).collect();
            let rcs_aff: Vec<f64> = it.s.iter().zip(&it.y).map(|(s, y)| -s * y).collect();
            let aff = solve(&rcz_aff, &ax_neg, &rcs_aff);
            let ap = psd_step_coarse(&it.x, &aff.dx).min(ratio_step(&it.s, &aff.ds)).min(1.0);
            let ad = psd_step_coarse(&it.z, &aff.dz).min(ratio_step(&it.y, &aff.dy)).min(1.0);
            let x_aff = &it.x + &aff.dx * cz(ap);
            let z_aff = &it.z + &aff.dz * cz(ad);
            let sy_aff: f64 = (0..m).map(|i| (it.s[i] + ap * aff.ds[i]) * (it.y[i] + ad * aff.dy[i])).sum();
            let mu_aff = (linalg::re_trace_product(&x_aff, &z_aff) + sy_aff) / degree;
            // Weaker centering exponent after a short affine step.
            let aff_step = ap.min(ad);
            let expon = if aff_step < 1.0 / 3f64.sqrt() { 1.0 } else { (3.0 * aff_step * aff_step).max(1.0) };
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powf(expon);

            // Corrector: `R_c = σμI − XZ − dX_aff·dZ_aff`.
            let rcz = &z_inv * cz(sigma * mu) - &it.x - mm(&aff.dx, &mm(&aff.dz, &z_inv));
            let rcz_quad = diag_quad(&rcz);
            let rcs: Vec<f64> = (0..m).map(|i| sigma * mu - it.s[i] * it.y[i] - aff.ds[i] * aff.dy[i]).collect();
            let dir = solve(&rcz, &rcz_quad, &rcs);
            let (ap, ad) = steps(&dir);
            let frac = STEP_FRACTION_MIN + (STEP_FRACTION - STEP_FRACTION_MIN) * ap.min(ad).min(1.0);
            let ap = (frac * ap).min(1.0);
            let ad = (frac * ad).min(1.0);

            it.x = linalg::hermitian_part(&(&it.x + &dir.dx * cz(ap)));
            it.z = linalg::hermitian_part(&(&it.z + &dir.dz * cz(ad)));
            for i in 0..m {
                it.s[i] += ap * dir.ds[i];
                it.y[i] += ad * dir.dy[i];
            }
            if !it.x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return accept_stalled(best, tol);
            }
        }
        accept_stalled(best, tol)
    }
}

/// Best iterate seen: (error measure, iteration, X, y, Z).
type Best = (f64, usize, DMatrix<C64>, Vec<f64>, DMatrix<C64>);

/// Iterations without a 10% improvement after which the method has stalled.
const STALL_ITERS: usize = 20;
/// A stalled run is accepted if its best iterate is within this factor of `tol`.
const STALL_ACCEPT: f64 = 100.0;

fn accept_stalled(best: Option<Best>, tol: f64) -> Result<RawSolution> {
    match best {
        Some((err, iter, x, y, z)) if err <= STALL_ACCEPT * tol => Ok(RawSolution { x, y, z, iterations: iter }),
        Some((err, ..)) => Err(Error::NumericalFailure(format!(
            "SDP interior-point method stalled at relative error {err:.2e} (tolerance {tol:.0e})"
        ))),
        None => Err(Error::NumericalFailure("SDP interior-point method failed to start".into())),
    }
}
