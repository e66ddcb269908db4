use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sdp::MAX_ITERS;
use crate::error::{Error, Result};

/// `minimise cᵀx` subject to `Ax ≥ r`, `0 ≤ x ≤ u`, with `A, c ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub costs: Vec<f64>,
    pub constraint_matrix: DMatrix<f64>,
    pub rhs: Vec<f64>,
    pub box_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_bound: f64,
    pub iterations: usize,
}

impl LpProblem {
    fn validate(&self) -> Result<()> {
        let m = self.costs.len();
        let a = &self.constraint_matrix;
        if a.ncols() != m || a.nrows() != self.rhs.len() || self.box_upper.len() != m {
            return Err(Error::InvalidArgument("LP dimensions disagree".into()));
        }
        if a.iter().any(|v| !(*v >= 0.0)) || self.costs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidArgument("LP costs and matrix entries must be nonnegative".into()));
        }
        if self.rhs.iter().chain(&self.box_upper).any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("LP data contains NaN".into()));
        }
        Ok(())
    }

    /// Largest relative constraint violation of `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let ax = &self.constraint_matrix * DVector::from_column_slice(x);
        let mut worst: f64 = 0.0;
        for (i, &r) in self.rhs.iter().enumerate() {
            worst = worst.max((r - ax[i]) / r.abs().max(1.0));
        }
        for (j, &u) in self.box_upper.iter().enumerate() {
            worst = worst.max((x[j] - u) / u.abs().max(1.0)).max(-x[j]);
        }
        worst.max(0.0)
    }
}

/// Solves the LP with a primal-dual interior-point method on the standard
/// form `min c̃ᵀz, Ez = b̃, z ≥ 0` with `z = (x, w, v)`,
/// `E = [[A, −I, 0], [I, 0, I]]`, `b̃ = (r, u)`.
///
/// Rows with `r_i ≤ 0` are implied by `x ≥ 0` and dropped; coordinates with a
/// zero box are fixed at zero. Feasibility is decided exactly beforehand: since
/// `A ≥ 0`, the region is nonempty iff `Au ≥ r`.
pub fn solve_lp(p: &LpProblem, tol: f64) -> Result<LpSolution> {
    p.validate()?;
    let m = p.costs.len();
    for (j, &u) in p.box_upper.iter().enumerate() {
        if u < -tol * u.abs().max(1.0) {
            return Err(Error::Infeasible(format!("variable {j} has a negative upper bound {u:e}")));
        }
    }
    let upper: Vec<f64> = p.box_upper.iter().map(|&u| u.max(0.0)).collect();
    let a_full = &p.constraint_matrix * DVector::from_column_slice(&upper);
    for (i, &r) in p.rhs.iter().enumerate() {
        if a_full[i] < r - tol * r.abs().max(1.0) {
            return Err(Error::Infeasible(format!(
                "constraint {i} needs {r:e} but at most {:e} is reachable",
                a_full[i]
            )));
        }
    }

    let rows: Vec<usize> = (0..p.rhs.len()).filter(|&i| p.rhs[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| upper[j] > 0.0).collect();
    let mut x = vec![0.0; m];
    let mut iterations = 0;
    let mut dual_bound = 0.0;
    if !rows.is_empty() && !cols.is_empty() {
        let a = DMatrix::from_fn(rows.len(), cols.len(), |i, j| p.constraint_matrix[(rows[i], cols[j])]);
        let r: Vec<f64> = rows.iter().map(|&i| p.rhs[i]).collect();
        let u: Vec<f64> = cols.iter().map(|&j| upper[j]).collect();
        let c: Vec<f64> = cols.iter().map(|&j| p.costs[j]).collect();
        let sol = standard_form_ipm(&a, &r, &u, &c, tol)?;
        for (k, &j) in cols.iter().enumerate() {
            x[j] = sol.x[k];
        }
        iterations = sol.iterations;
        dual_bound = sol.dual_bound;
    }

    // Clamp into the box and snap values within rounding of a bound.
    for j in 0..m {
        let snap = 1e-10 * upper[j].max(1e-300);
        x[j] = x[j].clamp(0.0, upper[j]);
        if x[j] <= snap {
            x[j] = 0.0;
        } else if upper[j] - x[j] <= snap {
            x[j] = upper[j];
        }
    }
    let objective = x.iter().zip(&p.costs).map(|(x, c)| x * c).sum();
    Ok(LpSolution { x, objective, dual_bound, iterations })
}

struct StandardSolution {
    x: Vec<f64>,
    dual_bound: f64,
    iterations: usize,
}

fn standard_form_ipm(a: &DMatrix<f64>, r: &[f64], u: &[f64], c: &[f64], tol: f64) -> Result<StandardSolution> {
    let (p, m) = a.shape();
    let nz = 2 * m + p;
    let nr = p + m;
    // E = [[A, −I_p, 0], [I_m, 0, I_m]] acting on z = (x, w, v).
    let mut e = DMatrix::<f64>::zeros(nr, nz);
    e.view_mut((0, 0), (p, m)).copy_from(a);
    for i in 0..p {
        e[(i, m + i)] = -1.0;
    }
    for j in 0..m {
        e[(p + j, j)] = 1.0;
        e[(p + j, m + p + j)] = 1.0;
    }
    let b = DVector::from_iterator(nr, r.iter().chain(u).copied());
    let cost = DVector::from_iterator(nz, c.iter().copied().chain(std::iter::repeat_n(0.0, p + m)));

    // Scale so that bounds and costs are of order one.
    let bs = b.amax().max(f64::MIN_POSITIVE);
    let cs = match cost.amax() {
        v if v > 0.0 => v,
        _ => 1.0,
    };
    let b = &b / bs;
    let cost = &cost / cs;

    let mut z = DVector::from_element(nz, 1.0);
    let mut y = DVector::zeros(nr);
    let mut s = DVector::from_element(nz, 1.0);
    let b_norm = 1.0 + b.norm();
    let c_norm = 1.0 + cost.norm();

    for iter in 0..MAX_ITERS {
        let rp = &b - &e * &z;
        let rd = &cost - e.transpose() * &y - &s;
        let mu = z.dot(&s) / nz as f64;
        let pobj = cost.dot(&z);
        let dobj = b.dot(&y);
        if rp.norm() / b_norm <= tol
            && rd.norm() / c_norm <= tol
            && (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()) <= tol
        {
            let x = z.rows(0, m).iter().map(|v| v * bs).collect();
            return Ok(StandardSolution { x, dual_bound: dobj * bs * cs, iterations: iter });
        }

        let d = z.component_div(&s);
        let mut normal = DMatrix::<f64>::zeros(nr, nr);
        for k in 0..nz {
            let col = e.column(k);
            normal.ger(d[k], &col, &col, 1.0);
        }
        let chol =
            Cholesky::new(normal).ok_or_else(|| Error::NumericalFailure("LP normal equations are singular".into()))?;

        let solve = |rc: &DVector<f64>| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
            // Z·ds + S·dz = rc, E·dz = rp, Eᵀdy + ds = rd.
            let rhs = &rp + &e * (d.component_mul(&rd) - rc.component_div(&s));
            let dy = chol.solve(&rhs);
            let ds = &rd - e.transpose() * &dy;
            let dz = (rc - z.component_mul(&ds)).component_div(&s);
            (dz, dy, ds)
        };
        let step = |v: &DVector<f64>, dv: &DVector<f64>| -> f64 {
            v.iter().zip(dv.iter()).filter(|(_, &d)| d < 0.0).map(|(&x, &d)| -x / d).fold(f64::INFINITY, f64::min)
        };

        let rc_aff = -z.component_mul(&s);
        let (dz_a, _, ds_a) = solve(&rc_aff);
        let ap = step(&z, &dz_a).min(1.0);
        let ad = step(&s, &ds_a).min(1.0);
        let mu_aff = (&z + &dz_a * ap).dot(&(&s + &ds_a * ad)) / nz as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc = DVector::from_element(nz, sigma * mu) - z.component_mul(&s) - dz_a.component_mul(&ds_a);
        let (dz, dy, ds) = solve(&rc);
        let ap = (0.99 * step(&z, &dz)).min(1.0);
        let ad = (0.99 * step(&s, &ds)).min(1.0);
        z += &dz * ap;
        y += &dy * ad;
        s += &ds * ad;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite LP iterate".into()));
        }
    }
    Err(Error::NumericalFailure(format!(
        "LP interior-point method did not reach tolerance {tol:e} in {MAX_ITERS} iterations"
    )))
}
