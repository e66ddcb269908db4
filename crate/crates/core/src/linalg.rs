//! Small dense helpers shared by the numerical modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

pub type C64 = Complex64;

/// `aᴴb`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `|aᴴb|²`.
pub fn gain(a: &[C64], b: &[C64]) -> f64 {
    inner(a, b).norm_sqr()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Returns `a/‖a‖`, or `None` for a (numerically) zero vector.
pub fn normalized(a: &[C64]) -> Option<Vec<C64>> {
    let n = norm(a);
    if n <= f64::MIN_POSITIVE || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

pub fn to_dvector(a: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(a)
}

pub fn from_dvector(a: &DVector<C64>) -> Vec<C64> {
    a.iter().copied().collect()
}

/// Complex matrix product through four real products.
pub fn matmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

/// Cholesky factorisation that fails on matrices that are not positive
/// definite. nalgebra's complex factorisation takes square roots of negative
/// pivots instead of failing.
pub fn hermitian_cholesky(a: DMatrix<C64>) -> Option<Cholesky<C64, Dyn>> {
    let chol = Cholesky::new(a)?;
    chol.l_dirty().diagonal().iter().all(|z| z.re > 0.0 && z.im.abs() <= 1e-8 * z.re).then_some(chol)
}

/// Whether `a + α·b` is positive definite, reading only the lower triangles
/// of the Hermitian matrices `a` and `b`.
pub fn is_positive_definite_along(a: &DMatrix<C64>, b: &DMatrix<C64>, alpha: f64) -> bool {
    let n = a.nrows();
    let (mut re, mut im) = (vec![0.0; n * n], vec![0.0; n * n]);
    for j in 0..n {
        for i in j..n {
            let z = a[(i, j)] + b[(i, j)] * alpha;
            re[j * n + i] = z.re;
            im[j * n + i] = z.im;
        }
    }
    // Right-looking Cholesky on the lower triangle, column-major.
    for k in 0..n {
        let d = re[k * n + k];
        if !(d > 0.0) {
            return false;
        }
        let piv = 1.0 / d.sqrt();
        re[k * n + k..(k + 1) * n].iter_mut().for_each(|v| *v *= piv);
        im[k * n + k..(k + 1) * n].iter_mut().for_each(|v| *v *= piv);
        let (re_done, re_rest) = re.split_at_mut((k + 1) * n);
        let (im_done, im_rest) = im.split_at_mut((k + 1) * n);
        let (ck_re, ck_im) = (&re_done[k * n..], &im_done[k * n..]);
        for j in k + 1..n {
            let (lr, li) = (ck_re[j], -ck_im[j]);
            let off = (j - k - 1) * n;
            let cj_re = &mut re_rest[off + j..off + n];
            let cj_im = &mut im_rest[off + j..off + n];
            for ((r, m), (ar, ai)) in cj_re.iter_mut().zip(cj_im.iter_mut()).zip(ck_re[j..].iter().zip(&ck_im[j..])) {
                *r -= ar * lr - ai * li;
                *m -= ar * li + ai * lr;
            }
        }
    }
    true
}

/// Hermitian part `(X + Xᴴ)/2`.
pub fn hermitian_part(x: &DMatrix<C64>) -> DMatrix<C64> {
    (x + x.adjoint()) * C64::new(0.5, 0.0)
}

/// `Re tr(A B)` for square matrices.
pub fn re_trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn real_trace(a: &DMatrix<C64>) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Columns of the returned matrix are the eigenvectors.
pub fn hermitian_eigh(a: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Multiplies by a unit-modulus scalar so the largest-modulus entry is real
/// positive. The first entry wins ties.
pub fn fix_phase(v: &mut [C64]) {
    let mut best = 0;
    let mut best_mod = -1.0;
    for (i, x) in v.iter().enumerate() {
        let m = x.norm();
        if m > best_mod * (1.0 + 1e-12) {
            best = i;
            best_mod = m;
        }
    }
    if best_mod > 0.0 {
        let phase = v[best].conj() / best_mod;
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

/// Sample mean and standard error (n−1 denominator). The standard error is 0
/// for fewer than two samples.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
