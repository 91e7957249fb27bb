//! Dense complex linear algebra: SVD, truncated-SVD least squares and
//! generalized eigenvalues of square pencils.
//!
//! The decompositions are delegated to `faer`; this module owns the
//! row-major [`ComplexMatrix`] type that the rest of the crate works with,
//! the rank cutoff policy for least squares and the infinite-eigenvalue
//! flagging for pencils.

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative singular value cutoff used for exact-data least squares.
pub const DEFAULT_RCOND: f64 = 1e-13;

/// Generalized eigenvalues with `|beta| <= INFINITE_BETA_RATIO * max|beta|` are
/// reported as infinite.
pub const INFINITE_BETA_RATIO: f64 = 1e-12;

/// Dense complex matrix in row-major order. Entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite { row: pos / cols.max(1), col: pos % cols.max(1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Result<Self> {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { Complex64::new(0.0, 0.0) })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j).conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let prod = self.to_faer() * rhs.to_faer();
        Self::from_faer(prod.as_ref())
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != x.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by a vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub(crate) fn from_faer(m: MatRef<'_, Complex64>) -> Result<Self> {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// Thin singular value decomposition `A = U diag(sigma) V*`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    /// Nonnegative, sorted in descending order.
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    /// Number of singular values above `rcond * sigma[0]`.
    pub fn rank(&self, rcond: f64) -> usize {
        let Some(&s0) = self.sigma.first() else { return 0 };
        if s0 == 0.0 {
            return 0;
        }
        self.sigma.iter().take_while(|&&s| s > rcond * s0).count()
    }

    /// Right singular vector belonging to the smallest singular value.
    ///
    /// Only meaningful for matrices with at least as many rows as columns.
    pub fn smallest_right_singular_vector(&self) -> Vec<Complex64> {
        self.v.column(self.v.cols() - 1)
    }
}

pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    if a.is_empty() {
        return Err(Error::ShapeMismatch("svd of an empty matrix".into()));
    }
    let dec = a
        .to_faer()
        .thin_svd()
        .map_err(|e| Error::ConvergenceFailure(format!("svd: {e:?}")))?;
    let sigma: Vec<f64> = dec.S().column_vector().iter().map(|s| s.re).collect();
    Ok(Svd { u: ComplexMatrix::from_faer(dec.U())?, sigma, v: ComplexMatrix::from_faer(dec.V())? })
}

/// Truncated pseudoinverse `V Σ⁺ U*`, factored once and applied to many
/// right-hand sides.
#[derive(Clone, Debug)]
pub struct Pseudoinverse {
    pinv: ComplexMatrix,
    sigma: Vec<f64>,
    rank: usize,
}

impl Pseudoinverse {
    /// Singular values below `rcond * sigma[0]` are treated as zero.
    pub fn new(a: &ComplexMatrix, rcond: f64) -> Result<Self> {
        if !(rcond > 0.0 && rcond < 1.0) {
            return Err(Error::BadParameters(format!("rcond {rcond} outside (0, 1)")));
        }
        let dec = svd(a)?;
        let rank = dec.rank(rcond);
        let mut pinv = ComplexMatrix::zeros(a.cols(), a.rows());
        for r in 0..rank {
            let inv = 1.0 / dec.sigma[r];
            for i in 0..a.cols() {
                let vi = dec.v.get(i, r) * inv;
                for j in 0..a.rows() {
                    pinv.data[i * a.rows() + j] += vi * dec.u.get(j, r).conj();
                }
            }
        }
        Ok(Self { pinv, sigma: dec.sigma, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// The `cols x rows` pseudoinverse matrix.
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.pinv
    }

    pub fn apply(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        self.pinv.mul_vec(b)
    }
}

/// Minimum-norm least squares solution of `A x ≈ b` over the numerical row
/// space of `A`.
pub fn lstsq(a: &ComplexMatrix, b: &[Complex64], rcond: f64) -> Result<Vec<Complex64>> {
    if a.rows() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} equations but right-hand side of length {}",
            a.rows(),
            b.len()
        )));
    }
    Pseudoinverse::new(a, rcond)?.apply(b)
}

/// One generalized eigenvalue `alpha / beta` of a pencil.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneralizedEigenvalue {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub infinite: bool,
}

impl GeneralizedEigenvalue {
    pub fn value(&self) -> Option<Complex64> {
        (!self.infinite).then(|| self.alpha / self.beta)
    }
}

/// All generalized eigenvalues of `A v = z B v`.
pub fn gen_eig(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Vec<GeneralizedEigenvalue>> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n || b.cols() != n {
        return Err(Error::ShapeMismatch(format!(
            "pencil of {}x{} and {}x{} matrices",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        // The QZ driver does not handle 1x1 pencils.
        let (alpha, beta) = (a.get(0, 0), b.get(0, 0));
        return Ok(vec![GeneralizedEigenvalue { alpha, beta, infinite: beta.norm() == 0.0 }]);
    }
    let dec = a
        .to_faer()
        .generalized_eigen(b.to_faer())
        .map_err(|e| Error::ConvergenceFailure(format!("generalized eigenproblem: {e:?}")))?;
    let alpha: Vec<Complex64> = dec.S_a().column_vector().iter().copied().collect();
    let beta: Vec<Complex64> = dec.S_b().column_vector().iter().copied().collect();
    let max_beta = beta.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(alpha
        .into_iter()
        .zip(beta)
        .map(|(alpha, beta)| GeneralizedEigenvalue {
            alpha,
            beta,
            infinite: beta.norm() <= INFINITE_BETA_RATIO * max_beta,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::linalg::solvers::DenseSolveCore;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    fn reassemble(s: &Svd) -> ComplexMatrix {
        let k = s.sigma.len();
        let sig = ComplexMatrix::from_fn(k, k, |i, j| {
            if i == j { c(s.sigma[i], 0.0) } else { c(0.0, 0.0) }
        })
        .unwrap();
        s.u.matmul(&sig).unwrap().matmul(&s.v.adjoint()).unwrap()
    }

    #[test]
    fn rejects_non_finite_entries() {
        let err = ComplexMatrix::new(1, 2, vec![c(1.0, 0.0), c(f64::NAN, 0.0)]).unwrap_err();
        assert_eq!(err, Error::NonFinite { row: 0, col: 1 });
        assert!(matches!(
            ComplexMatrix::new(2, 2, vec![c(1.0, 0.0)]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn svd_identity_and_zero() {
        let s = svd(&ComplexMatrix::identity(3)).unwrap();
        for v in &s.sigma {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let s = svd(&ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert_eq!(s.rank(1e-13), 0);
    }

    #[test]
    fn svd_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (r, cdim) in [(4, 2), (2, 4), (7, 7), (64, 64), (30, 5)] {
            let a = random_matrix(&mut rng, r, cdim);
            let s = svd(&a).unwrap();
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
            let back = reassemble(&s);
            let mut diff = 0.0f64;
            for i in 0..r {
                for j in 0..cdim {
                    diff = diff.max((back.get(i, j) - a.get(i, j)).norm());
                }
            }
            assert!(diff <= 1e-12 * s.sigma[0], "{r}x{cdim}: {diff}");
            // orthonormal columns
            let utu = s.u.adjoint().matmul(&s.u).unwrap();
            let vtv = s.v.adjoint().matmul(&s.v).unwrap();
            for m in [utu, vtv] {
                for i in 0..m.rows() {
                    for j in 0..m.cols() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((m.get(i, j) - c(want, 0.0)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn lstsq_identity() {
        let b = vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 0.0)];
        let x = lstsq(&ComplexMatrix::identity(3), &b, DEFAULT_RCOND).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).norm() < 1e-15);
        }
    }

    #[test]
    fn lstsq_consistent_overdetermined() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 4, 2);
        let x0 = vec![c(0.3, -1.2), c(2.0, 0.5)];
        let b = a.mul_vec(&x0).unwrap();
        let x = lstsq(&a, &b, DEFAULT_RCOND).unwrap();
        for (xi, x0i) in x.iter().zip(&x0) {
            assert!((xi - x0i).norm() < 1e-12);
        }
    }

    #[test]
    fn lstsq_rank_one_matches_explicit_pseudoinverse() {
        // A = u v^T with u = (1, i), v = (2, 1): A⁺ = conj(v) u* / (|u|^2 |v|^2)
        let u = [c(1.0, 0.0), c(0.0, 1.0)];
        let v = [c(2.0, 0.0), c(1.0, 0.0)];
        let a = ComplexMatrix::from_fn(2, 2, |i, j| u[i] * v[j]).unwrap();
        let b = [c(1.0, 1.0), c(-2.0, 0.5)];
        let scale = 1.0 / (2.0 * 5.0);
        let ub: Complex64 = u.iter().zip(&b).map(|(ui, bi)| ui.conj() * bi).sum();
        let expect: Vec<Complex64> = v.iter().map(|vj| vj.conj() * ub * scale).collect();
        let x = lstsq(&a, &b, DEFAULT_RCOND).unwrap();
        for (xi, ei) in x.iter().zip(&expect) {
            assert!((xi - ei).norm() < 1e-12, "{xi} vs {ei}");
        }
    }

    #[test]
    fn lstsq_shape_mismatch() {
        let err = lstsq(&ComplexMatrix::identity(3), &[c(1.0, 0.0)], DEFAULT_RCOND).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn lstsq_residual_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 12, 4);
        let b: Vec<Complex64> =
            (0..12).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let x = lstsq(&a, &b, DEFAULT_RCOND).unwrap();
        let resid = |x: &[Complex64]| -> f64 {
            a.mul_vec(x).unwrap().iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt()
        };
        let r0 = resid(&x);
        for _ in 0..100 {
            let d: Vec<Complex64> = (0..4)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let xp: Vec<Complex64> = x.iter().zip(&d).map(|(xi, di)| xi + di * 1e-6).collect();
            assert!(resid(&xp) >= r0 - 1e-14);
        }
    }

    #[test]
    fn gen_eig_identity_b() {
        let a = ComplexMatrix::from_diagonal(&[c(1.0, 0.0), c(2.0, 0.0)]).unwrap();
        let mut ev: Vec<f64> = gen_eig(&a, &ComplexMatrix::identity(2))
            .unwrap()
            .iter()
            .map(|e| e.value().unwrap().re)
            .collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gen_eig_arrowhead_flags_two_infinite() {
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let a = ComplexMatrix::new(3, 3, vec![zero, one, one, one, zero, zero, one, zero, one])
            .unwrap();
        let b = ComplexMatrix::from_diagonal(&[zero, one, one]).unwrap();
        let ev = gen_eig(&a, &b).unwrap();
        assert_eq!(ev.iter().filter(|e| e.infinite).count(), 2);
        let finite: Vec<Complex64> = ev.iter().filter_map(|e| e.value()).collect();
        assert_eq!(finite.len(), 1);
        assert!((finite[0] - c(0.5, 0.0)).norm() < 1e-14);
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn gen_eig_matches_standard_eigenproblem_of_b_inverse_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 5, 5);
        let b = random_matrix(&mut rng, 5, 5);
        let ev = sorted(gen_eig(&a, &b).unwrap().iter().map(|e| e.value().unwrap()).collect());
        let binv_a = b.to_faer().partial_piv_lu().inverse() * a.to_faer();
        let oracle = sorted(binv_a.eigenvalues().unwrap());
        for (x, y) in ev.iter().zip(&oracle) {
            assert!((x - y).norm() < 1e-10 * (1.0 + y.norm()), "{x} vs {y}");
        }
    }

    #[test]
    fn gen_eig_with_identity_matches_standard_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 8, 8);
            let ev = sorted(
                gen_eig(&a, &ComplexMatrix::identity(8))
                    .unwrap()
                    .iter()
                    .map(|e| e.value().unwrap())
                    .collect(),
            );
            let oracle = sorted(a.to_faer().eigenvalues().unwrap());
            for (x, y) in ev.iter().zip(&oracle) {
                assert!((x - y).norm() < 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn gen_eig_shape_mismatch() {
        let err = gen_eig(&ComplexMatrix::identity(2), &ComplexMatrix::identity(3)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }
}
