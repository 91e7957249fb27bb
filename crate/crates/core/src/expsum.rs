//! Exponential sums, their Fourier coefficients and the reconstruction error
//! metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::SparseGridPlan;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A poles closer than this to an integer index (in units of `lambda P / 2 pi i`)
/// is treated as the degenerate case `lambda = 2 pi i k / P`.
pub const DEGENERATE_TOL: f64 = 1e-10;

/// `f(t) = sum_j gamma_j exp(<lambda_j, t>)` with `t` in R^d.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentialSum {
    dim: usize,
    lambda: Vec<Complex64>,
    gamma: Vec<Complex64>,
}

impl ExponentialSum {
    /// Builds a sum from frequency rows and coefficients. Coefficients must be
    /// nonzero and frequency rows pairwise distinct.
    pub fn new(lambda: Vec<Vec<Complex64>>, gamma: Vec<Complex64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidSum("order must be at least 1".into()));
        }
        if lambda.len() != gamma.len() {
            return Err(Error::InvalidSum(format!(
                "{} frequency rows but {} coefficients",
                lambda.len(),
                gamma.len()
            )));
        }
        let dim = lambda[0].len();
        if dim == 0 || lambda.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidSum("frequency rows must share a dimension >= 1".into()));
        }
        if let Some(j) = gamma.iter().position(|g| *g == Complex64::new(0.0, 0.0)) {
            return Err(Error::InvalidSum(format!("coefficient {j} is zero")));
        }
        if lambda.iter().flatten().chain(&gamma).any(|z| !z.is_finite()) {
            return Err(Error::InvalidSum("non-finite parameter".into()));
        }
        for i in 0..lambda.len() {
            for j in i + 1..lambda.len() {
                if lambda[i] == lambda[j] {
                    return Err(Error::InvalidSum(format!("frequency rows {i} and {j} coincide")));
                }
            }
        }
        Ok(Self { dim, lambda: lambda.into_iter().flatten().collect(), gamma })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.gamma.len()
    }

    pub fn frequency(&self, j: usize) -> &[Complex64] {
        &self.lambda[j * self.dim..(j + 1) * self.dim]
    }

    pub fn frequencies(&self) -> impl Iterator<Item = &[Complex64]> {
        self.lambda.chunks(self.dim)
    }

    pub fn gamma(&self) -> &[Complex64] {
        &self.gamma
    }

    /// Returns a copy with rows reordered so that row `j` of the result is row
    /// `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let lambda = perm.iter().map(|&p| self.frequency(p).to_vec()).collect();
        let gamma = perm.iter().map(|&p| self.gamma[p]).collect();
        Self::new(lambda, gamma)
    }

    pub fn evaluate(&self, t: &[f64]) -> Complex64 {
        (0..self.order()).map(|j| self.term(j, t)).sum()
    }

    /// `gamma_j exp(<lambda_j, t>)`.
    fn term(&self, j: usize, t: &[f64]) -> Complex64 {
        let phase: Complex64 = self.frequency(j).iter().zip(t).map(|(l, ti)| l * ti).sum();
        self.gamma[j] * phase.exp()
    }

    /// Exact Fourier coefficient `c_k(f)` over `[0, P]^d`.
    pub fn fourier_coefficient(&self, k: &[i64], period: f64) -> Complex64 {
        self.frequencies()
            .zip(&self.gamma)
            .map(|(row, g)| {
                row.iter().zip(k).fold(*g, |acc, (l, &kl)| acc * axis_factor(*l, kl, period))
            })
            .sum()
    }

    /// Poles `b = lambda P / (2 pi i)` of the rational structure, row-major.
    pub fn poles(&self, period: f64) -> Vec<Vec<Complex64>> {
        self.frequencies()
            .map(|row| row.iter().map(|l| frequency_to_pole(*l, period)).collect())
            .collect()
    }

    /// Rejects frequencies with `lambda P / (2 pi i)` equal to an integer in
    /// `[-n, n]`.
    pub fn check_nondegenerate(&self, period: f64, n: usize) -> Result<()> {
        for (j, row) in self.frequencies().enumerate() {
            for (axis, l) in row.iter().enumerate() {
                let b = frequency_to_pole(*l, period);
                let k = b.re.round();
                if k.abs() <= n as f64
                    && (b - Complex64::new(k, 0.0)).norm() <= DEGENERATE_TOL * b.norm().max(1.0)
                {
                    return Err(Error::DegenerateFrequency {
                        term: j,
                        axis,
                        index: k as i64,
                        lambda: *l,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `(1/P) int_0^P exp((lambda - 2 pi i k / P) t) dt`, written as
/// `(e^z - 1) / z` with `z = lambda P - 2 pi i k`; equals 1 at `z = 0`.
pub(crate) fn axis_factor(lambda: Complex64, k: i64, period: f64) -> Complex64 {
    let z = lambda * period - I * (2.0 * PI * k as f64);
    if z.norm() < 1e-4 {
        // Taylor series of (e^z - 1)/z; truncation error below |z|^5/720.
        Complex64::new(1.0, 0.0) + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        expm1(z) / z
    }
}

fn expm1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(z.re.exp_m1() * c - 2.0 * half * half, z.re.exp() * s)
}

pub fn frequency_to_pole(lambda: Complex64, period: f64) -> Complex64 {
    lambda * period / (2.0 * PI * I)
}

pub fn pole_to_frequency(pole: Complex64, period: f64) -> Complex64 {
    2.0 * PI * I * pole / period
}

/// Coefficient `gamma_j` from the multivariate residue `a_j` and the
/// frequency row: `gamma = a (2 pi i)^d / prod_l (1 - exp(lambda_l P))`.
pub fn gamma_from_residue(a: Complex64, lambda: &[Complex64], period: f64) -> Complex64 {
    let scale = (2.0 * PI * I).powi(lambda.len() as i32);
    let denom: Complex64 =
        lambda.iter().map(|l| Complex64::new(1.0, 0.0) - (l * period).exp()).product();
    a * scale / denom
}

/// Inverse of [`gamma_from_residue`].
pub fn residue_from_gamma(gamma: Complex64, lambda: &[Complex64], period: f64) -> Complex64 {
    let scale = (2.0 * PI * I).powi(lambda.len() as i32);
    let num: Complex64 =
        lambda.iter().map(|l| Complex64::new(1.0, 0.0) - (l * period).exp()).product();
    gamma * num / scale
}

/// Which indices of `[-N, N]^d` a coefficient source holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    Full,
    /// The `2d - 1` lines of the sparse grid with diagonal shift `2 tau`.
    SparseLines { tau: usize },
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coverage::Full => write!(f, "full"),
            Coverage::SparseLines { tau } => write!(f, "sparse:{tau}"),
        }
    }
}

impl FromStr for Coverage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Coverage::Full),
            other => other
                .strip_prefix("sparse:")
                .and_then(|t| t.parse().ok())
                .map(|tau| Coverage::SparseLines { tau })
                .ok_or_else(|| {
                    Error::BadParameters(format!("coverage '{s}' is neither 'full' nor 'sparse:<tau>'"))
                }),
        }
    }
}

impl Coverage {
    /// Distinct covered indices in ascending lexicographic order.
    pub fn indices(&self, dim: usize, n: usize) -> Result<Vec<Vec<i64>>> {
        match *self {
            Coverage::Full => Ok(FullGrid::new(dim, n).iter().collect()),
            Coverage::SparseLines { tau } => {
                let plan = SparseGridPlan::new(dim, n, tau)?;
                let mut set: Vec<Vec<i64>> = plan.all_indices().collect();
                set.sort();
                set.dedup();
                Ok(set)
            }
        }
    }

    /// Number of samples as counted line by line (shared indices counted
    /// once per line).
    pub fn sample_count(&self, dim: usize, n: usize) -> Result<usize> {
        match *self {
            Coverage::Full => Ok((2 * n + 1).pow(dim as u32)),
            Coverage::SparseLines { tau } => Ok(SparseGridPlan::new(dim, n, tau)?.sample_count()),
        }
    }
}

/// The index box `[-N, N]^d`, enumerated with the last coordinate fastest.
#[derive(Clone, Copy, Debug)]
pub struct FullGrid {
    pub dim: usize,
    pub n: usize,
}

impl FullGrid {
    pub fn new(dim: usize, n: usize) -> Self {
        Self { dim, n }
    }

    pub fn side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn linear_index(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let n = self.n as i64;
        k.iter().try_fold(0usize, |acc, &ki| {
            (ki.abs() <= n).then(|| acc * self.side() + (ki + n) as usize)
        })
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<i64> {
        let mut k = vec![0i64; self.dim];
        for slot in k.iter_mut().rev() {
            *slot = (lin % self.side()) as i64 - self.n as i64;
            lin /= self.side();
        }
        k
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|l| self.multi_index(l))
    }
}

/// Read access to Fourier coefficients by integer multi-index.
pub trait CoefficientAccess: Sync {
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
    /// Half-width `N` of the index box `[-N, N]^d`.
    fn half_width(&self) -> usize;
    fn coverage(&self) -> Coverage;
    fn coefficient(&self, k: &[i64]) -> Option<Complex64>;

    fn require(&self, k: &[i64]) -> Result<Complex64> {
        self.coefficient(k).ok_or_else(|| Error::MissingCoefficient(k.to_vec()))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Dense(Vec<Complex64>),
    Sparse(BTreeMap<Vec<i64>, Complex64>),
}

/// Fourier coefficients `c_k` on a full grid or on the sparse-grid lines.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSource {
    dim: usize,
    period: f64,
    half_width: usize,
    coverage: Coverage,
    storage: Storage,
}

impl CoefficientSource {
    /// Builds a source from explicit entries. The entry set must be exactly
    /// the set of indices declared by `coverage`.
    pub fn from_entries(
        dim: usize,
        period: f64,
        half_width: usize,
        coverage: Coverage,
        entries: impl IntoIterator<Item = (Vec<i64>, Complex64)>,
    ) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::BadParameters(format!("period {period} must be positive")));
        }
        if dim == 0 || half_width == 0 {
            return Err(Error::BadParameters("dimension and N must be at least 1".into()));
        }
        let map: BTreeMap<Vec<i64>, Complex64> = entries.into_iter().collect();
        let expected = coverage.indices(dim, half_width)?;
        if map.len() != expected.len() || !expected.iter().all(|k| map.contains_key(k)) {
            return Err(Error::BadParameters(format!(
                "entries do not match coverage {coverage} for d = {dim}, N = {half_width}"
            )));
        }
        if map.values().any(|c| !c.is_finite()) {
            return Err(Error::BadParameters("non-finite coefficient".into()));
        }
        let storage = match coverage {
            // BTreeMap iteration order equals the grid's linear order.
            Coverage::Full => Storage::Dense(map.into_values().collect()),
            Coverage::SparseLines { .. } => Storage::Sparse(map),
        };
        Ok(Self { dim, period, half_width, coverage, storage })
    }

    /// Number of distinct stored indices.
    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Dense(v) => v.len(),
            Storage::Sparse(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample count with per-line accounting (see [`Coverage::sample_count`]).
    pub fn sample_count(&self) -> usize {
        self.coverage.sample_count(self.dim, self.half_width).unwrap_or_else(|_| self.len())
    }

    /// Stored entries in ascending index order.
    pub fn entries(&self) -> Box<dyn Iterator<Item = (Vec<i64>, Complex64)> + '_> {
        match &self.storage {
            Storage::Dense(v) => {
                let grid = FullGrid::new(self.dim, self.half_width);
                Box::new(v.iter().enumerate().map(move |(l, c)| (grid.multi_index(l), *c)))
            }
            Storage::Sparse(m) => Box::new(m.iter().map(|(k, c)| (k.clone(), *c))),
        }
    }

    /// Dense values in [`FullGrid`] order, if this is a full-grid source.
    pub fn dense_values(&self) -> Option<&[Complex64]> {
        match &self.storage {
            Storage::Dense(v) => Some(v),
            Storage::Sparse(_) => None,
        }
    }
}

impl CoefficientAccess for CoefficientSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn half_width(&self) -> usize {
        self.half_width
    }

    fn coverage(&self) -> Coverage {
        self.coverage
    }

    fn coefficient(&self, k: &[i64]) -> Option<Complex64> {
        match &self.storage {
            Storage::Dense(v) => {
                FullGrid::new(self.dim, self.half_width).linear_index(k).map(|l| v[l])
            }
            Storage::Sparse(m) => m.get(k).copied(),
        }
    }
}

/// Exact Fourier coefficients of `sum` on the indices selected by `coverage`.
pub fn synthesize(
    sum: &ExponentialSum,
    period: f64,
    n: usize,
    coverage: Coverage,
) -> Result<CoefficientSource> {
    if n == 0 {
        return Err(Error::BadParameters("N must be at least 1".into()));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::BadParameters(format!("period {period} must be positive")));
    }
    sum.check_nondegenerate(period, n)?;
    let dim = sum.dim();
    let storage = match coverage {
        Coverage::Full => {
            let grid = FullGrid::new(dim, n);
            let values: Vec<Complex64> = (0..grid.len())
                .into_par_iter()
                .map(|l| sum.fourier_coefficient(&grid.multi_index(l), period))
                .collect();
            Storage::Dense(values)
        }
        Coverage::SparseLines { .. } => Storage::Sparse(
            coverage
                .indices(dim, n)?
                .into_iter()
                .map(|k| {
                    let c = sum.fourier_coefficient(&k, period);
                    (k, c)
                })
                .collect(),
        ),
    };
    Ok(CoefficientSource { dim, period, half_width: n, coverage, storage })
}

/// Evaluation lattice for the relative error of the exponential sum.
#[derive(Clone, Copy, Debug)]
pub struct ErrorGrid {
    pub half_extent: f64,
    pub points_per_axis: usize,
    /// Lattices with more points are subsampled to this many random points.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for ErrorGrid {
    fn default() -> Self {
        Self { half_extent: 10.0, points_per_axis: 51, max_points: 2_000_000, seed: 0 }
    }
}

impl ErrorGrid {
    fn coordinate(&self, i: usize) -> f64 {
        if self.points_per_axis == 1 {
            return 0.0;
        }
        -self.half_extent + 2.0 * self.half_extent * i as f64 / (self.points_per_axis - 1) as f64
    }

    /// Lattice points (as per-axis indices) at which `e(f)` is measured.
    fn sample_points(&self, dim: usize) -> Vec<Vec<f64>> {
        let p = self.points_per_axis;
        let total = (p as f64).powi(dim as i32);
        if total <= self.max_points as f64 {
            let grid_len = p.pow(dim as u32);
            (0..grid_len)
                .map(|mut l| {
                    let mut t = vec![0.0; dim];
                    for slot in t.iter_mut().rev() {
                        *slot = self.coordinate(l % p);
                        l /= p;
                    }
                    t
                })
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            (0..self.max_points)
                .map(|_| (0..dim).map(|_| self.coordinate(rng.random_range(0..p))).collect())
                .collect()
        }
    }
}

/// Relative reconstruction errors after matching reconstructed rows to truth rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub e_lambda: f64,
    pub e_gamma: f64,
    pub e_f: f64,
    /// `matched_permutation[j]` is the reconstructed row matched to truth row `j`
    /// (only the first `min(M, M~)` truth rows in matching order are covered).
    pub matched_permutation: Vec<(usize, usize)>,
    /// Set when the orders differ; the metrics then use the matched subset.
    pub order_mismatch: Option<(usize, usize)>,
}

impl ErrorReport {
    pub fn order_mismatch_error(&self) -> Option<Error> {
        self.order_mismatch.map(|(truth, recon)| Error::OrderMismatch { truth, recon })
    }
}

/// Greedy nearest-neighbour bijection between frequency rows (Euclidean
/// distance over C^d): repeatedly takes the globally closest unmatched pair.
pub fn match_rows(truth: &ExponentialSum, recon: &ExponentialSum) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in truth.frequencies().enumerate() {
        for (j, b) in recon.frequencies().enumerate() {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
            pairs.push((d2, i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_t = vec![false; truth.order()];
    let mut used_r = vec![false; recon.order()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_t[i] && !used_r[j] {
            used_t[i] = true;
            used_r[j] = true;
            out.push((i, j));
        }
    }
    out.sort();
    out
}

pub fn relative_errors(truth: &ExponentialSum, recon: &ExponentialSum) -> Result<ErrorReport> {
    relative_errors_on(truth, recon, &ErrorGrid::default())
}

pub fn relative_errors_on(
    truth: &ExponentialSum,
    recon: &ExponentialSum,
    grid: &ErrorGrid,
) -> Result<ErrorReport> {
    if truth.dim() != recon.dim() {
        return Err(Error::ShapeMismatch(format!(
            "truth has dimension {}, reconstruction {}",
            truth.dim(),
            recon.dim()
        )));
    }
    let matched = match_rows(truth, recon);
    let d = truth.dim();

    let mut e_lambda = 0.0f64;
    for axis in 0..d {
        let scale = matched
            .iter()
            .map(|&(i, _)| truth.frequency(i)[axis].norm())
            .fold(0.0, f64::max);
        let err = matched
            .iter()
            .map(|&(i, j)| (truth.frequency(i)[axis] - recon.frequency(j)[axis]).norm())
            .fold(0.0, f64::max);
        e_lambda = e_lambda.max(if scale > 0.0 { err / scale } else { err });
    }

    let gscale = matched.iter().map(|&(i, _)| truth.gamma()[i].norm()).fold(0.0, f64::max);
    let gerr = matched
        .iter()
        .map(|&(i, j)| (truth.gamma()[i] - recon.gamma()[j]).norm())
        .fold(0.0, f64::max);
    let e_gamma = if gscale > 0.0 { gerr / gscale } else { gerr };

    // The difference is summed term by term over matched rows so that rows
    // agreeing exactly contribute exactly zero.
    let unmatched_truth: Vec<usize> = (0..truth.order()).filter(|i| !matched.iter().any(|m| m.0 == *i)).collect();
    let unmatched_recon: Vec<usize> = (0..recon.order()).filter(|j| !matched.iter().any(|m| m.1 == *j)).collect();
    let points = grid.sample_points(d);
    let (num, den) = points
        .par_iter()
        .map(|t| {
            let diff: Complex64 = matched.iter().map(|&(i, j)| truth.term(i, t) - recon.term(j, t)).sum::<Complex64>()
                + unmatched_truth.iter().map(|&i| truth.term(i, t)).sum::<Complex64>()
                - unmatched_recon.iter().map(|&j| recon.term(j, t)).sum::<Complex64>();
            (diff.norm(), truth.evaluate(t).norm())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let e_f = if den > 0.0 { num / den } else { num };

    let order_mismatch =
        (truth.order() != recon.order()).then_some((truth.order(), recon.order()));
    Ok(ErrorReport { e_lambda, e_gamma, e_f, matched_permutation: matched, order_mismatch })
}
