//! Recovery from the sparse grid: `d` coordinate-axis lines fix the per-axis
//! poles, `d - 1` shifted diagonals pair them into frequency vectors.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::{gamma_from_residue, pole_to_frequency, CoefficientAccess, ExponentialSum};
use crate::linalg::{ComplexMatrix, Pseudoinverse, DEFAULT_RCOND};
use crate::rational::{fit_line, AaaTrace, RationalConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    Axis,
    Diagonal,
}

/// One sampled index line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexLine {
    pub kind: LineKind,
    /// For an axis line the varying axis; for a diagonal the first of its two axes.
    pub axis: usize,
    /// Line parameter `k` of every index, ascending.
    pub params: Vec<i64>,
    pub indices: Vec<Vec<i64>>,
}

/// The `2d - 1` index lines: `(0,..,k,..,0)` for every axis and
/// `(0,..,k,k + 2 tau,..,0)` for every pair of neighbouring axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SparseGridPlan {
    pub dim: usize,
    pub n: usize,
    pub tau: usize,
}

impl SparseGridPlan {
    pub fn new(dim: usize, n: usize, tau: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadParameters("dimension must be at least 1".into()));
        }
        if tau == 0 || n <= tau {
            return Err(Error::BadParameters(format!("sparse grid needs N > tau >= 1, got N = {n}, tau = {tau}")));
        }
        Ok(Self { dim, n, tau })
    }

    pub fn axis_line(&self, axis: usize) -> IndexLine {
        let n = self.n as i64;
        let params: Vec<i64> = (-n..=n).collect();
        let indices = params
            .iter()
            .map(|&k| {
                let mut idx = vec![0; self.dim];
                idx[axis] = k;
                idx
            })
            .collect();
        IndexLine { kind: LineKind::Axis, axis, params, indices }
    }

    /// Diagonal through axes `axis` and `axis + 1`.
    pub fn diagonal_line(&self, axis: usize) -> IndexLine {
        let (n, shift) = (self.n as i64, 2 * self.tau as i64);
        let params: Vec<i64> = (-n..=n - shift).collect();
        let indices = params
            .iter()
            .map(|&k| {
                let mut idx = vec![0; self.dim];
                idx[axis] = k;
                idx[axis + 1] = k + shift;
                idx
            })
            .collect();
        IndexLine { kind: LineKind::Diagonal, axis, params, indices }
    }

    pub fn lines(&self) -> Vec<IndexLine> {
        (0..self.dim)
            .map(|m| self.axis_line(m))
            .chain((0..self.dim - 1).map(|m| self.diagonal_line(m)))
            .collect()
    }

    /// Every index of every line; indices shared by several lines repeat.
    pub fn all_indices(&self) -> impl Iterator<Item = Vec<i64>> {
        self.lines().into_iter().flat_map(|l| l.indices)
    }

    /// `d (2N + 1) + (d - 1)(2N + 1 - 2 tau)`, counting shared indices once per line.
    pub fn sample_count(&self) -> usize {
        let side = 2 * self.n + 1;
        self.dim * side + (self.dim - 1) * (side - 2 * self.tau)
    }
}

/// Poles and coefficients `A_{jm} = a_j / prod_{l != m} (-b_{jl})` on one axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxisRecovery {
    pub axis: usize,
    pub poles: Vec<Complex64>,
    pub coeffs: Vec<Complex64>,
    pub trace: AaaTrace,
}

/// How the axis poles were chained into frequency vectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairingCertificate {
    /// `permutations[m][j]` is the index of the axis `m + 1` pole paired with
    /// pole `j` of axis `m`.
    pub permutations: Vec<Vec<usize>>,
    pub c_vectors: Vec<Vec<Complex64>>,
    /// Score of each matched pair.
    pub scores: Vec<Vec<f64>>,
    /// Best score among the unmatched candidates of each row.
    pub runner_up: Vec<Vec<f64>>,
    /// Samples counted per line.
    pub sample_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseConfig {
    pub tau: usize,
    pub rational: RationalConfig,
    /// Largest acceptable matched pairing score.
    pub pairing_tol: f64,
    /// Required ratio of runner-up to matched score.
    pub pairing_margin: f64,
}

impl SparseConfig {
    pub fn new(tau: usize) -> Self {
        Self { tau, rational: RationalConfig::default(), pairing_tol: 1e-6, pairing_margin: 10.0 }
    }
}

#[derive(Clone, Debug)]
pub struct SparseRecovery {
    pub sum: ExponentialSum,
    pub axes: Vec<AxisRecovery>,
    pub certificate: PairingCertificate,
}

fn line_values(source: &impl CoefficientAccess, line: &IndexLine) -> Result<Vec<Complex64>> {
    line.indices.iter().map(|k| source.require(k)).collect()
}

/// Fits the axis line. `expected` is the order fixed by the first axis.
pub fn recover_axis(
    axis: usize,
    params: &[i64],
    values: &[Complex64],
    config: &RationalConfig,
    expected: Option<usize>,
) -> Result<AxisRecovery> {
    let config = match expected {
        Some(m) => RationalConfig { max_order: Some(m + 1), ..*config },
        None => *config,
    };
    let fit = match fit_line(params, values, &config) {
        Ok(fit) => fit,
        Err(Error::NoConvergence { order, .. }) if expected.is_some() => {
            return Err(Error::AxisOrderMismatch { axis, expected: expected.unwrap_or(0), found: order });
        }
        Err(e) => return Err(e),
    };
    if let Some(m) = expected {
        if fit.poles.len() != m {
            return Err(Error::AxisOrderMismatch { axis, expected: m, found: fit.poles.len() });
        }
    }
    if fit.poles.is_empty() {
        return Err(Error::InvalidSum(format!("coefficients on axis {axis} vanish")));
    }
    Ok(AxisRecovery { axis, poles: fit.poles, coeffs: fit.residues, trace: fit.trace })
}

/// Least squares coefficients `(c_1, c_2)` of
/// `r(k) = sum_j c_{1j} / (k - b_j) + sum_j c_{2j} / (k - (b'_j - 2 tau))`.
pub fn pairing_system(
    poles_prev: &[Complex64],
    poles_next: &[Complex64],
    params: &[i64],
    values: &[Complex64],
    tau: usize,
) -> Result<Vec<Complex64>> {
    let m = poles_prev.len();
    if poles_next.len() != m || params.len() != values.len() {
        return Err(Error::ShapeMismatch(format!(
            "pairing system with {} and {} poles, {} parameters and {} values",
            m,
            poles_next.len(),
            params.len(),
            values.len()
        )));
    }
    if params.len() < 2 * m {
        return Err(Error::IllConditioned {
            context: "pairing system".into(),
            rank: params.len(),
            required: 2 * m,
        });
    }
    let shift = Complex64::new(2.0 * tau as f64, 0.0);
    let shifted: Vec<Complex64> = poles_prev.iter().copied().chain(poles_next.iter().map(|b| b - shift)).collect();
    let mat = ComplexMatrix::from_fn(params.len(), 2 * m, |i, j| {
        Complex64::new(1.0, 0.0) / (Complex64::new(params[i] as f64, 0.0) - shifted[j])
    })?;
    let pinv = Pseudoinverse::new(&mat, DEFAULT_RCOND)?;
    if pinv.rank() < 2 * m {
        return Err(Error::IllConditioned { context: "pairing system".into(), rank: pinv.rank(), required: 2 * m });
    }
    pinv.apply(values)
}

/// Violation of the pairing conditions for every candidate `(j, k)`:
/// `|c_{1j} + c_{2k}| / max|c| + |A_j - (c_{1j} + c_{2k} b_j / b'_k - 2 tau c_{1j} / b'_k)| / max|A|`.
pub fn pairing_scores(
    c: &[Complex64],
    coeffs_prev: &[Complex64],
    poles_prev: &[Complex64],
    poles_next: &[Complex64],
    tau: usize,
) -> Result<Vec<Vec<f64>>> {
    let m = poles_prev.len();
    if c.len() != 2 * m || coeffs_prev.len() != m || poles_next.len() != m {
        return Err(Error::ShapeMismatch("pairing inputs disagree in length".into()));
    }
    let cmax = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let amax = coeffs_prev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let two_tau = 2.0 * tau as f64;
    Ok((0..m)
        .map(|j| {
            (0..m)
                .map(|k| {
                    let (c1, c2) = (c[j], c[m + k]);
                    let predicted = c1 + c2 * poles_prev[j] / poles_next[k] - c1 * two_tau / poles_next[k];
                    (c1 + c2).norm() / cmax + (coeffs_prev[j] - predicted).norm() / amax
                })
                .collect()
        })
        .collect())
}

/// Outcome of one pairing stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Pairing {
    pub permutation: Vec<usize>,
    pub scores: Vec<f64>,
    pub runner_up: Vec<f64>,
}

/// Finds the bijection minimizing the total pairing violation and checks that
/// it is unambiguous.
pub fn match_pairs(
    c: &[Complex64],
    coeffs_prev: &[Complex64],
    poles_prev: &[Complex64],
    poles_next: &[Complex64],
    tau: usize,
    tol: f64,
    margin: f64,
) -> Result<Pairing> {
    let cost = pairing_scores(c, coeffs_prev, poles_prev, poles_next, tau)?;
    let m = cost.len();
    let permutation = if m <= 64 { hungarian(&cost) } else { greedy_assignment(&cost) };
    let scores: Vec<f64> = (0..m).map(|j| cost[j][permutation[j]]).collect();
    let runner_up: Vec<f64> = (0..m)
        .map(|j| (0..m).filter(|&k| k != permutation[j]).map(|k| cost[j][k]).fold(f64::INFINITY, f64::min))
        .collect();
    for j in 0..m {
        if !(scores[j] <= tol) || !(runner_up[j] >= margin * scores[j]) {
            return Err(Error::AmbiguousPairing { stage: 0, row: j, best: scores[j], runner_up: runner_up[j] });
        }
    }
    Ok(Pairing { permutation, scores, runner_up })
}

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based workspace: row_of[col] is the row matched to col.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

/// Repeatedly takes the globally cheapest unmatched pair.
fn greedy_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut pairs: Vec<(f64, usize, usize)> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (cost[i][j], i, j)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assignment = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, i, j) in pairs {
        if assignment[i] == usize::MAX && !taken[j] {
            assignment[i] = j;
            taken[j] = true;
        }
    }
    assignment
}

/// Recovers the exponential sum from the sparse-grid lines of `source`.
pub fn recover_sparse(source: &impl CoefficientAccess, config: &SparseConfig) -> Result<SparseRecovery> {
    let dim = source.dim();
    let plan = SparseGridPlan::new(dim, source.half_width(), config.tau)?;
    let period = source.period();

    let first_line = plan.axis_line(0);
    let first = recover_axis(0, &first_line.params, &line_values(source, &first_line)?, &config.rational, None)?;
    let order = first.poles.len();
    let rest: Vec<AxisRecovery> = (1..dim)
        .into_par_iter()
        .map(|m| {
            let line = plan.axis_line(m);
            recover_axis(m, &line.params, &line_values(source, &line)?, &config.rational, Some(order))
        })
        .collect::<Result<_>>()?;
    let axes: Vec<AxisRecovery> = std::iter::once(first).chain(rest).collect();

    for ax in &axes {
        if let Some(b) = ax.poles.iter().find(|b| b.re.abs() >= config.tau as f64) {
            return Err(Error::TauViolation { axis: ax.axis, pole: *b, tau: config.tau });
        }
    }

    let mut certificate = PairingCertificate {
        permutations: Vec::new(),
        c_vectors: Vec::new(),
        scores: Vec::new(),
        runner_up: Vec::new(),
        sample_count: plan.sample_count(),
    };
    for m in 1..dim {
        let line = plan.diagonal_line(m - 1);
        let values = line_values(source, &line)?;
        let (prev, next) = (&axes[m - 1], &axes[m]);
        let c = pairing_system(&prev.poles, &next.poles, &line.params, &values, config.tau)?;
        let pairing =
            match_pairs(&c, &prev.coeffs, &prev.poles, &next.poles, config.tau, config.pairing_tol, config.pairing_margin)
                .map_err(|e| match e {
                    Error::AmbiguousPairing { row, best, runner_up, .. } => {
                        Error::AmbiguousPairing { stage: m, row, best, runner_up }
                    }
                    other => other,
                })?;
        certificate.permutations.push(pairing.permutation);
        certificate.c_vectors.push(c);
        certificate.scores.push(pairing.scores);
        certificate.runner_up.push(pairing.runner_up);
    }

    let mut lambda = Vec::with_capacity(order);
    let mut gamma = Vec::with_capacity(order);
    let coeff_scale: Vec<f64> =
        axes.iter().map(|ax| ax.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
    for j in 0..order {
        let mut idx = vec![j];
        for perm in &certificate.permutations {
            idx.push(perm[*idx.last().expect("starts nonempty")]);
        }
        let poles: Vec<Complex64> = idx.iter().enumerate().map(|(m, &i)| axes[m].poles[i]).collect();
        // Every axis line carries a_j / prod_{l != m}(-b_jl); read it where
        // row j stands out most against the line's other terms.
        let best = (0..dim)
            .max_by(|&p, &q| {
                let rel = |m: usize| axes[m].coeffs[idx[m]].norm() / coeff_scale[m];
                rel(p).total_cmp(&rel(q)).then(q.cmp(&p))
            })
            .unwrap_or(0);
        let others: Complex64 = (0..dim).filter(|&l| l != best).map(|l| -poles[l]).product();
        let a = axes[best].coeffs[idx[best]] * others;
        let row: Vec<Complex64> = poles.iter().map(|&b| pole_to_frequency(b, period)).collect();
        gamma.push(gamma_from_residue(a, &row, period));
        lambda.push(row);
    }
    Ok(SparseRecovery { sum: ExponentialSum::new(lambda, gamma)?, axes, certificate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expsum::{synthesize, Coverage};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn plan_counts() {
        let p = SparseGridPlan::new(2, 15, 7).unwrap();
        assert_eq!(p.lines().len(), 3);
        assert_eq!(p.lines().iter().map(|l| l.indices.len()).collect::<Vec<_>>(), vec![31, 31, 17]);
        assert_eq!(p.sample_count(), 79);
        let unique = Coverage::SparseLines { tau: 7 }.indices(2, 15).unwrap();
        assert_eq!(unique.len(), 76);
        assert_eq!(SparseGridPlan::new(3, 15, 4).unwrap().lines().len(), 5);
        assert!(SparseGridPlan::new(2, 2, 2).is_err());
        assert!(SparseGridPlan::new(2, 5, 0).is_err());
    }

    #[test]
    fn diagonal_indices_are_shifted() {
        let p = SparseGridPlan::new(3, 4, 1).unwrap();
        let diag = p.diagonal_line(1);
        assert_eq!(diag.indices.first().unwrap(), &vec![0, -4, -2]);
        assert_eq!(diag.indices.last().unwrap(), &vec![0, 2, 4]);
    }

    #[test]
    fn pairing_system_single_term_has_opposite_coefficients() {
        let (b1, b2, a, tau) = (c(0.3, 0.2), c(-0.4, 1.0), c(1.5, -0.5), 2);
        let params: Vec<i64> = (-8..=4).collect();
        let shift = 2.0 * tau as f64;
        let values: Vec<Complex64> =
            params.iter().map(|&k| a / ((k as f64 - b1) * (k as f64 - (b2 - shift)))).collect();
        let cv = pairing_system(&[b1], &[b2], &params, &values, tau).unwrap();
        let expected = a / (b1 - b2 + shift);
        assert!((cv[0] - expected).norm() < 1e-12);
        assert!((cv[1] + expected).norm() < 1e-12);
    }

    #[test]
    fn hungarian_small_cases() {
        assert_eq!(hungarian(&[vec![1.0]]), vec![0]);
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        // optimum 1 + 2 + 2 = 5 via (0,1), (1,0), (2,2)
        assert_eq!(hungarian(&cost), vec![1, 0, 2]);
        assert_eq!(greedy_assignment(&cost), vec![0, 1, 2]);
    }

    #[test]
    fn single_term_roundtrip_in_four_dimensions() {
        let row = vec![c(0.1, 1.3), c(-0.2, -0.7), c(0.05, 2.1), c(0.3, 0.4)];
        let truth = ExponentialSum::new(vec![row], vec![c(1.2, -0.3)]).unwrap();
        let src = synthesize(&truth, 2.0, 6, Coverage::SparseLines { tau: 2 }).unwrap();
        let rec = recover_sparse(&src, &SparseConfig::new(2)).unwrap();
        for (g, w) in rec.sum.frequency(0).iter().zip(truth.frequency(0)) {
            assert!((g - w).norm() < 1e-10);
        }
        assert!((rec.sum.gamma()[0] - truth.gamma()[0]).norm() < 1e-10);
        assert_eq!(rec.certificate.permutations, vec![vec![0]; 3]);
    }

    #[test]
    fn shared_axis_value_is_an_order_mismatch() {
        let truth = ExponentialSum::new(
            vec![vec![c(0.0, 1.0), c(0.0, 0.5), c(0.0, 0.8)], vec![c(0.0, -1.2), c(0.0, 0.5), c(0.0, -0.3)]],
            vec![c(1.0, 0.0), c(2.0, 0.0)],
        )
        .unwrap();
        let src = synthesize(&truth, 2.0, 8, Coverage::SparseLines { tau: 1 }).unwrap();
        let err = recover_sparse(&src, &SparseConfig::new(1)).unwrap_err();
        assert!(matches!(err, Error::AxisOrderMismatch { axis: 1, expected: 2, found: 1 }), "{err:?}");
    }

    #[test]
    fn too_small_tau_is_reported() {
        // Im(lambda) P / (2 pi) = 3.3 exceeds tau = 2
        let truth = ExponentialSum::new(
            vec![vec![c(0.0, 3.3 * std::f64::consts::PI), c(0.0, 0.5)]],
            vec![c(1.0, 0.0)],
        )
        .unwrap();
        let src = synthesize(&truth, 2.0, 8, Coverage::SparseLines { tau: 2 }).unwrap();
        assert!(matches!(recover_sparse(&src, &SparseConfig::new(2)), Err(Error::TauViolation { axis: 0, .. })));
    }
}
