//! Univariate rational recovery: AAA barycentric fitting, pole extraction and
//! residues of `r(z) = sum_j a_j / (z - b_j)` from samples on integer lines.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::{gamma_from_residue, pole_to_frequency, CoefficientAccess, ExponentialSum};
use crate::linalg::{gen_eig, lstsq, svd, ComplexMatrix, DEFAULT_RCOND};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `r(z) = sum_s w_s f_s / (z - z_s) / sum_s w_s / (z - z_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BarycentricForm {
    support: Vec<Complex64>,
    values: Vec<Complex64>,
    weights: Vec<Complex64>,
}

impl BarycentricForm {
    /// Weights are normalized to unit 2-norm.
    pub fn new(support: Vec<Complex64>, values: Vec<Complex64>, weights: Vec<Complex64>) -> Result<Self> {
        if support.is_empty() || support.len() != values.len() || support.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "barycentric form with {} support points, {} values, {} weights",
                support.len(),
                values.len(),
                weights.len()
            )));
        }
        for i in 0..support.len() {
            if support[i + 1..].contains(&support[i]) {
                return Err(Error::BadParameters(format!("support point {} repeated", support[i])));
            }
        }
        let norm = weights.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::BadParameters("weight vector must be finite and nonzero".into()));
        }
        let weights = weights.into_iter().map(|w| w / norm).collect();
        Ok(Self { support, values, weights })
    }

    pub fn support(&self) -> &[Complex64] {
        &self.support
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Value at `z`; returns the stored value at support points.
    pub fn evaluate(&self, z: Complex64) -> Complex64 {
        if let Some(s) = self.support.iter().position(|&p| p == z) {
            return self.values[s];
        }
        let (mut num, mut den) = (ZERO, ZERO);
        for ((p, f), w) in self.support.iter().zip(&self.values).zip(&self.weights) {
            let c = w / (z - p);
            num += c * f;
            den += c;
        }
        num / den
    }

    /// Zeros of the barycentric denominator, from the arrowhead pencil
    /// `[[0, w^T], [1, diag(z)]] - x diag(0, 1, ..., 1)`. Two of its
    /// eigenvalues are infinite; the remaining `n - 1` are returned sorted.
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        let n = self.len();
        if n < 2 {
            return Err(Error::BadParameters("pole extraction needs at least 2 support points".into()));
        }
        let a = ComplexMatrix::from_fn(n + 1, n + 1, |i, j| match (i, j) {
            (0, 0) => ZERO,
            (0, j) => self.weights[j - 1],
            (_, 0) => ONE,
            (i, j) if i == j => self.support[i - 1],
            _ => ZERO,
        })?;
        let b = ComplexMatrix::from_fn(n + 1, n + 1, |i, j| if i == j && i > 0 { ONE } else { ZERO })?;
        let mut eig = gen_eig(&a, &b)?;
        // Rank by how far each eigenvalue is from infinity and keep n - 1.
        let finiteness = |e: &crate::linalg::GeneralizedEigenvalue| {
            let (al, be) = (e.alpha.norm(), e.beta.norm());
            if al + be == 0.0 {
                0.0
            } else {
                be / (al + be)
            }
        };
        eig.sort_by(|x, y| finiteness(y).total_cmp(&finiteness(x)));
        let mut poles: Vec<Complex64> = eig
            .iter()
            .take(n - 1)
            .filter(|e| !e.infinite)
            .map(|e| e.alpha / e.beta)
            .collect();
        sort_poles(&mut poles);
        Ok(poles)
    }
}

/// Lexicographic order on (real, imaginary) parts.
pub fn sort_poles(poles: &mut [Complex64]) {
    poles.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
}

/// Diagnostics of one AAA run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaaTrace {
    /// Number of greedy steps, equal to the final support size.
    pub iterations: usize,
    /// Maximum residual over the sample set after each step.
    pub max_residual_history: Vec<f64>,
    /// Sample indices in the order they entered the support.
    pub chosen_support_order: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct AaaFit {
    pub form: BarycentricForm,
    pub trace: AaaTrace,
    /// False when `max_order` was reached with the residual above tolerance.
    pub converged: bool,
}

impl AaaFit {
    pub fn final_residual(&self) -> f64 {
        self.trace.max_residual_history.last().copied().unwrap_or(0.0)
    }

    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NoConvergence { order: self.trace.iterations, residual: self.final_residual() })
        }
    }
}

/// AAA greedy barycentric fit. Stops once the maximum residual is at most
/// `tol * max|values|` or the support holds `max_order` points.
pub fn aaa_fit(points: &[Complex64], values: &[Complex64], tol: f64, max_order: usize) -> Result<AaaFit> {
    if !(tol > 0.0) {
        return Err(Error::BadParameters(format!("AAA tolerance {tol} must be positive")));
    }
    aaa_run(points, values, tol, max_order)
}

fn aaa_run(points: &[Complex64], values: &[Complex64], tol: f64, max_order: usize) -> Result<AaaFit> {
    let n = points.len();
    if n != values.len() {
        return Err(Error::ShapeMismatch(format!("{n} points but {} values", values.len())));
    }
    if n < 2 {
        return Err(Error::BadParameters("AAA needs at least 2 points".into()));
    }
    if max_order == 0 {
        return Err(Error::BadParameters("max_order must be at least 1".into()));
    }
    for i in 0..n {
        if points[i + 1..].contains(&points[i]) {
            return Err(Error::BadParameters(format!("sample point {} repeated", points[i])));
        }
    }
    if points.iter().chain(values).any(|z| !z.is_finite()) {
        return Err(Error::BadParameters("non-finite sample".into()));
    }
    let max_order = max_order.min(n - 1);
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);

    let mut in_support = vec![false; n];
    let mut order: Vec<usize> = Vec::new();
    let mut approx = vec![ZERO; n];
    let mut history = Vec::new();
    let mut weights: Vec<Complex64>;
    let mut converged = false;

    loop {
        // Greedy pick: largest residual, smallest index on ties.
        let mut pick = None;
        let mut best = -1.0;
        for i in 0..n {
            if !in_support[i] {
                let r = (values[i] - approx[i]).norm();
                if r > best {
                    best = r;
                    pick = Some(i);
                }
            }
        }
        let pick = pick.expect("support never exhausts the sample set");
        in_support[pick] = true;
        order.push(pick);

        let rest: Vec<usize> = (0..n).filter(|&i| !in_support[i]).collect();
        let cols = order.len();
        let rows = rest.len().max(cols);
        let loewner = ComplexMatrix::from_fn(rows, cols, |r, s| {
            if r < rest.len() {
                let (i, j) = (rest[r], order[s]);
                (values[i] - values[j]) / (points[i] - points[j])
            } else {
                ZERO
            }
        })?;
        weights = svd(&loewner)?.smallest_right_singular_vector();

        let mut err = 0.0f64;
        for &i in &rest {
            let (mut num, mut den) = (ZERO, ZERO);
            for (s, &j) in order.iter().enumerate() {
                let c = weights[s] / (points[i] - points[j]);
                num += c * values[j];
                den += c;
            }
            approx[i] = num / den;
            let r = (values[i] - approx[i]).norm();
            err = if r.is_nan() { f64::INFINITY } else { err.max(r) };
        }
        for &j in &order {
            approx[j] = values[j];
        }
        history.push(err);

        if err <= tol * scale {
            converged = true;
            break;
        }
        if order.len() >= max_order {
            break;
        }
    }

    let form = BarycentricForm::new(
        order.iter().map(|&i| points[i]).collect(),
        order.iter().map(|&i| values[i]).collect(),
        weights,
    )?;
    let trace = AaaTrace { iterations: order.len(), max_residual_history: history, chosen_support_order: order };
    Ok(AaaFit { form, trace, converged })
}

/// Loewner matrices `L(t)[l, s] = (x_l^t f_l - z_s^t f_s) / (x_l - z_s)` with
/// rows indexed by `rows` and columns by `cols` (both index `points`).
pub fn loewner_matrices(
    points: &[Complex64],
    values: &[Complex64],
    rows: &[usize],
    cols: &[usize],
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if points.len() != values.len() {
        return Err(Error::ShapeMismatch(format!("{} points but {} values", points.len(), values.len())));
    }
    let l0 = ComplexMatrix::from_fn(rows.len(), cols.len(), |r, s| {
        let (i, j) = (rows[r], cols[s]);
        (values[i] - values[j]) / (points[i] - points[j])
    })?;
    let l1 = ComplexMatrix::from_fn(rows.len(), cols.len(), |r, s| {
        let (i, j) = (rows[r], cols[s]);
        (points[i] * values[i] - points[j] * values[j]) / (points[i] - points[j])
    })?;
    Ok((l0, l1))
}

/// Poles from the Loewner pencil `z L(0) - L(1)`. The `order` columns are the
/// support points an `order`-step AAA run picks; the pencil is projected to
/// `order x order` through the thin SVD of `L(0)`.
pub fn loewner_pencil_poles(
    points: &[Complex64],
    values: &[Complex64],
    order: usize,
    rank_tol: f64,
) -> Result<Vec<Complex64>> {
    if order == 0 || points.len() < 2 * order {
        return Err(Error::BadParameters(format!(
            "Loewner pencil of order {order} needs at least {} points, got {}",
            2 * order,
            points.len()
        )));
    }
    let greedy = aaa_run(points, values, f64::MIN_POSITIVE, order)?;
    let cols = greedy.trace.chosen_support_order.clone();
    let rows: Vec<usize> = (0..points.len()).filter(|i| !cols.contains(i)).collect();
    let (l0, l1) = loewner_matrices(points, values, &rows, &cols)?;
    let dec = svd(&l0)?;
    let rank = dec.rank(rank_tol);
    if rank < order {
        return Err(Error::RankDeficient { rank, order });
    }
    let projected = dec.u.adjoint().matmul(&l1)?.matmul(&dec.v)?;
    let sigma: Vec<Complex64> = dec.sigma.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    let mut poles: Vec<Complex64> = gen_eig(&projected, &ComplexMatrix::from_diagonal(&sigma)?)?
        .iter()
        .filter_map(|e| e.value())
        .collect();
    sort_poles(&mut poles);
    Ok(poles)
}

/// Cauchy matrix `1 / (x_i - b_j)`.
pub fn cauchy_matrix(points: &[Complex64], poles: &[Complex64]) -> Result<ComplexMatrix> {
    ComplexMatrix::from_fn(points.len(), poles.len(), |i, j| ONE / (points[i] - poles[j]))
}

/// Least squares residues of `sum_j a_j / (x - b_j)` fitted to the samples.
pub fn residues_ls(poles: &[Complex64], points: &[Complex64], values: &[Complex64]) -> Result<Vec<Complex64>> {
    if points.len() != values.len() {
        return Err(Error::ShapeMismatch(format!("{} points but {} values", points.len(), values.len())));
    }
    if poles.is_empty() {
        return Ok(Vec::new());
    }
    lstsq(&cauchy_matrix(points, poles)?, values, DEFAULT_RCOND)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoleMethod {
    /// Arrowhead eigenproblem on the final AAA form.
    Eigen,
    /// Projected Loewner pencil with the order taken from AAA.
    Loewner,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RationalConfig {
    /// Relative AAA stopping tolerance.
    pub tol: f64,
    /// Support-size cap; `None` means `min(N, 100)` for a line of `2N + 1` samples.
    pub max_order: Option<usize>,
    pub pole_method: PoleMethod,
    /// Poles whose residue is below this fraction of the largest are dropped.
    pub froissart_ratio: f64,
    /// Singular value cutoff for the Loewner pencil's rank check.
    pub loewner_rank_tol: f64,
    /// Relative misfit of the final pole-residue fit above which the data
    /// is declared inconsistent with a rational function.
    pub misfit_tol: f64,
    /// Poles closer than this to a sampled integer are degenerate.
    pub degenerate_distance: f64,
    /// Gauss-Newton steps polishing poles and residues against all samples.
    pub refine_steps: usize,
}

impl Default for RationalConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_order: None,
            pole_method: PoleMethod::Eigen,
            froissart_ratio: 1e-12,
            loewner_rank_tol: DEFAULT_RCOND,
            misfit_tol: 1e-7,
            degenerate_distance: 1e-6,
            refine_steps: 4,
        }
    }
}

/// Pole-residue fit of one sample line.
#[derive(Clone, Debug)]
pub struct LineFit {
    pub poles: Vec<Complex64>,
    pub residues: Vec<Complex64>,
    pub trace: AaaTrace,
    /// Maximum misfit relative to `max|values|`.
    pub misfit: f64,
}

impl LineFit {
    /// Order implied by the AAA iteration count.
    pub fn aaa_order(&self) -> usize {
        self.trace.iterations.saturating_sub(1)
    }
}

/// Full univariate pipeline on one line of integer samples: AAA, poles,
/// residues, spurious-pole filter and degeneracy checks.
pub fn fit_line(indices: &[i64], values: &[Complex64], config: &RationalConfig) -> Result<LineFit> {
    let points: Vec<Complex64> = indices.iter().map(|&k| Complex64::new(k as f64, 0.0)).collect();
    let max_order = config.max_order.unwrap_or((indices.len().saturating_sub(1) / 2).clamp(1, 100));
    let fit = aaa_fit(&points, values, config.tol, max_order)?;
    fit.require_converged()?;
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(LineFit { poles: Vec::new(), residues: Vec::new(), trace: fit.trace, misfit: 0.0 });
    }

    let aaa_order = fit.trace.iterations - 1;
    let mut poles = match config.pole_method {
        _ if aaa_order == 0 => Vec::new(),
        PoleMethod::Eigen => fit.form.poles()?,
        PoleMethod::Loewner => loewner_pencil_poles(&points, values, aaa_order, config.loewner_rank_tol)?,
    };

    for b in &poles {
        let k = b.re.round();
        if (b - Complex64::new(k, 0.0)).norm() < config.degenerate_distance && indices.contains(&(k as i64)) {
            return Err(Error::DegenerateSample { index: k as i64 });
        }
    }

    let mut residues = residues_ls(&poles, &points, values)?;
    let amax = residues.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if residues.iter().any(|a| a.norm() < config.froissart_ratio * amax) {
        let keep: Vec<usize> =
            (0..poles.len()).filter(|&j| residues[j].norm() >= config.froissart_ratio * amax).collect();
        poles = keep.iter().map(|&j| poles[j]).collect();
        residues = residues_ls(&poles, &points, values)?;
    }

    if config.refine_steps > 0 && !poles.is_empty() {
        (poles, residues) = refine_pole_residue(&points, values, poles, residues, config.refine_steps)?;
    }

    let residual: Vec<f64> = points
        .iter()
        .zip(values)
        .map(|(x, v)| {
            let fitted: Complex64 = poles.iter().zip(&residues).map(|(b, a)| a / (x - b)).sum();
            (v - fitted).norm() / scale
        })
        .collect();
    let misfit = residual.iter().copied().fold(0.0, f64::max);
    if !(misfit <= config.misfit_tol) {
        // A single dominant outlier is the signature of a frequency sitting
        // exactly on the sampling lattice.
        let worst = (0..residual.len()).max_by(|&i, &j| residual[i].total_cmp(&residual[j])).unwrap_or(0);
        let runner_up = (0..residual.len()).filter(|&i| i != worst).map(|i| residual[i]).fold(0.0, f64::max);
        if residual[worst] > 10.0 * runner_up {
            return Err(Error::DegenerateSample { index: indices[worst] });
        }
        return Err(Error::NoConvergence { order: poles.len(), residual: misfit });
    }

    Ok(LineFit { poles, residues, trace: fit.trace, misfit })
}

fn pole_residue_misfit(points: &[Complex64], values: &[Complex64], poles: &[Complex64], residues: &[Complex64]) -> f64 {
    points
        .iter()
        .zip(values)
        .map(|(x, v)| (v - poles.iter().zip(residues).map(|(b, a)| a / (x - b)).sum::<Complex64>()).norm_sqr())
        .sum()
}

/// Gauss-Newton on `min sum_k |v_k - sum_j a_j / (x_k - b_j)|^2` over poles
/// and residues jointly. The Loewner null vector behind the eigenvalue poles
/// loses accuracy when samples near a pole dominate the matrix norm; the
/// least squares fit over all samples does not. Steps that fail to lower the
/// misfit are rejected, so the result is never worse than the input.
pub fn refine_pole_residue(
    points: &[Complex64],
    values: &[Complex64],
    mut poles: Vec<Complex64>,
    mut residues: Vec<Complex64>,
    steps: usize,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let m = poles.len();
    let mut misfit = pole_residue_misfit(points, values, &poles, &residues);
    for _ in 0..steps {
        if misfit == 0.0 {
            break;
        }
        // Model is holomorphic in (a, b): d/da_j = 1/(x - b_j), d/db_j = a_j/(x - b_j)^2.
        let jac = ComplexMatrix::from_fn(points.len(), 2 * m, |i, j| {
            let (x, b) = (points[i], poles[j % m]);
            if j < m {
                ONE / (x - b)
            } else {
                residues[j - m] / ((x - b) * (x - b))
            }
        })?;
        let rhs: Vec<Complex64> = points
            .iter()
            .zip(values)
            .map(|(x, v)| v - poles.iter().zip(&residues).map(|(b, a)| a / (x - b)).sum::<Complex64>())
            .collect();
        let step = lstsq(&jac, &rhs, DEFAULT_RCOND)?;
        let trial_res: Vec<Complex64> = residues.iter().zip(&step[..m]).map(|(a, d)| a + d).collect();
        let trial_poles: Vec<Complex64> = poles.iter().zip(&step[m..]).map(|(b, d)| b + d).collect();
        let trial = pole_residue_misfit(points, values, &trial_poles, &trial_res);
        if !(trial < misfit) {
            break;
        }
        misfit = trial;
        poles = trial_poles;
        residues = trial_res;
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| poles[i].re.total_cmp(&poles[j].re).then(poles[i].im.total_cmp(&poles[j].im)));
    Ok((order.iter().map(|&i| poles[i]).collect(), order.iter().map(|&i| residues[i]).collect()))
}

/// Result of a univariate recovery with its diagnostics.
#[derive(Clone, Debug)]
pub struct UnivariateRecovery {
    pub sum: ExponentialSum,
    pub fit: LineFit,
}

/// Recovers a univariate exponential sum from `c_k`, `k = -N..N`.
pub fn recover_univariate(source: &impl CoefficientAccess, config: &RationalConfig) -> Result<UnivariateRecovery> {
    if source.dim() != 1 {
        return Err(Error::ShapeMismatch(format!("univariate recovery on a {}-dimensional source", source.dim())));
    }
    let n = source.half_width() as i64;
    let indices: Vec<i64> = (-n..=n).collect();
    let values = indices.iter().map(|&k| source.require(&[k])).collect::<Result<Vec<_>>>()?;
    let config = RationalConfig { max_order: config.max_order.or(Some((n as usize).min(100))), ..*config };
    let fit = fit_line(&indices, &values, &config)?;
    if fit.poles.is_empty() {
        return Err(Error::InvalidSum("all coefficients vanish".into()));
    }
    let period = source.period();
    let lambda: Vec<Vec<Complex64>> = fit.poles.iter().map(|&b| vec![pole_to_frequency(b, period)]).collect();
    let gamma = lambda.iter().zip(&fit.residues).map(|(l, &a)| gamma_from_residue(a, l, period)).collect();
    Ok(UnivariateRecovery { sum: ExponentialSum::new(lambda, gamma)?, fit })
}
