//! Recovery from the full coefficient grid by recursive dimension reduction:
//! fit the distinct poles along one axis, split the grid into one slice per
//! pole by Cauchy least squares, recurse on each slice.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::{gamma_from_residue, pole_to_frequency, CoefficientAccess, ExponentialSum, FullGrid};
use crate::linalg::{ComplexMatrix, Pseudoinverse, DEFAULT_RCOND};
use crate::rational::{cauchy_matrix, fit_line, sort_poles, AaaTrace, RationalConfig};

/// Values on `[-N, N]^q`, row-major with the slice's leading axis slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub dim: usize,
    pub n: usize,
    pub values: Vec<Complex64>,
}

impl Slice {
    pub fn new(dim: usize, n: usize, values: Vec<Complex64>) -> Result<Self> {
        let expected = FullGrid::new(dim, n).len();
        if dim == 0 || values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "slice of dimension {dim}, N = {n} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self { dim, n, values })
    }

    /// Reads the whole grid `[-N, N]^d` from a source, each index once.
    pub fn from_source(source: &impl CoefficientAccess) -> Result<Self> {
        let grid = FullGrid::new(source.dim(), source.half_width());
        let values = grid.iter().map(|k| source.require(&k)).collect::<Result<Vec<_>>>()?;
        Self::new(source.dim(), source.half_width(), values)
    }

    fn side(&self) -> usize {
        2 * self.n + 1
    }

    /// Number of tail indices behind each value of the leading axis.
    fn tail_len(&self) -> usize {
        self.values.len() / self.side()
    }

    /// Values along the leading axis with all other indices zero.
    pub fn leading_line(&self) -> Vec<Complex64> {
        let tail = self.tail_len();
        // the all-zero tail sits in the middle of the tail block
        let zero_tail = (tail - 1) / 2;
        (0..self.side()).map(|i| self.values[i * tail + zero_tail]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Pole `b = lambda P / (2 pi i)` on axis `depth`.
    pub pole: Complex64,
    /// Axis number, 1-based; leaves have depth `d`.
    pub depth: usize,
    pub children: Vec<TreeNode>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub leaf_multiplicity: Option<usize>,
}

impl TreeNode {
    fn leaves(&self) -> usize {
        if self.children.is_empty() {
            self.leaf_multiplicity.unwrap_or(1)
        } else {
            self.children.iter().map(TreeNode::leaves).sum()
        }
    }

    fn paths(&self, prefix: &mut Vec<Complex64>, out: &mut Vec<Vec<Complex64>>) {
        prefix.push(self.pole);
        if self.children.is_empty() {
            out.push(prefix.clone());
        } else {
            for child in &self.children {
                child.paths(prefix, out);
            }
        }
        prefix.pop();
    }
}

/// Rooted forest of poles: depth-`p` nodes are the distinct axis-`p` poles
/// below their parent, root-to-leaf paths are the pole vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleTree {
    pub dim: usize,
    pub roots: Vec<TreeNode>,
}

impl PoleTree {
    pub fn leaf_count(&self) -> usize {
        self.roots.iter().map(TreeNode::leaves).sum()
    }

    /// Number of nodes at each depth, roots first.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.dim];
        let mut stack: Vec<&TreeNode> = self.roots.iter().collect();
        while let Some(node) = stack.pop() {
            sizes[node.depth - 1] += 1;
            stack.extend(node.children.iter());
        }
        sizes
    }

    /// Root-to-leaf pole vectors in depth-first order.
    pub fn paths(&self) -> Vec<Vec<Complex64>> {
        let mut out = Vec::new();
        for root in &self.roots {
            root.paths(&mut Vec::new(), &mut out);
        }
        out
    }

    /// Canonical shape string, equal for isomorphic trees: each node prints
    /// its sorted children shapes.
    pub fn shape(&self) -> String {
        fn node_shape(node: &TreeNode) -> String {
            let mut kids: Vec<String> = node.children.iter().map(node_shape).collect();
            kids.sort();
            format!("({})", kids.concat())
        }
        let mut roots: Vec<String> = self.roots.iter().map(node_shape).collect();
        roots.sort();
        roots.concat()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecursiveConfig {
    pub rational: RationalConfig,
    /// Poles closer than this fraction of the largest pole magnitude merge.
    pub merge_tol: f64,
    /// Relative re-synthesis residual above which a hidden pole is suspected.
    pub residual_tol: f64,
    /// Amplitude systems with more rows are solved on a row subset.
    pub max_rows: usize,
    pub parallel: bool,
}

impl Default for RecursiveConfig {
    fn default() -> Self {
        Self {
            rational: RationalConfig::default(),
            merge_tol: 1e-8,
            residual_tol: 1e-6,
            max_rows: 1_000_000,
            parallel: true,
        }
    }
}

/// Distinct poles along a line, clusters closer than `merge_tol * max|b|`
/// collapsed to their mean.
pub fn distinct_poles(
    params: &[i64],
    values: &[Complex64],
    config: &RationalConfig,
    merge_tol: f64,
) -> Result<(Vec<Complex64>, AaaTrace)> {
    let fit = fit_line(params, values, config)?;
    let scale = fit.poles.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let mut merged: Vec<(Complex64, usize)> = Vec::new();
    for &b in &fit.poles {
        match merged.iter_mut().find(|(m, cnt)| (*m / *cnt as f64 - b).norm() <= merge_tol * scale) {
            Some((sum, cnt)) => {
                *sum += b;
                *cnt += 1;
            }
            None => merged.push((b, 1)),
        }
    }
    let mut poles: Vec<Complex64> = merged.into_iter().map(|(s, c)| s / c as f64).collect();
    sort_poles(&mut poles);
    Ok((poles, fit.trace))
}

/// Splits a slice into one child slice per pole by solving
/// `sum_m child_m(tail) / (k - b_m) = parent(k, tail)` for every tail.
pub fn peel_dimension(poles: &[Complex64], parent: &Slice) -> Result<Vec<Slice>> {
    peel_with_gain(poles, parent).map(|(children, _)| children)
}

/// Like [`peel_dimension`], also returning `1 / sigma_min` of the Cauchy
/// system, the factor by which perturbations of the parent can grow.
fn peel_with_gain(poles: &[Complex64], parent: &Slice) -> Result<(Vec<Slice>, f64)> {
    if parent.dim < 2 {
        return Err(Error::BadParameters("cannot peel a one-dimensional slice".into()));
    }
    let side = parent.side();
    if poles.len() > side {
        return Err(Error::IllConditioned { context: "slice peeling".into(), rank: side, required: poles.len() });
    }
    let n = parent.n as i64;
    let points: Vec<Complex64> = (-n..=n).map(|k| Complex64::new(k as f64, 0.0)).collect();
    let pinv = Pseudoinverse::new(&cauchy_matrix(&points, poles)?, DEFAULT_RCOND)?;
    if pinv.rank() < poles.len() {
        return Err(Error::IllConditioned {
            context: "slice peeling".into(),
            rank: pinv.rank(),
            required: poles.len(),
        });
    }
    let gain = pinv.singular_values().get(poles.len().saturating_sub(1)).map_or(1.0, |s| 1.0 / s);
    let tail = parent.tail_len();
    let rhs = ComplexMatrix::new(side, tail, parent.values.clone())?;
    let children = pinv.matrix().matmul(&rhs)?.into_vec();
    let children = children
        .chunks(tail)
        .map(|chunk| Slice::new(parent.dim - 1, parent.n, chunk.to_vec()))
        .collect::<Result<_>>()?;
    Ok((children, gain))
}

#[derive(Clone, Debug)]
pub struct RecursiveRecovery {
    pub sum: ExponentialSum,
    pub tree: PoleTree,
    /// AAA diagnostics per fitted line, keyed by the pole path leading to it.
    pub traces: Vec<(Vec<Complex64>, AaaTrace)>,
    /// Relative re-synthesis residual over the grid.
    pub residual: f64,
}

struct Built {
    nodes: Vec<TreeNode>,
    traces: Vec<(Vec<Complex64>, AaaTrace)>,
}

/// `floor` is the absolute error level expected in `slice`; lines are fitted
/// no tighter than it, and a line entirely below it carries no poles.
fn build_level(
    slice: &Slice,
    depth: usize,
    path: &[Complex64],
    floor: f64,
    config: &RecursiveConfig,
    top: bool,
) -> Result<Built> {
    let n = slice.n as i64;
    let params: Vec<i64> = (-n..=n).collect();
    let line = slice.leading_line();
    let line_scale = line.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !top && line_scale <= floor {
        return Ok(Built { nodes: Vec::new(), traces: Vec::new() });
    }
    let rational = if top {
        config.rational
    } else {
        RationalConfig {
            max_order: Some(config.rational.max_order.unwrap_or(slice.n)),
            tol: config.rational.tol.max(floor / line_scale),
            ..config.rational
        }
    };
    let (poles, trace) =
        distinct_poles(&params, &line, &rational, config.merge_tol).map_err(|e| at_node(path, e))?;
    let mut traces = vec![(path.to_vec(), trace)];

    if slice.dim == 1 {
        let nodes = poles
            .into_iter()
            .map(|pole| TreeNode { pole, depth, children: Vec::new(), leaf_multiplicity: Some(1) })
            .collect();
        return Ok(Built { nodes, traces });
    }

    let (children, gain) = peel_with_gain(&poles, slice).map_err(|e| at_node(path, e))?;
    let child_floor = floor * gain;
    let recurse = |(pole, child): (&Complex64, &Slice)| -> Result<(TreeNode, Vec<(Vec<Complex64>, AaaTrace)>)> {
        let mut sub_path = path.to_vec();
        sub_path.push(*pole);
        let built = build_level(child, depth + 1, &sub_path, child_floor, config, false)?;
        Ok((TreeNode { pole: *pole, depth, children: built.nodes, leaf_multiplicity: None }, built.traces))
    };
    let results: Vec<_> = if config.parallel {
        poles.par_iter().zip(children.par_iter()).map(recurse).collect::<Result<_>>()?
    } else {
        poles.iter().zip(children.iter()).map(recurse).collect::<Result<_>>()?
    };
    let mut nodes = Vec::with_capacity(results.len());
    for (node, sub) in results {
        // A pole whose slice holds nothing but noise was spurious.
        if !node.children.is_empty() {
            nodes.push(node);
        }
        traces.extend(sub);
    }
    Ok(Built { nodes, traces })
}

fn at_node(path: &[Complex64], e: Error) -> Error {
    match e {
        Error::AtNode { .. } => e,
        other if path.is_empty() => other,
        other => Error::AtNode { path: path.to_vec(), source: Box::new(other) },
    }
}

/// Builds the pole tree from a full-grid slice.
pub fn build_pole_tree(root: &Slice, config: &RecursiveConfig) -> Result<(PoleTree, Vec<(Vec<Complex64>, AaaTrace)>)> {
    let scale = root.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let built = build_level(root, 1, &[], config.rational.tol * scale, config, true)?;
    Ok((PoleTree { dim: root.dim, roots: built.nodes }, built.traces))
}

/// Products `1 / prod_l (k_l - b_{jl})` for every grid index `k` (rows) and
/// pole vector `j` (columns), row-major.
fn rational_design(paths: &[Vec<Complex64>], dim: usize, n: usize, rows: &[usize]) -> Vec<Complex64> {
    let grid = FullGrid::new(dim, n);
    let side = grid.side();
    let m = paths.len();
    // tables[l][(k + N) * m + j] = 1 / (k - b_{jl})
    let tables: Vec<Vec<Complex64>> = (0..dim)
        .map(|l| {
            (0..side)
                .flat_map(|i| {
                    let k = Complex64::new(i as f64 - n as f64, 0.0);
                    paths.iter().map(move |p| Complex64::new(1.0, 0.0) / (k - p[l]))
                })
                .collect()
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); rows.len() * m];
    out.par_chunks_mut(m.max(1)).zip(rows.par_iter()).for_each(|(row, &lin)| {
        let idx = grid.multi_index(lin);
        for (j, slot) in row.iter_mut().enumerate() {
            let mut v = Complex64::new(1.0, 0.0);
            for (l, &k) in idx.iter().enumerate() {
                v *= tables[l][(k + n as i64) as usize * m + j];
            }
            *slot = v;
        }
    });
    out
}

/// Frequencies from the tree's pole paths, amplitudes from the grid-wide
/// least squares fit, and the re-synthesis residual.
pub fn leaves_to_sum(
    tree: &PoleTree,
    root: &Slice,
    period: f64,
    config: &RecursiveConfig,
) -> Result<(ExponentialSum, f64)> {
    let paths = tree.paths();
    let m = paths.len();
    if m == 0 {
        return Err(Error::InvalidSum("pole tree has no leaves".into()));
    }
    let total = root.values.len();
    let all_rows: Vec<usize> = (0..total).collect();

    let rows: Vec<usize> = if total > config.max_rows {
        // Keep the rows of largest norm; their index order keeps this deterministic.
        let design = rational_design(&paths, root.dim, root.n, &all_rows);
        let mut norms: Vec<(f64, usize)> = design
            .chunks(m)
            .enumerate()
            .map(|(i, r)| (r.iter().map(|z| z.norm_sqr()).sum::<f64>(), i))
            .collect();
        norms.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut keep: Vec<usize> = norms.into_iter().take((20 * m).min(total)).map(|(_, i)| i).collect();
        keep.sort_unstable();
        keep
    } else {
        all_rows.clone()
    };

    let design = ComplexMatrix::new(rows.len(), m, rational_design(&paths, root.dim, root.n, &rows))?;
    let rhs: Vec<Complex64> = rows.iter().map(|&i| root.values[i]).collect();
    let pinv = Pseudoinverse::new(&design, DEFAULT_RCOND)?;
    if pinv.rank() < m {
        return Err(Error::IllConditioned { context: "amplitude system".into(), rank: pinv.rank(), required: m });
    }
    let amplitudes = pinv.apply(&rhs)?;

    // Re-synthesis over the full grid in blocks.
    let scale = root.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let residual = all_rows
        .par_chunks(4096)
        .map(|block| {
            let local = rational_design(&paths, root.dim, root.n, block);
            block
                .iter()
                .zip(local.chunks(m))
                .map(|(&i, row)| {
                    let fitted: Complex64 = row.iter().zip(&amplitudes).map(|(r, a)| r * a).sum();
                    (root.values[i] - fitted).norm()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
        / if scale > 0.0 { scale } else { 1.0 };

    let lambda: Vec<Vec<Complex64>> =
        paths.iter().map(|p| p.iter().map(|&b| pole_to_frequency(b, period)).collect()).collect();
    let gamma = lambda.iter().zip(&amplitudes).map(|(l, &a)| gamma_from_residue(a, l, period)).collect();
    Ok((ExponentialSum::new(lambda, gamma)?, residual))
}

/// Recovers the exponential sum from the full grid `[-N, N]^d` of `source`.
pub fn recover_recursive(source: &impl CoefficientAccess, config: &RecursiveConfig) -> Result<RecursiveRecovery> {
    let root = Slice::from_source(source)?;
    let (tree, traces) = build_pole_tree(&root, config)?;
    let (sum, residual) = leaves_to_sum(&tree, &root, source.period(), config)?;
    if !(residual <= config.residual_tol) {
        return Err(Error::ResidualCheck { residual, threshold: config.residual_tol });
    }
    Ok(RecursiveRecovery { sum, tree, traces, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expsum::{synthesize, Coverage};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn leading_line_takes_zero_tail() {
        let grid = FullGrid::new(3, 2);
        let values: Vec<Complex64> = grid.iter().map(|k| c((k[0] * 100 + k[1] * 10 + k[2]) as f64, 0.0)).collect();
        let s = Slice::new(3, 2, values).unwrap();
        let line: Vec<f64> = s.leading_line().iter().map(|z| z.re).collect();
        assert_eq!(line, vec![-200.0, -100.0, 0.0, 100.0, 200.0]);
    }

    #[test]
    fn peel_single_pole_recovers_tail_function() {
        let (b, n) = (c(0.4, 1.2), 5);
        let tail = |t: i64| c(1.0 / (t as f64 + 0.5), 0.3);
        let grid = FullGrid::new(2, n);
        let values = grid.iter().map(|k| tail(k[1]) / (c(k[0] as f64, 0.0) - b)).collect();
        let children = peel_dimension(&[b], &Slice::new(2, n, values).unwrap()).unwrap();
        assert_eq!(children.len(), 1);
        for (i, v) in children[0].values.iter().enumerate() {
            assert!((v - tail(i as i64 - n as i64)).norm() < 1e-12);
        }
    }

    #[test]
    fn peel_two_poles_matches_partial_sums() {
        // r(k1, k2) = sum_l a_l / ((k1 - b_l1)(k2 - b_l2)), rows 0 and 1 share b_1
        let rows = [(c(0.3, 0.5), c(-1.0, 0.2), c(1.0, 0.0)), (c(0.3, 0.5), c(2.0, -0.5), c(0.5, 1.0)), (c(-1.2, 0.1), c(0.7, 0.9), c(-2.0, 0.0))];
        let n = 6;
        let grid = FullGrid::new(2, n);
        let values = grid
            .iter()
            .map(|k| {
                rows.iter()
                    .map(|(b1, b2, a)| a / ((c(k[0] as f64, 0.0) - b1) * (c(k[1] as f64, 0.0) - b2)))
                    .sum()
            })
            .collect();
        let poles = [c(-1.2, 0.1), c(0.3, 0.5)];
        let children = peel_dimension(&poles, &Slice::new(2, n, values).unwrap()).unwrap();
        for (m, pole) in poles.iter().enumerate() {
            for (i, v) in children[m].values.iter().enumerate() {
                let k2 = c(i as f64 - n as f64, 0.0);
                let want: Complex64 =
                    rows.iter().filter(|(b1, _, _)| b1 == pole).map(|(_, b2, a)| a / (k2 - b2)).sum();
                assert!((v - want).norm() < 1e-11, "{m} {i}");
            }
        }
    }

    #[test]
    fn single_term_gives_path_tree() {
        for dim in 1..=4 {
            let row: Vec<Complex64> = (0..dim).map(|l| c(0.1 * l as f64, 0.7 + 0.4 * l as f64)).collect();
            let truth = ExponentialSum::new(vec![row.clone()], vec![c(2.0, -1.0)]).unwrap();
            let src = synthesize(&truth, 2.0, 4, Coverage::Full).unwrap();
            let rec = recover_recursive(&src, &RecursiveConfig::default()).unwrap();
            assert_eq!(rec.tree.level_sizes(), vec![1; dim]);
            assert_eq!(rec.tree.leaf_count(), 1);
            for (g, w) in rec.sum.frequency(0).iter().zip(&row) {
                assert!((g - w).norm() < 1e-10);
            }
            assert!((rec.sum.gamma()[0] - c(2.0, -1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn repeated_first_axis_frequency_is_handled() {
        let truth = ExponentialSum::new(
            vec![
                vec![c(0.0, 1.0), c(0.0, 0.5), c(0.0, -0.7)],
                vec![c(0.0, 1.0), c(0.0, -1.1), c(0.0, 0.3)],
                vec![c(0.0, -0.6), c(0.0, 0.5), c(0.0, 1.4)],
                vec![c(0.0, 0.4), c(0.0, 0.9), c(0.0, 0.3)],
            ],
            vec![c(1.0, 0.0), c(-2.0, 0.5), c(0.7, 0.0), c(1.5, 1.0)],
        )
        .unwrap();
        let src = synthesize(&truth, 3.0, 8, Coverage::Full).unwrap();
        let rec = recover_recursive(&src, &RecursiveConfig::default()).unwrap();
        assert_eq!(rec.tree.level_sizes()[0], 3);
        assert_eq!(rec.tree.leaf_count(), 4);
        let report = crate::expsum::relative_errors(&truth, &rec.sum).unwrap();
        assert!(report.e_lambda < 1e-8 && report.e_gamma < 1e-8, "{report:?}");
    }

    #[test]
    fn tree_shape_ignores_child_order() {
        let leaf = |p: f64, d| TreeNode { pole: c(p, 0.0), depth: d, children: vec![], leaf_multiplicity: Some(1) };
        let a = PoleTree {
            dim: 2,
            roots: vec![
                TreeNode { pole: c(0.0, 0.0), depth: 1, children: vec![leaf(1.0, 2)], leaf_multiplicity: None },
                TreeNode { pole: c(1.0, 0.0), depth: 1, children: vec![leaf(1.0, 2), leaf(2.0, 2)], leaf_multiplicity: None },
            ],
        };
        let mut b = a.clone();
        b.roots.reverse();
        assert_eq!(a.shape(), b.shape());
        assert_eq!(a.level_sizes(), vec![2, 3]);
        assert_eq!(a.leaf_count(), 3);
    }
}
