#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use expanal_core::expsum::{pole_to_frequency, CoefficientAccess, Coverage, ExponentialSum};
use expanal_core::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random pole with real part in `(-bound, bound)`, at least 0.1 away from
/// every integer, and imaginary part in `[-im_bound, im_bound]`.
pub fn random_pole(rng: &mut ChaCha8Rng, bound: f64, im_bound: f64) -> Complex64 {
    loop {
        let re: f64 = rng.random_range(-bound..bound);
        if (re - re.round()).abs() >= 0.1 {
            return c(re, rng.random_range(-im_bound..=im_bound));
        }
    }
}

pub fn random_gamma(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(rng.random_range(0.5..2.0), rng.random_range(0.0..2.0 * PI))
}

/// Pole vectors whose values on every axis are pairwise separated by at
/// least `sep` (the sparse method's standing assumption).
pub fn axiswise_distinct_poles(
    rng: &mut ChaCha8Rng,
    dim: usize,
    order: usize,
    bound: f64,
    im_bound: f64,
    sep: f64,
) -> Vec<Vec<Complex64>> {
    let mut columns: Vec<Vec<Complex64>> = Vec::new();
    for _ in 0..dim {
        let mut col: Vec<Complex64> = Vec::new();
        while col.len() < order {
            let b = random_pole(rng, bound, im_bound);
            if col.iter().all(|x| (x - b).norm() >= sep) {
                col.push(b);
            }
        }
        columns.push(col);
    }
    (0..order).map(|j| (0..dim).map(|l| columns[l][j]).collect()).collect()
}

/// Like [`axiswise_distinct_poles`], restricted to imaginary-dominant
/// frequencies: every pole has `|Im b| <= min(|Re b|, im_bound)`.
pub fn axiswise_dominant_poles(
    rng: &mut ChaCha8Rng,
    dim: usize,
    order: usize,
    bound: f64,
    im_bound: f64,
    sep: f64,
) -> Vec<Vec<Complex64>> {
    let mut columns: Vec<Vec<Complex64>> = Vec::new();
    for _ in 0..dim {
        let mut col: Vec<Complex64> = Vec::new();
        while col.len() < order {
            let re = random_pole(rng, bound, 0.0).re;
            let cap = re.abs().min(im_bound);
            let b = c(re, rng.random_range(-cap..=cap));
            if col.iter().all(|x| (x - b).norm() >= sep) {
                col.push(b);
            }
        }
        columns.push(col);
    }
    (0..order).map(|j| (0..dim).map(|l| columns[l][j]).collect()).collect()
}

pub fn sum_from_poles(poles: &[Vec<Complex64>], gamma: Vec<Complex64>, period: f64) -> ExponentialSum {
    let lambda = poles.iter().map(|row| row.iter().map(|&b| pole_to_frequency(b, period)).collect()).collect();
    ExponentialSum::new(lambda, gamma).unwrap()
}

/// Adaptive Gauss-Kronrod (7, 15) quadrature on `[a, b]`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64) -> Complex64 {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    fn rec<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Complex64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut kronrod = f(mid) * WK[7];
        let mut gauss = f(mid) * WG[3];
        for i in 0..7 {
            let (fl, fr) = (f(mid - half * XK[i]), f(mid + half * XK[i]));
            kronrod += (fl + fr) * WK[i];
            if i % 2 == 1 {
                gauss += (fl + fr) * WG[i / 2];
            }
        }
        let (kronrod, gauss) = (kronrod * half, gauss * half);
        if (kronrod - gauss).norm() <= tol || depth > 40 {
            kronrod
        } else {
            rec(f, a, mid, 0.5 * tol, depth + 1) + rec(f, mid, b, 0.5 * tol, depth + 1)
        }
    }
    rec(f, a, b, tol, 0)
}

/// `c_k = P^{-d} int_{[0,P]^d} f(t) exp(-2 pi i <k, t> / P) dt` by nested
/// adaptive quadrature of the signal itself, for `d <= 2`.
pub fn quadrature_coefficient(sum: &ExponentialSum, k: &[i64], period: f64, tol: f64) -> Complex64 {
    let kernel = |t: &[f64]| -> Complex64 {
        let phase: f64 = k.iter().zip(t).map(|(&ki, &ti)| ki as f64 * ti).sum();
        sum.evaluate(t) * Complex64::from_polar(1.0, -2.0 * PI * phase / period)
    };
    match sum.dim() {
        1 => integrate(&|t| kernel(&[t]), 0.0, period, tol) / period,
        2 => {
            let inner = |t1: f64| integrate(&|t2| kernel(&[t1, t2]), 0.0, period, tol);
            integrate(&inner, 0.0, period, tol * period) / (period * period)
        }
        d => panic!("quadrature oracle supports d <= 2, got {d}"),
    }
}

/// Wraps a source and records every index read.
pub struct AuditedSource<'a, S: CoefficientAccess> {
    pub inner: &'a S,
    pub reads: Mutex<BTreeMap<Vec<i64>, usize>>,
}

impl<'a, S: CoefficientAccess> AuditedSource<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        Self { inner, reads: Mutex::new(BTreeMap::new()) }
    }

    pub fn read_indices(&self) -> Vec<Vec<i64>> {
        self.reads.lock().unwrap().keys().cloned().collect()
    }
}

impl<S: CoefficientAccess> CoefficientAccess for AuditedSource<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn period(&self) -> f64 {
        self.inner.period()
    }
    fn half_width(&self) -> usize {
        self.inner.half_width()
    }
    fn coverage(&self) -> Coverage {
        self.inner.coverage()
    }
    fn coefficient(&self, k: &[i64]) -> Option<Complex64> {
        *self.reads.lock().unwrap().entry(k.to_vec()).or_insert(0) += 1;
        self.inner.coefficient(k)
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}
