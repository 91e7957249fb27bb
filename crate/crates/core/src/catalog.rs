//! Named benchmark signals with the sampling parameters they are recovered with.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::expsum::ExponentialSum;

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub name: &'static str,
    pub sum: ExponentialSum,
    pub period: f64,
    pub n: usize,
    /// Diagonal shift for sparse-grid recovery, when the signal qualifies.
    pub tau: Option<usize>,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn im(x: f64) -> Complex64 {
    c(0.0, x)
}

fn real(x: f64) -> Complex64 {
    c(x, 0.0)
}

fn build(name: &'static str, lambda: Vec<Vec<Complex64>>, gamma: Vec<Complex64>, period: f64, n: usize, tau: Option<usize>) -> Benchmark {
    let sum = ExponentialSum::new(lambda, gamma).expect("benchmark signals are valid");
    Benchmark { name, sum, period, n, tau }
}

/// Bivariate, order 5, purely imaginary frequencies distinct on each axis.
pub fn f1() -> Benchmark {
    let lambda = vec![
        vec![im(2.21f64.sqrt()), im(3.33)],
        vec![im(-5.63), im(-(5f64.sqrt()))],
        vec![im(-3.47), im(6f64.sqrt())],
        vec![im(-(7.1f64.sqrt())), im(-4.5)],
        vec![im(0.46), im(-9.44)],
    ];
    let gamma = [3.0, 2.0, 1.0, 2.0, 1.0].map(real).to_vec();
    build("f1", lambda, gamma, 4.0, 15, Some(7))
}

/// Trivariate, order 6, damped frequencies in conjugate pairs.
pub fn f2() -> Benchmark {
    let sp = PI.sqrt();
    let s20 = 20f64.sqrt();
    let lambda = vec![
        vec![c(-2.0, -3.0), c(-sp, sp), im(0.5)],
        vec![c(-1.0, s20), c(-3.0, 1.0), c(-1.0, 1.0)],
        vec![im(3.0), c(-4.0, 0.5), im(1.22)],
        vec![c(-2.0, 3.0), c(-sp, -sp), im(-0.5)],
        vec![c(-1.0, -s20), c(-3.0, -1.0), c(-1.0, -1.0)],
        vec![im(-3.0), c(-4.0, -0.5), im(-1.22)],
    ];
    let gamma = [-1.0, -2.0, -3.0, 1.0, 2.0, 3.0].map(real).to_vec();
    build("f2", lambda, gamma, 5.0, 15, Some(4))
}

/// Four variables, order 9, with repeated values on every axis.
pub fn f3() -> Benchmark {
    let lambda = vec![
        vec![c(2.0, 2.0), im(0.2), im(1.0), real(1.0)],
        vec![c(2.0, 2.0), im(0.2), im(1.0), real(-1.0)],
        vec![c(2.0, 2.0), real(-2.0), c(1.0, 1.0), im(1.0)],
        vec![c(2.0, 2.0), real(-2.0), c(1.0, 1.0), im(-2.0)],
        vec![c(2.0, 2.0), real(-2.0), c(1.0, 1.0), im(3.0)],
        vec![c(3.0, 1.0), real(-PI), real(-3.0), im(-PI.sqrt())],
        vec![c(3.0, 1.0), real(-PI), real(1.0), im(2.0)],
        vec![c(3.0, 1.0), real(-PI), real(1.0), real(-4.0)],
        vec![c(3.0, 1.0), im(0.2), c(1.0, 1.0), im(20f64.sqrt())],
    ];
    build("f3", lambda, vec![real(1.0); 9], 2.4, 10, None)
}

/// Trivariate, order 4, three rows sharing the first-axis frequency.
pub fn f4() -> Benchmark {
    let lambda = vec![
        vec![c(-1.47, -0.27), c(-1.87, -0.57), c(-1.35, 4.61)],
        vec![c(-1.47, -0.27), c(-1.87, -0.57), c(-1.26, -2.58)],
        vec![c(-1.47, -0.27), c(-0.84, 7.53), c(-1.75, -1.33)],
        vec![c(-0.60, 4.86), c(-0.13, 5.05), c(-0.12, 8.34)],
    ];
    let gamma = [1.0, -4.0, -2.0, 2.0].map(real).to_vec();
    build("f4", lambda, gamma, 1.0, 10, None)
}

fn order_eight_gamma() -> Vec<Complex64> {
    let base = [c(1.0, 1.0), c(2.0, 3.0), c(5.0, -6.0), c(0.2, -1.0)];
    base.iter().chain(base.iter()).copied().collect()
}

fn imag_rows(rows: &[&[f64]]) -> Vec<Vec<Complex64>> {
    rows.iter().map(|r| r.iter().map(|&x| im(x)).collect()).collect()
}

/// Bivariate, order 8, undamped.
pub fn f5() -> Benchmark {
    let lambda = imag_rows(&[
        &[0.1, 1.2],
        &[0.19, 1.3],
        &[0.3, 1.5],
        &[0.35, 0.3],
        &[-0.1, 1.2],
        &[-0.19, 0.35],
        &[-0.3, -1.5],
        &[-0.3, 0.3],
    ]);
    build("f5", lambda, order_eight_gamma(), 60.0, 15, None)
}

/// Trivariate, order 8, undamped.
pub fn f6() -> Benchmark {
    let lambda = imag_rows(&[
        &[0.1, 1.2, 0.1],
        &[0.19, 1.3, 0.2],
        &[0.4, 1.5, 1.5],
        &[0.45, 0.3, -0.3],
        &[-0.1, 1.2, 0.1],
        &[-0.19, 0.35, -0.5],
        &[-0.4, -1.5, 0.25],
        &[-0.4, 0.3, -0.3],
    ]);
    build("f6", lambda, order_eight_gamma(), 60.0, 15, None)
}

/// Four variables, order 8, undamped.
pub fn f7() -> Benchmark {
    let lambda = imag_rows(&[
        &[0.1, 1.2, 0.1, 0.45],
        &[0.19, 1.3, 0.2, 1.5],
        &[0.3, 1.5, 1.5, -1.3],
        &[0.45, 0.3, -0.3, 0.4],
        &[-0.1, 1.2, 0.1, -1.5],
        &[-0.19, 0.35, -0.5, -0.45],
        &[-0.4, -1.5, 0.25, 1.3],
        &[-0.4, 0.3, -0.3, 0.4],
    ]);
    build("f7", lambda, order_eight_gamma(), 60.0, 15, None)
}

pub fn all() -> Vec<Benchmark> {
    vec![f1(), f2(), f3(), f4(), f5(), f6(), f7()]
}

pub fn by_name(name: &str) -> Option<Benchmark> {
    all().into_iter().find(|b| b.name == name)
}
