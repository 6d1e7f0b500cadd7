#![allow(dead_code)]

use ionprobe::{Design, MeasurementModel, ParameterAxis};

/// Model with `p(1 | theta, xi)` given by a closure and unit efficiency.
pub struct FnModel<F> {
    pub dim: usize,
    pub design_dim: usize,
    pub f: F,
}

impl<F> MeasurementModel for FnModel<F>
where
    F: Fn(&[f64], &Design) -> f64 + Send + Sync,
{
    fn parameter_names(&self) -> Vec<String> {
        (0..self.dim).map(|k| format!("t{k}")).collect()
    }

    fn design_dim(&self) -> usize {
        self.design_dim
    }

    fn transmission(&self, theta: &[f64], xi: &Design) -> f64 {
        (self.f)(theta, xi)
    }

    fn efficiency(&self, _theta: &[f64]) -> f64 {
        1.0
    }
}

pub fn fn_model<F>(dim: usize, design_dim: usize, f: F) -> FnModel<F>
where
    F: Fn(&[f64], &Design) -> f64 + Send + Sync,
{
    FnModel { dim, design_dim, f }
}

pub fn axis(name: &str, lo: f64, hi: f64, count: usize) -> ParameterAxis {
    ParameterAxis::new(name, lo, hi, count).unwrap()
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Trapezoid quadrature weight of node `i` on an axis of `count` nodes.
pub fn trapezoid_weight(step: f64, i: usize, count: usize) -> f64 {
    if i == 0 || i + 1 == count {
        step / 2.0
    } else {
        step
    }
}
