//! Maximum-likelihood fits of recorded probe data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::RunLog;
use crate::error::{Error, Result};
use crate::models::{Design, MeasurementModel, Outcome};
use crate::rng;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<(Design, Outcome)>,
}

impl Dataset {
    pub fn new(records: Vec<(Design, Outcome)>) -> Self {
        Dataset { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl From<&RunLog> for Dataset {
    fn from(log: &RunLog) -> Self {
        Dataset::new(log.dataset())
    }
}

/// `Σ ln p(y_i | theta, xi_i)`, or `-inf` if any record is impossible.
///
/// The sum is exactly rounded, so the value does not depend on record order.
pub fn log_likelihood(data: &Dataset, model: &dyn MeasurementModel, theta: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut acc = ExactSum::default();
    for (xi, y) in &data.records {
        let p = model.likelihood(theta, xi, *y);
        if !(p > 0.0) {
            if p.is_nan() {
                return Err(Error::Model(format!("likelihood is NaN at theta = {theta:?}")));
            }
            return Ok(f64::NEG_INFINITY);
        }
        acc.add(p.ln());
    }
    Ok(acc.value())
}

/// Exactly rounded floating-point sum (Shewchuk partials).
#[derive(Default)]
struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(mut n) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round-half-even correction.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Perturbed restarts in addition to the initial guess.
    pub restarts: usize,
    /// Convergence threshold on the simplex diameter, relative to bound widths.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Finite-difference step for the information matrix, relative to bound widths.
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { restarts: 5, tolerance: 1e-8, max_iterations: 20_000, hessian_step: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<String>,
    pub theta_hat: Vec<f64>,
    /// `None` where the observed information is unavailable (parameter on a
    /// bound, or singular information matrix).
    pub std_errors: Vec<Option<f64>>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub at_bound: Vec<bool>,
    pub information_singular: bool,
    pub evaluations: usize,
}

/// Bounded maximum-likelihood fit by Nelder–Mead simplex search with
/// restarts; standard errors from the inverse observed information.
pub fn mle_fit(
    data: &Dataset,
    model: &dyn MeasurementModel,
    theta0: &[f64],
    bounds: &[(f64, f64)],
    opts: &FitOptions,
) -> Result<FitResult> {
    let names = model.parameter_names();
    let dim = names.len();
    if theta0.len() != dim || bounds.len() != dim {
        return Err(Error::InvalidArgument(format!("model has {dim} parameters")));
    }
    for (k, (&t, &(lo, hi))) in theta0.iter().zip(bounds).enumerate() {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad bounds for `{}`", names[k])));
        }
        if !(t >= lo && t <= hi) {
            return Err(Error::InvalidArgument(format!("theta0 for `{}` outside bounds", names[k])));
        }
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }

    let to_theta = |u: &[f64]| -> Vec<f64> { u.iter().zip(bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect() };
    let mut evaluations = 0usize;
    let mut objective = |u: &[f64]| -> Result<f64> {
        evaluations += 1;
        let ll = log_likelihood(data, model, &to_theta(u))?;
        Ok(if ll.is_finite() { -ll } else { f64::INFINITY })
    };

    let u0: Vec<f64> = theta0.iter().zip(bounds).map(|(t, (lo, hi))| (t - lo) / (hi - lo)).collect();
    let mut starts = vec![u0.clone()];
    let mut prng = rng::seeded(0x5eed);
    for _ in 0..opts.restarts {
        starts.push(u0.iter().map(|u| (u + prng.gen_range(-0.1..0.1)).clamp(0.0, 1.0)).collect());
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (u, f, converged) = nelder_mead(&mut objective, start, opts)?;
        if converged && f.is_finite() && best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((u, f));
        }
    }
    let Some((u_hat, f_hat)) = best else {
        return Err(Error::Fit("no start converged".into()));
    };
    let theta_hat = to_theta(&u_hat);

    // Observed information over the parameters away from their bounds.
    let steps: Vec<f64> = bounds.iter().map(|(lo, hi)| opts.hessian_step * (hi - lo)).collect();
    let at_bound: Vec<bool> = theta_hat
        .iter()
        .zip(bounds)
        .zip(&steps)
        .map(|((t, (lo, hi)), h)| t - h < *lo || t + h > *hi)
        .collect();
    let free: Vec<usize> = (0..dim).filter(|&k| !at_bound[k]).collect();
    let ll = |theta: &[f64]| log_likelihood(data, model, theta);
    let mut info = vec![vec![0.0; free.len()]; free.len()];
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate().skip(a) {
            let d2 = if i == j {
                let mut p = theta_hat.clone();
                p[i] += steps[i];
                let fp = ll(&p)?;
                p[i] -= 2.0 * steps[i];
                let fm = ll(&p)?;
                (fp - 2.0 * (-f_hat) + fm) / (steps[i] * steps[i])
            } else {
                let mut f = [0.0; 4];
                for (slot, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().enumerate() {
                    let mut p = theta_hat.clone();
                    p[i] += si * steps[i];
                    p[j] += sj * steps[j];
                    f[slot] = ll(&p)?;
                }
                (f[0] - f[1] - f[2] + f[3]) / (4.0 * steps[i] * steps[j])
            };
            info[a][b] = -d2;
            info[b][a] = -d2;
        }
    }
    let mut std_errors = vec![None; dim];
    let mut information_singular = false;
    if !free.is_empty() {
        match invert_spd(&info) {
            Some(cov) => {
                for (a, &k) in free.iter().enumerate() {
                    std_errors[k] = Some(cov[a][a].sqrt());
                }
            }
            None => information_singular = true,
        }
    }

    Ok(FitResult {
        parameters: names,
        theta_hat,
        std_errors,
        log_likelihood: -f_hat,
        converged: true,
        at_bound,
        information_singular,
        evaluations,
    })
}

/// Nelder–Mead on the unit box, vertices clamped to `[0, 1]`.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    start: &[f64],
    opts: &FitOptions,
) -> Result<(Vec<f64>, f64, bool)> {
    let n = start.len();
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect() };
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for k in 0..n {
        let mut v = start.to_vec();
        v[k] += if v[k] + 0.05 <= 1.0 { 0.05 } else { -0.05 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect::<Result<_>>()?;

    for _ in 0..opts.max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < opts.tolerance {
            return Ok((simplex[0].clone(), values[0], true));
        }

        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { clamp(centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect()) };

        let reflected = along(1.0);
        let fr = f(&reflected)?;
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = f(&expanded)?;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = along(0.5);
            let fc = f(&c)?;
            (c, fc)
        } else {
            let c = along(-0.5);
            let fc = f(&c)?;
            (c, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = simplex[i].iter().zip(&best).map(|(x, b)| b + 0.5 * (x - b)).collect();
            values[i] = f(&simplex[i])?;
        }
    }
    let i = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Ok((simplex[i].clone(), values[i], false))
}

/// Inverse of a symmetric positive-definite matrix via Cholesky, or `None`.
fn invert_spd(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    // Solve L L^T X = I column by column.
    let mut inv = vec![vec![0.0; n]; n];
    for c in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let rhs = if i == c { 1.0 } else { 0.0 };
            y[i] = (rhs - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
        }
        for i in 0..n {
            inv[i][c] = x[i];
        }
    }
    Some(inv)
}
