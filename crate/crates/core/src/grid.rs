//! Joint parameter densities on regular grids.
//!
//! A [`ParameterGrid`] holds density values (not probabilities) at the nodes of
//! a regular lattice spanned by one to three [`ParameterAxis`] values. Integrals
//! over the grid use the tensor-product trapezoid rule, so a node's volume is
//! the product of the per-axis steps with a factor 1/2 for every axis on which
//! the node sits at an end point. With this convention a uniform density on
//! an interval of length `L` has value `1/L` at every node and differential
//! entropy exactly `ln L`.
//!
//! Every update returns a fresh grid; grids are never mutated in place.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Design, MeasurementModel, Outcome};

/// Evidence below this value is treated as an impossible observation.
pub const MIN_EVIDENCE: f64 = 1e-300;

/// One equidistant axis of a parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AxisRepr", into = "AxisRepr")]
pub struct ParameterAxis {
    name: String,
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct AxisRepr {
    name: String,
    lo: f64,
    hi: f64,
    count: usize,
}

impl TryFrom<AxisRepr> for ParameterAxis {
    type Error = Error;
    fn try_from(r: AxisRepr) -> Result<Self> {
        ParameterAxis::new(r.name, r.lo, r.hi, r.count)
    }
}

impl From<ParameterAxis> for AxisRepr {
    fn from(a: ParameterAxis) -> Self {
        AxisRepr { name: a.name, lo: a.lo, hi: a.hi, count: a.count }
    }
}

impl ParameterAxis {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, count: usize) -> Result<Self> {
        let name = name.into();
        let bad = |reason: &str| Error::InvalidAxis { name: name.clone(), reason: reason.to_string() };
        if !lo.is_finite() || !hi.is_finite() {
            return Err(bad("bounds must be finite"));
        }
        if hi <= lo {
            return Err(bad("hi must be greater than lo"));
        }
        if count < 2 {
            return Err(bad("count must be >= 2"));
        }
        Ok(ParameterAxis { name, lo, hi, count })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Node coordinate. The last node is exactly `hi`.
    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    /// Trapezoid quadrature weight of node `i` along this axis.
    pub fn quadrature_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.count {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Per-axis prior marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform,
    /// Gaussian truncated to the axis range.
    Gaussian { mean: f64, std: f64 },
}

/// Prior over the grid: uniform everywhere, or a product of independent
/// per-axis marginals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Uniform,
    Independent { marginals: Vec<Marginal> },
}

impl Prior {
    pub fn gaussian(params: &[(f64, f64)]) -> Self {
        Prior::Independent {
            marginals: params.iter().map(|&(mean, std)| Marginal::Gaussian { mean, std }).collect(),
        }
    }
}

/// Posterior moments and central 95% credible interval for one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub ci95: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub axes: Vec<AxisSummary>,
    /// How the interval bounds were obtained.
    pub interval_method: String,
}

impl PosteriorSummary {
    pub fn means(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.mean).collect()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.std).collect()
    }

    pub fn axis(&self, name: &str) -> Option<&AxisSummary> {
        self.axes.iter().find(|a| a.name == name)
    }
}

/// A normalized density over a regular grid of one to three axes.
///
/// Weights are stored in row-major order: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct ParameterGrid {
    axes: Vec<ParameterAxis>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    axes: Vec<ParameterAxis>,
    weights: Vec<f64>,
}

impl TryFrom<GridRepr> for ParameterGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        let grid = ParameterGrid::from_raw(r.axes, r.weights)?;
        let mass = grid.total_mass();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidGrid(format!("snapshot is not normalized (mass {mass})")));
        }
        Ok(grid)
    }
}

impl From<ParameterGrid> for GridRepr {
    fn from(g: ParameterGrid) -> Self {
        GridRepr { axes: g.axes, weights: g.weights }
    }
}

/// Builds a normalized prior grid.
pub fn make_grid(axes: Vec<ParameterAxis>, prior: &Prior) -> Result<ParameterGrid> {
    ParameterGrid::new(axes, prior)
}

impl ParameterGrid {
    pub fn new(axes: Vec<ParameterAxis>, prior: &Prior) -> Result<Self> {
        check_axes(&axes)?;
        let marginals: Vec<Vec<f64>> = match prior {
            Prior::Uniform => axes.iter().map(|a| vec![1.0; a.count()]).collect(),
            Prior::Independent { marginals } => {
                if marginals.len() != axes.len() {
                    return Err(Error::InvalidPrior(format!(
                        "{} marginals for {} axes",
                        marginals.len(),
                        axes.len()
                    )));
                }
                axes.iter()
                    .zip(marginals)
                    .map(|(axis, m)| marginal_values(axis, m))
                    .collect::<Result<_>>()?
            }
        };
        let n: usize = axes.iter().map(|a| a.count()).product();
        let mut weights = vec![1.0; n];
        for_each_index(&axes, |flat, idx| {
            weights[flat] = idx.iter().enumerate().map(|(k, &j)| marginals[k][j]).product();
        });
        let mut grid = ParameterGrid { axes, weights };
        let mass = grid.total_mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidPrior("prior has no mass on the grid".into()));
        }
        grid.weights.iter_mut().for_each(|w| *w /= mass);
        Ok(grid)
    }

    /// Wraps existing density values without renormalizing them.
    pub fn from_raw(axes: Vec<ParameterAxis>, weights: Vec<f64>) -> Result<Self> {
        check_axes(&axes)?;
        let n: usize = axes.iter().map(|a| a.count()).product();
        if weights.len() != n {
            return Err(Error::InvalidGrid(format!("expected {n} weights, got {}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidGrid("weights must be finite and non-negative".into()));
        }
        Ok(ParameterGrid { axes, weights })
    }

    /// Wraps arbitrary non-negative node values and rescales them to a density.
    pub fn from_unnormalized(axes: Vec<ParameterAxis>, weights: Vec<f64>) -> Result<Self> {
        let mut grid = Self::from_raw(axes, weights)?;
        let mass = grid.total_mass();
        if !(mass > 0.0) {
            return Err(Error::InvalidGrid("weights have zero mass".into()));
        }
        grid.weights.iter_mut().for_each(|w| *w /= mass);
        Ok(grid)
    }

    pub fn axes(&self) -> &[ParameterAxis] {
        &self.axes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Product of axis steps (volume of an interior node).
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step()).product()
    }

    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        let stride: usize = self.axes[axis + 1..].iter().map(|a| a.count()).product();
        (node / stride) % self.axes[axis].count()
    }

    /// Writes the parameter values of `node` into `out`.
    pub fn node_values(&self, node: usize, out: &mut [f64]) {
        let mut rem = node;
        for k in (0..self.axes.len()).rev() {
            let c = self.axes[k].count();
            out[k] = self.axes[k].value(rem % c);
            rem /= c;
        }
    }

    pub fn node_theta(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        self.node_values(node, &mut out);
        out
    }

    pub fn node_volume(&self, node: usize) -> f64 {
        let mut rem = node;
        let mut v = 1.0;
        for k in (0..self.axes.len()).rev() {
            let c = self.axes[k].count();
            v *= self.axes[k].quadrature_weight(rem % c);
            rem /= c;
        }
        v
    }

    /// Quadrature volume of every node.
    pub fn node_volumes(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| (0..a.count()).map(|i| a.quadrature_weight(i)).collect())
            .collect();
        let mut out = vec![0.0; self.len()];
        for_each_index(&self.axes, |flat, idx| {
            out[flat] = idx.iter().enumerate().map(|(k, &j)| per_axis[k][j]).product();
        });
        out
    }

    /// Probability mass carried by every node (density times volume).
    pub fn node_masses(&self) -> Vec<f64> {
        let mut m = self.node_volumes();
        m.iter_mut().zip(&self.weights).for_each(|(v, w)| *v *= w);
        m
    }

    /// Integral of the density over the grid support.
    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.node_masses().into_iter())
    }

    /// Marginal probability of observing `y` at design `xi`.
    pub fn marginal_evidence(&self, model: &dyn MeasurementModel, xi: &Design, y: Outcome) -> Result<f64> {
        let p1 = self.transmit_probabilities(model, xi)?;
        let masses = self.node_masses();
        let e1 = neumaier_sum(p1.iter().zip(&masses).map(|(p, m)| p * m));
        let e = match y {
            Outcome::Transmitted => e1,
            Outcome::Blocked => neumaier_sum(p1.iter().zip(&masses).map(|(p, m)| (1.0 - p) * m)),
        };
        Ok(e.clamp(0.0, 1.0))
    }

    /// Bayes update with one observed outcome. Returns the normalized
    /// posterior; `self` is left untouched.
    pub fn bayes_update(&self, model: &dyn MeasurementModel, xi: &Design, y: Outcome) -> Result<ParameterGrid> {
        let p1 = self.transmit_probabilities(model, xi)?;
        let volumes = self.node_volumes();
        let mut weights: Vec<f64> = self
            .weights
            .iter()
            .zip(&p1)
            .map(|(w, p)| w * y.probability(*p))
            .collect();
        let evidence = neumaier_sum(weights.iter().zip(&volumes).map(|(w, v)| w * v));
        if !(evidence >= MIN_EVIDENCE) {
            return Err(Error::DegenerateEvidence { outcome: y.bit(), evidence });
        }
        weights.iter_mut().for_each(|w| *w /= evidence);
        Ok(ParameterGrid { axes: self.axes.clone(), weights })
    }

    /// Posterior after a whole batch of outcomes, accumulated in log space.
    /// Equivalent to applying [`bayes_update`](Self::bayes_update) once per
    /// record, in any order.
    pub fn update_with_dataset(&self, model: &dyn MeasurementModel, data: &[(Design, Outcome)]) -> Result<ParameterGrid> {
        let n = self.len();
        let mut log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let mut p1 = vec![0.0; n];
        for (xi, y) in data {
            model.p_transmit_all(self, xi, &mut p1)?;
            for (lw, p) in log_w.iter_mut().zip(&p1) {
                *lw += y.probability(*p).ln();
            }
        }
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            let y = data.last().map(|d| d.1.bit()).unwrap_or(0);
            return Err(Error::DegenerateEvidence { outcome: y, evidence: 0.0 });
        }
        let weights: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
        ParameterGrid::from_unnormalized(self.axes.clone(), weights)
    }

    /// Differential entropy `-∫ p ln p` in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        let volumes = self.node_volumes();
        -neumaier_sum(
            self.weights
                .iter()
                .zip(&volumes)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, v)| w * w.ln() * v),
        )
    }

    /// Marginal masses along one axis (sum to 1).
    pub fn marginal_masses(&self, axis: usize) -> Vec<f64> {
        let masses = self.node_masses();
        let mut out = vec![0.0; self.axes[axis].count()];
        for_each_index(&self.axes, |flat, idx| out[idx[axis]] += masses[flat]);
        out
    }

    /// Per-axis means, standard deviations and central 95% credible intervals.
    pub fn summarize(&self) -> PosteriorSummary {
        let masses = self.node_masses();
        let mut marg: Vec<Vec<f64>> = self.axes.iter().map(|a| vec![0.0; a.count()]).collect();
        for_each_index(&self.axes, |flat, idx| {
            for (k, &j) in idx.iter().enumerate() {
                marg[k][j] += masses[flat];
            }
        });
        let axes = self
            .axes
            .iter()
            .zip(&marg)
            .map(|(axis, m)| summarize_axis(axis, m))
            .collect();
        PosteriorSummary {
            axes,
            interval_method: "central 95%, marginal CDF linearly interpolated between nodes".into(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn transmit_probabilities(&self, model: &dyn MeasurementModel, xi: &Design) -> Result<Vec<f64>> {
        let mut p1 = vec![0.0; self.len()];
        model.p_transmit_all(self, xi, &mut p1)?;
        Ok(p1)
    }
}

fn check_axes(axes: &[ParameterAxis]) -> Result<()> {
    if axes.is_empty() || axes.len() > 3 {
        return Err(Error::InvalidGrid(format!("grids have 1 to 3 axes, got {}", axes.len())));
    }
    for a in axes {
        // Axes built through serde or `new` are already valid; recheck cheaply.
        ParameterAxis::new(a.name.clone(), a.lo, a.hi, a.count)?;
    }
    Ok(())
}

fn marginal_values(axis: &ParameterAxis, m: &Marginal) -> Result<Vec<f64>> {
    match *m {
        Marginal::Uniform => Ok(vec![1.0; axis.count()]),
        Marginal::Gaussian { mean, std } => {
            if !(std > 0.0) || !std.is_finite() {
                return Err(Error::InvalidPrior(format!(
                    "gaussian std for axis `{}` must be positive, got {std}",
                    axis.name()
                )));
            }
            if !mean.is_finite() {
                return Err(Error::InvalidPrior(format!("gaussian mean for axis `{}` must be finite", axis.name())));
            }
            Ok(axis
                .values()
                .into_iter()
                .map(|x| {
                    let z = (x - mean) / std;
                    (-0.5 * z * z).exp()
                })
                .collect())
        }
    }
}

fn summarize_axis(axis: &ParameterAxis, masses: &[f64]) -> AxisSummary {
    let values = axis.values();
    let total: f64 = masses.iter().sum();
    let mean = masses.iter().zip(&values).map(|(m, v)| m * v).sum::<f64>() / total;
    let var = masses
        .iter()
        .zip(&values)
        .map(|(m, v)| m * (v - mean) * (v - mean))
        .sum::<f64>()
        / total;

    // Piecewise-linear density between nodes; CDF tabulated at nodes.
    let density: Vec<f64> = masses
        .iter()
        .enumerate()
        .map(|(j, m)| m / total / axis.quadrature_weight(j))
        .collect();
    let h = axis.step();
    let mut cdf = vec![0.0; values.len()];
    for j in 1..values.len() {
        cdf[j] = cdf[j - 1] + 0.5 * h * (density[j - 1] + density[j]);
    }
    let quantile = |p: f64| -> f64 {
        for j in 1..cdf.len() {
            if cdf[j] >= p {
                let span = cdf[j] - cdf[j - 1];
                let t = if span > 0.0 { (p - cdf[j - 1]) / span } else { 0.0 };
                return values[j - 1] + t * h;
            }
        }
        axis.hi()
    };
    AxisSummary {
        name: axis.name().to_string(),
        mean,
        std: var.max(0.0).sqrt(),
        ci95: (quantile(0.025), quantile(0.975)),
    }
}

/// Calls `f(flat_index, multi_index)` for every node in row-major order.
pub(crate) fn for_each_index(axes: &[ParameterAxis], mut f: impl FnMut(usize, &[usize])) {
    let counts: Vec<usize> = axes.iter().map(|a| a.count()).collect();
    let n: usize = counts.iter().product();
    let mut idx = vec![0usize; counts.len()];
    for flat in 0..n {
        f(flat, &idx);
        for k in (0..counts.len()).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Compensated summation.
pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
