//! Measurement models: probability that a single probe particle is detected
//! behind a structure, given the structure and beam parameters `theta` and the
//! probe position `xi`.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ParameterAxis, ParameterGrid};
use crate::imaging::Mask;
use crate::special::{binary_entropy, erfc, gauss_legendre_10, i0e, CompensatedSum};

/// Binary result of one probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Outcome {
    Blocked,
    Transmitted,
}

impl Outcome {
    pub fn bit(self) -> u8 {
        match self {
            Outcome::Blocked => 0,
            Outcome::Transmitted => 1,
        }
    }

    pub fn from_detected(detected: bool) -> Self {
        if detected {
            Outcome::Transmitted
        } else {
            Outcome::Blocked
        }
    }

    /// `p(y)` given the detection probability `p1 = p(1)`.
    #[inline]
    pub fn probability(self, p1: f64) -> f64 {
        match self {
            Outcome::Transmitted => p1,
            Outcome::Blocked => 1.0 - p1,
        }
    }

    pub const BOTH: [Outcome; 2] = [Outcome::Blocked, Outcome::Transmitted];
}

impl From<Outcome> for u8 {
    fn from(y: Outcome) -> u8 {
        y.bit()
    }
}

impl TryFrom<u8> for Outcome {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Outcome::Blocked),
            1 => Ok(Outcome::Transmitted),
            _ => Err(Error::Parse(format!("outcome must be 0 or 1, got {v}"))),
        }
    }
}

/// Probe position: an edge position (1D) or a beam position (2D), in nm.
///
/// Serialized as a plain array of coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub enum Design {
    Scalar(f64),
    Point([f64; 2]),
}

impl Design {
    pub fn coords(&self) -> &[f64] {
        match self {
            Design::Scalar(x) => std::slice::from_ref(x),
            Design::Point(p) => p,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords().len()
    }

    pub fn from_coords(c: &[f64]) -> Result<Self> {
        match *c {
            [x] => Ok(Design::Scalar(x)),
            [x, y] => Ok(Design::Point([x, y])),
            _ => Err(Error::InvalidArgument(format!("designs have 1 or 2 coordinates, got {}", c.len()))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }

    /// Lexicographic order on the coordinates.
    pub fn lex_cmp(&self, other: &Design) -> std::cmp::Ordering {
        for (a, b) in self.coords().iter().zip(other.coords()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        self.dim().cmp(&other.dim())
    }
}

impl From<Design> for Vec<f64> {
    fn from(d: Design) -> Vec<f64> {
        d.coords().to_vec()
    }
}

impl TryFrom<Vec<f64>> for Design {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Design::from_coords(&v)
    }
}

/// Likelihood `p(y | theta, xi)` for a binary transmission outcome.
///
/// Implementors provide the geometric transmission probability and the
/// detection efficiency; the detection probability is their product.
pub trait MeasurementModel: Send + Sync {
    /// Names of the parameters in `theta`, in grid-axis order.
    fn parameter_names(&self) -> Vec<String>;

    fn design_dim(&self) -> usize;

    /// Probability that the particle passes the structure.
    fn transmission(&self, theta: &[f64], xi: &Design) -> f64;

    /// Detector efficiency implied by `theta`.
    fn efficiency(&self, theta: &[f64]) -> f64;

    /// `p(1 | theta, xi)`.
    fn p_transmit(&self, theta: &[f64], xi: &Design) -> f64 {
        self.efficiency(theta) * self.transmission(theta, xi)
    }

    fn likelihood(&self, theta: &[f64], xi: &Design, y: Outcome) -> f64 {
        y.probability(self.p_transmit(theta, xi))
    }

    /// `p(1 | theta_i, xi)` for the listed grid nodes.
    fn p_transmit_batch(&self, grid: &ParameterGrid, nodes: &[usize], xi: &Design, out: &mut [f64]) -> Result<()> {
        self.check(grid, xi)?;
        let mut theta = vec![0.0; grid.dim()];
        for (o, &node) in out.iter_mut().zip(nodes) {
            grid.node_values(node, &mut theta);
            *o = self.p_transmit(&theta, xi);
        }
        check_probabilities(out)
    }

    /// `(Σ m_i p_i, Σ m_i h(p_i))` over `nodes` with masses `masses`, where
    /// `p_i = p(1 | theta_i, xi)` and `h` is the binary entropy in nats.
    fn outcome_entropy_sums(
        &self,
        grid: &ParameterGrid,
        nodes: &[usize],
        masses: &[f64],
        xi: &Design,
        scratch: &mut Vec<f64>,
    ) -> Result<(f64, f64)> {
        scratch.resize(nodes.len(), 0.0);
        self.p_transmit_batch(grid, nodes, xi, scratch)?;
        Ok(entropy_sums(scratch, masses))
    }

    /// `p(1 | theta_i, xi)` for every grid node.
    fn p_transmit_all(&self, grid: &ParameterGrid, xi: &Design, out: &mut [f64]) -> Result<()> {
        let nodes: Vec<usize> = (0..grid.len()).collect();
        self.p_transmit_batch(grid, &nodes, xi, out)
    }

    /// Checks that the grid and design are shaped for this model.
    fn check(&self, grid: &ParameterGrid, xi: &Design) -> Result<()> {
        let names = self.parameter_names();
        if grid.dim() != names.len() {
            return Err(Error::Model(format!(
                "model expects {} parameters ({}), grid has {} axes",
                names.len(),
                names.join(", "),
                grid.dim()
            )));
        }
        if xi.dim() != self.design_dim() {
            return Err(Error::Model(format!(
                "model expects {}-dimensional designs, got {}",
                self.design_dim(),
                xi.dim()
            )));
        }
        if !xi.is_finite() {
            return Err(Error::Model("design coordinates must be finite".into()));
        }
        Ok(())
    }

    /// Machine-readable description for run logs.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// `(Σ m_i p_i, Σ m_i h(p_i))`, compensated.
pub(crate) fn entropy_sums(p1: &[f64], masses: &[f64]) -> (f64, f64) {
    let (mut ev, mut h) = (CompensatedSum::default(), CompensatedSum::default());
    // Long runs of identical probabilities (fully open or fully blocked
    // nodes) are common; reuse the last entropy.
    let (mut last_p, mut last_h) = (0.0, 0.0);
    for (&p, &m) in p1.iter().zip(masses) {
        ev.add(p * m);
        if p != last_p {
            last_p = p;
            last_h = binary_entropy(p);
        }
        h.add(m * last_h);
    }
    (ev.value(), h.value())
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::Model("likelihood outside [0, 1]".into()))
    }
}

/// Knife-edge parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    pub x0: f64,
    pub sigma: f64,
    pub a: f64,
}

impl EdgeParams {
    pub fn new(x0: f64, sigma: f64, a: f64) -> Result<Self> {
        let p = EdgeParams { x0, sigma, a };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x0.is_finite() || !(self.sigma > 0.0) || !self.sigma.is_finite() || !(0.0..=1.0).contains(&self.a) {
            return Err(Error::InvalidArgument(format!("invalid edge parameters {self:?}")));
        }
        Ok(())
    }

    pub fn to_theta(&self) -> [f64; 3] {
        [self.x0, self.sigma, self.a]
    }
}

/// Circular-hole parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleParams {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl HoleParams {
    pub fn new(cx: f64, cy: f64, radius: f64) -> Result<Self> {
        let p = HoleParams { cx, cy, radius };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cx.is_finite() || !self.cy.is_finite() || !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid hole parameters {self:?}")));
        }
        Ok(())
    }

    pub fn to_theta(&self) -> [f64; 3] {
        [self.cx, self.cy, self.radius]
    }
}

/// Gaussian beam with fixed 1σ radius and detector efficiency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub sigma: f64,
    pub a: f64,
}

impl BeamSpec {
    pub fn new(sigma: f64, a: f64) -> Result<Self> {
        let b = BeamSpec { sigma, a };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() || !(0.0..=1.0).contains(&self.a) {
            return Err(Error::InvalidArgument(format!("invalid beam {self:?}")));
        }
        Ok(())
    }
}

/// Fraction of a Gaussian beam passing an edge at `xi` when the beam is
/// centered on `x0`; the blade covers `x < xi`.
#[inline]
pub fn edge_transmission(x0: f64, sigma: f64, xi: f64) -> f64 {
    0.5 * erfc((xi - x0) / (sigma * SQRT_2))
}

/// `p(y | x0, sigma, a, xi)` for the knife-edge measurement.
pub fn edge_likelihood(theta: &EdgeParams, xi: f64, y: Outcome) -> f64 {
    y.probability(theta.a * edge_transmission(theta.x0, theta.sigma, xi))
}

const DISC_CUTOFF: f64 = 40.0;
const DISC_SPAN: f64 = 12.0;
const DISC_PANEL: f64 = 0.5;

/// Mass of a symmetric 2D Gaussian (std `sigma`) whose center lies at
/// distance `d` from the center of a disc of radius `radius`.
///
/// Evaluates the Rician CDF `∫₀^R (r/σ²) exp(-(r²+d²)/2σ²) I0(rd/σ²) dr`
/// with panelled Gauss-Legendre quadrature on the scaled integrand.
pub fn disc_containment(d: f64, radius: f64, sigma: f64) -> Result<f64> {
    if !d.is_finite() || !radius.is_finite() || !sigma.is_finite() {
        return Err(Error::InvalidArgument("disc_containment needs finite arguments".into()));
    }
    if d < 0.0 || !(radius > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "disc_containment needs d >= 0, R > 0, sigma > 0 (got {d}, {radius}, {sigma})"
        )));
    }
    Ok(containment_scaled(d / sigma, radius / sigma))
}

/// Containment with distances in units of sigma.
fn containment_scaled(delta: f64, rho: f64) -> f64 {
    if delta - rho > DISC_CUTOFF {
        return 0.0;
    }
    if rho - delta > DISC_CUTOFF {
        return 1.0;
    }
    let lo = (delta - DISC_SPAN).max(0.0);
    let hi = rho.min(delta + DISC_SPAN);
    if hi <= lo {
        return if rho <= lo { 0.0 } else { 1.0 };
    }
    let rule = gauss_legendre_10();
    let panels = ((hi - lo) / DISC_PANEL).ceil().max(1.0) as usize;
    let width = (hi - lo) / panels as f64;
    let integrand = |u: f64| {
        let z = u - delta;
        u * (-0.5 * z * z).exp() * i0e(u * delta)
    };
    let total: f64 = (0..panels)
        .map(|k| {
            let a = lo + k as f64 * width;
            rule.integrate(a, a + width, integrand)
        })
        .sum();
    total.clamp(0.0, 1.0)
}

/// `p(y | hole, beam, xi)` for a 2D beam position probe.
pub fn hole_likelihood(theta: &HoleParams, beam: &BeamSpec, xi: [f64; 2], y: Outcome) -> Result<f64> {
    let d = (xi[0] - theta.cx).hypot(xi[1] - theta.cy);
    let c = disc_containment(d, theta.radius, beam.sigma)?;
    Ok(y.probability(beam.a * c))
}

/// Ideal (unblurred) transmission of a mask at a point.
pub fn mask_transmission(mask: &Mask, x: f64, y: f64) -> f64 {
    match mask {
        Mask::Edge { x0 } => indicator(x > *x0),
        Mask::Disc { cx, cy, radius } => indicator((x - cx).hypot(y - cy) <= *radius),
        Mask::Rect { x0, y0, x1, y1 } => indicator(x >= *x0 && x <= *x1 && y >= *y0 && y <= *y1),
        Mask::Bitmap(b) => b.transmission_at(x, y),
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Knife-edge model with `theta = (x0, sigma, a)` and scalar designs.
#[derive(Clone, Debug, Default)]
pub struct EdgeModel;

impl MeasurementModel for EdgeModel {
    fn parameter_names(&self) -> Vec<String> {
        vec!["x0".into(), "sigma".into(), "a".into()]
    }

    fn design_dim(&self) -> usize {
        1
    }

    fn transmission(&self, theta: &[f64], xi: &Design) -> f64 {
        edge_transmission(theta[0], theta[1], xi.coords()[0])
    }

    fn efficiency(&self, theta: &[f64]) -> f64 {
        theta[2]
    }

    fn p_transmit_batch(&self, grid: &ParameterGrid, nodes: &[usize], xi: &Design, out: &mut [f64]) -> Result<()> {
        self.check(grid, xi)?;
        let axes = grid.axes();
        let (n_sigma, n_a) = (axes[1].count(), axes[2].count());
        let x = xi.coords()[0];
        let a_values = axes[2].values();
        // Nodes sharing (x0, sigma) are contiguous; recompute q only when
        // leaving the current run.
        let mut start = usize::MAX;
        let mut q = 0.0;
        for (o, &node) in out.iter_mut().zip(nodes) {
            if node < start || node - start >= n_a {
                let pair = node / n_a;
                start = pair * n_a;
                q = edge_transmission(axes[0].value(pair / n_sigma), axes[1].value(pair % n_sigma), x);
            }
            *o = a_values[node - start] * q;
        }
        check_probabilities(out)
    }

    fn outcome_entropy_sums(
        &self,
        grid: &ParameterGrid,
        nodes: &[usize],
        masses: &[f64],
        xi: &Design,
        _scratch: &mut Vec<f64>,
    ) -> Result<(f64, f64)> {
        self.check(grid, xi)?;
        let axes = grid.axes();
        let (n_sigma, n_a) = (axes[1].count(), axes[2].count());
        let x = xi.coords()[0];
        let a_values = axes[2].values();
        if a_values.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Model("likelihood outside [0, 1]".into()));
        }
        let ln_a: Vec<f64> = a_values.iter().map(|a| a.ln()).collect();
        // p = a q, so ln p = ln a + ln q with ln q shared along the a axis.
        let (mut ev, mut h) = (CompensatedSum::default(), CompensatedSum::default());
        let mut start = usize::MAX;
        let (mut q, mut ln_q) = (0.0, 0.0);
        for (&node, &m) in nodes.iter().zip(masses) {
            if node < start || node - start >= n_a {
                let pair = node / n_a;
                start = pair * n_a;
                q = edge_transmission(axes[0].value(pair / n_sigma), axes[1].value(pair % n_sigma), x);
                ln_q = q.ln();
            }
            let k = node - start;
            let p = a_values[k] * q;
            ev.add(p * m);
            if p > 0.0 && p < 1.0 {
                h.add(-m * (p * (ln_a[k] + ln_q) + (1.0 - p) * (1.0 - p).ln()));
            }
        }
        Ok((ev.value(), h.value()))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "edge", "parameters": ["x0", "sigma", "a"] })
    }
}

/// Circular hole with `theta = (cx, cy, radius)`, 2D designs and a beam of
/// known width and detector efficiency.
///
/// Grid evaluations use per-radius lookup tables of the containment
/// probability (cubic interpolation, absolute error below 1e-8); single
/// evaluations use direct quadrature.
/// Per-radius tables keyed by the radius axis (lo bits, hi bits, count).
type TableCache = Mutex<HashMap<(u64, u64, usize), Arc<Vec<ContainmentTable>>>>;

#[derive(Clone, Debug)]
pub struct HoleModel {
    beam: BeamSpec,
    tables: Arc<TableCache>,
}

impl HoleModel {
    pub fn new(beam: BeamSpec) -> Result<Self> {
        beam.validate()?;
        Ok(HoleModel { beam, tables: Arc::new(Mutex::new(HashMap::new())) })
    }

    pub fn beam(&self) -> &BeamSpec {
        &self.beam
    }

    /// Containment tables for every node of a radius axis.
    fn tables(&self, axis: &ParameterAxis) -> Arc<Vec<ContainmentTable>> {
        let key = (axis.lo().to_bits(), axis.hi().to_bits(), axis.count());
        let mut cache = self.tables.lock().expect("containment cache poisoned");
        cache
            .entry(key)
            .or_insert_with(|| {
                Arc::new(axis.values().into_iter().map(|r| ContainmentTable::build(r, self.beam.sigma)).collect())
            })
            .clone()
    }
}

impl MeasurementModel for HoleModel {
    fn parameter_names(&self) -> Vec<String> {
        vec!["cx".into(), "cy".into(), "radius".into()]
    }

    fn design_dim(&self) -> usize {
        2
    }

    fn transmission(&self, theta: &[f64], xi: &Design) -> f64 {
        let c = xi.coords();
        let d = (c[0] - theta[0]).hypot(c[1] - theta[1]);
        containment_scaled(d / self.beam.sigma, theta[2] / self.beam.sigma)
    }

    fn efficiency(&self, _theta: &[f64]) -> f64 {
        self.beam.a
    }

    fn p_transmit_batch(&self, grid: &ParameterGrid, nodes: &[usize], xi: &Design, out: &mut [f64]) -> Result<()> {
        self.check(grid, xi)?;
        let axes = grid.axes();
        if axes[2].lo() <= 0.0 {
            return Err(Error::Model("hole radius axis must be positive".into()));
        }
        let (n_y, n_r) = (axes[1].count(), axes[2].count());
        let tables = self.tables(&axes[2]);
        let c = xi.coords();
        let a = self.beam.a;
        let mut start = usize::MAX;
        let mut d = 0.0;
        for (o, &node) in out.iter_mut().zip(nodes) {
            if node < start || node - start >= n_r {
                let pair = node / n_r;
                start = pair * n_r;
                d = (c[0] - axes[0].value(pair / n_y)).hypot(c[1] - axes[1].value(pair % n_y));
            }
            *o = a * tables[node - start].eval(d);
        }
        check_probabilities(out)
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "hole",
            "parameters": ["cx", "cy", "radius"],
            "beam": { "sigma": self.beam.sigma, "a": self.beam.a },
        })
    }
}

/// Containment probability as a function of center distance for one radius,
/// stored as one cubic per table interval.
#[derive(Debug)]
struct ContainmentTable {
    d_lo: f64,
    d_hi: f64,
    inv_step: f64,
    cubics: Vec<[f64; 4]>,
}

const TABLE_HALF_WIDTH: f64 = 10.0;
const TABLE_POINTS_PER_SIGMA: f64 = 64.0;

impl ContainmentTable {
    fn build(radius: f64, sigma: f64) -> Self {
        let d_lo = (radius - TABLE_HALF_WIDTH * sigma).max(0.0);
        let d_hi = radius + TABLE_HALF_WIDTH * sigma;
        let step = sigma / TABLE_POINTS_PER_SIGMA;
        let n = ((d_hi - d_lo) / step).ceil() as usize + 1;
        let values: Vec<f64> = (0..n)
            .map(|i| containment_scaled((d_lo + i as f64 * step) / sigma, radius / sigma))
            .collect();
        // Four-point Lagrange interpolation through nodes i-1..=i+2, written
        // as a polynomial in the offset from the interval start j.
        let cubics = (0..n - 1)
            .map(|j| {
                let i = j.clamp(1, n - 3);
                let (p0, p1, p2, p3) = (values[i - 1], values[i], values[i + 1], values[i + 2]);
                let c = [
                    p1,
                    -p0 / 3.0 - p1 / 2.0 + p2 - p3 / 6.0,
                    p0 / 2.0 - p1 + p2 / 2.0,
                    -p0 / 6.0 + p1 / 2.0 - p2 / 2.0 + p3 / 6.0,
                ];
                let s = j as f64 - i as f64;
                [
                    c[0] + s * (c[1] + s * (c[2] + s * c[3])),
                    c[1] + s * (2.0 * c[2] + 3.0 * s * c[3]),
                    c[2] + 3.0 * s * c[3],
                    c[3],
                ]
            })
            .collect();
        ContainmentTable { d_lo, d_hi: d_lo + (n - 1) as f64 * step, inv_step: 1.0 / step, cubics }
    }

    #[inline]
    fn eval(&self, d: f64) -> f64 {
        if d < self.d_lo {
            // Only reachable when d_lo > 0, i.e. deep inside the disc.
            return 1.0;
        }
        if d >= self.d_hi {
            return 0.0;
        }
        let t = (d - self.d_lo) * self.inv_step;
        let j = (t as usize).min(self.cubics.len() - 1);
        let g = t - j as f64;
        let c = &self.cubics[j];
        (c[0] + g * (c[1] + g * (c[2] + g * c[3]))).clamp(0.0, 1.0)
    }
}
