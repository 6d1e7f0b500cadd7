//! Expected information gain, recursive probe-position search and the
//! adaptive measurement loop.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{neumaier_sum, ParameterGrid, PosteriorSummary};
use crate::models::{entropy_sums, Design, MeasurementModel, Outcome};
use crate::rng::{self, SimRng};
use crate::source::{sample_probe, DetectorSpec, SourceSpec};

/// Outcomes whose evidence falls below this contribute nothing to the
/// expected utility.
pub const MIN_OUTCOME_EVIDENCE: f64 = 1e-15;

/// Total posterior mass that may be skipped (lightest nodes first) when
/// scanning candidate designs.
pub const PRUNE_MASS: f64 = 1e-10;

pub use crate::special::binary_entropy;

/// Expected entropy reduction of the parameter density from one probe at `xi`.
///
/// Computed as the mutual information between parameters and outcome,
/// `h(p(1|xi)) - Σ_i m_i h(p(1|θ_i, xi))`, which equals the average over
/// outcomes of prior entropy minus posterior entropy.
pub fn utility(grid: &ParameterGrid, model: &dyn MeasurementModel, xi: &Design) -> Result<f64> {
    let mut p1 = vec![0.0; grid.len()];
    model.p_transmit_all(grid, xi, &mut p1)?;
    let masses = grid.node_masses();
    mutual_information(&p1, &masses)
}

/// Expected utility evaluated literally: posterior grids for both outcomes
/// and the difference of their entropies from the prior entropy.
pub fn utility_by_entropy_difference(grid: &ParameterGrid, model: &dyn MeasurementModel, xi: &Design) -> Result<f64> {
    let h0 = grid.entropy();
    let mut total = 0.0;
    let mut any = false;
    for y in Outcome::BOTH {
        let evidence = grid.marginal_evidence(model, xi, y)?;
        if evidence < MIN_OUTCOME_EVIDENCE {
            continue;
        }
        any = true;
        let post = grid.bayes_update(model, xi, y)?;
        total += evidence * (h0 - post.entropy());
    }
    if !any {
        return Err(Error::DegenerateEvidence { outcome: 1, evidence: 0.0 });
    }
    Ok(total)
}

fn mutual_information(p1: &[f64], masses: &[f64]) -> Result<f64> {
    let (ev, h) = entropy_sums(p1, masses);
    finish_information(neumaier_sum(masses.iter().copied()), ev, h)
}

fn finish_information(total: f64, ev: f64, h: f64) -> Result<f64> {
    let evidence = ev / total;
    let cond = h / total;
    if !evidence.is_finite() || !cond.is_finite() {
        return Err(Error::Model("non-finite likelihood".into()));
    }
    if evidence < MIN_OUTCOME_EVIDENCE || 1.0 - evidence < MIN_OUTCOME_EVIDENCE {
        // One outcome is (numerically) certain: nothing to learn.
        return Ok(0.0);
    }
    Ok(binary_entropy(evidence.clamp(0.0, 1.0)) - cond)
}

/// Active-node view of a grid for evaluating many candidate designs.
pub struct UtilityContext<'a> {
    grid: &'a ParameterGrid,
    nodes: Vec<usize>,
    masses: Vec<f64>,
    total: f64,
}

impl<'a> UtilityContext<'a> {
    pub fn new(grid: &'a ParameterGrid) -> Self {
        Self::with_prune_mass(grid, PRUNE_MASS)
    }

    /// Skips the lightest nodes whose combined mass is at most `prune`
    /// times the total.
    pub fn with_prune_mass(grid: &'a ParameterGrid, prune: f64) -> Self {
        let all = grid.node_masses();
        let total = neumaier_sum(all.iter().copied());
        let mut order: Vec<usize> = (0..all.len()).collect();
        order.sort_unstable_by(|&i, &j| all[i].total_cmp(&all[j]));
        let budget = prune.max(0.0) * total;
        let mut keep = vec![true; all.len()];
        let mut dropped = 0.0;
        for &i in &order {
            if all[i] > 0.0 && dropped + all[i] > budget {
                break;
            }
            dropped += all[i];
            keep[i] = false;
        }
        let (nodes, masses): (Vec<usize>, Vec<f64>) =
            all.into_iter().enumerate().filter(|(i, _)| keep[*i]).unzip();
        let total = neumaier_sum(masses.iter().copied());
        UtilityContext { grid, nodes, masses, total }
    }

    pub fn active_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn utility(&self, model: &dyn MeasurementModel, xi: &Design, scratch: &mut Vec<f64>) -> Result<f64> {
        let (ev, h) = model.outcome_entropy_sums(self.grid, &self.nodes, &self.masses, xi, scratch)?;
        finish_information(self.total, ev, h)
    }
}

/// Search region and resolution for [`optimize_design`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignWindow {
    /// Per-dimension `[lo, hi]` in nm.
    pub bounds: Vec<(f64, f64)>,
    #[serde(default = "default_candidates")]
    pub candidates_per_level: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_candidates() -> usize {
    21
}

fn default_levels() -> usize {
    5
}

impl DesignWindow {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let w = DesignWindow { bounds, candidates_per_level: default_candidates(), levels: default_levels() };
        w.validate()?;
        Ok(w)
    }

    pub fn with_resolution(mut self, candidates_per_level: usize, levels: usize) -> Result<Self> {
        self.candidates_per_level = candidates_per_level;
        self.levels = levels;
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() || self.bounds.len() > 2 {
            return Err(Error::InvalidWindow(format!("windows have 1 or 2 dimensions, got {}", self.bounds.len())));
        }
        for (k, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::InvalidWindow(format!("dimension {k}: need finite lo < hi, got [{lo}, {hi}]")));
            }
        }
        if self.candidates_per_level < 3 {
            return Err(Error::InvalidWindow("candidates_per_level must be >= 3".into()));
        }
        if self.levels < 1 {
            return Err(Error::InvalidWindow("levels must be >= 1".into()));
        }
        Ok(())
    }

    pub fn contains(&self, xi: &Design) -> bool {
        xi.dim() == self.dim() && xi.coords().iter().zip(&self.bounds).all(|(x, (lo, hi))| x >= lo && x <= hi)
    }
}

/// Utility as a function of the candidate design, for search.
pub trait UtilityLandscape: Sync {
    fn eval(&self, xi: &Design, scratch: &mut Vec<f64>) -> Result<f64>;
}

struct GridLandscape<'a> {
    ctx: UtilityContext<'a>,
    model: &'a dyn MeasurementModel,
}

impl UtilityLandscape for GridLandscape<'_> {
    fn eval(&self, xi: &Design, scratch: &mut Vec<f64>) -> Result<f64> {
        self.ctx.utility(self.model, xi, scratch)
    }
}

impl<F> UtilityLandscape for F
where
    F: Fn(&Design) -> f64 + Sync,
{
    fn eval(&self, xi: &Design, _scratch: &mut Vec<f64>) -> Result<f64> {
        Ok(self(xi))
    }
}

/// Recursive lattice search for the design with the largest expected utility.
pub fn optimize_design(grid: &ParameterGrid, model: &dyn MeasurementModel, window: &DesignWindow) -> Result<(Design, f64)> {
    window.validate()?;
    if window.dim() != model.design_dim() {
        return Err(Error::InvalidWindow(format!(
            "window has {} dimensions, model expects {}",
            window.dim(),
            model.design_dim()
        )));
    }
    let landscape = GridLandscape { ctx: UtilityContext::new(grid), model };
    maximize_landscape(&landscape, window)
}

/// The search behind [`optimize_design`] on an arbitrary landscape.
///
/// Level one evaluates a `K^dim` lattice over the window. Each further level
/// re-centers on the incumbent and spans two lattice spacings per dimension,
/// clamped to the window. Ties go to the lexicographically smallest design.
pub fn maximize_landscape(landscape: &dyn UtilityLandscape, window: &DesignWindow) -> Result<(Design, f64)> {
    window.validate()?;
    let k = window.candidates_per_level;
    let mut bounds = window.bounds.clone();
    let mut best: Option<(Design, f64)> = None;
    for _ in 0..window.levels {
        let axes: Vec<Vec<f64>> = bounds.iter().map(|&(lo, hi)| linspace(lo, hi, k)).collect();
        let candidates = lattice(&axes)?;
        let utilities: Vec<Result<f64>> = candidates
            .par_iter()
            .map_init(Vec::new, |scratch, xi| landscape.eval(xi, scratch))
            .collect();
        for (xi, u) in candidates.into_iter().zip(utilities) {
            let u = u?;
            let better = match &best {
                None => true,
                Some((bxi, bu)) => u > *bu || (u == *bu && xi.lex_cmp(bxi).is_lt()),
            };
            if better {
                best = Some((xi, u));
            }
        }
        let (center, _) = best.as_ref().expect("at least one candidate");
        bounds = bounds
            .iter()
            .zip(&window.bounds)
            .zip(center.coords())
            .map(|((&(lo, hi), &(wlo, whi)), &c)| {
                let spacing = (hi - lo) / (k - 1) as f64;
                ((c - spacing).max(wlo), (c + spacing).min(whi))
            })
            .collect();
    }
    Ok(best.expect("levels >= 1"))
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    (0..k)
        .map(|i| if i + 1 == k { hi } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 })
        .collect()
}

fn lattice(axes: &[Vec<f64>]) -> Result<Vec<Design>> {
    match axes {
        [xs] => Ok(xs.iter().map(|&x| Design::Scalar(x)).collect()),
        [xs, ys] => Ok(xs.iter().flat_map(|&x| ys.iter().map(move |&y| Design::Point([x, y]))).collect()),
        _ => Err(Error::InvalidWindow("unsupported window dimension".into())),
    }
}

/// When to end an adaptive run: after `max_probes`, or as soon as every
/// listed parameter's posterior std is at or below its target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_probes: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub target_std: BTreeMap<String, f64>,
}

impl StopRule {
    pub fn max_probes(n: usize) -> Self {
        StopRule { max_probes: n, target_std: BTreeMap::new() }
    }

    pub fn validate(&self, parameter_names: &[String]) -> Result<()> {
        if self.max_probes < 1 {
            return Err(Error::InvalidArgument("max_probes must be >= 1".into()));
        }
        for (name, t) in &self.target_std {
            if !parameter_names.iter().any(|p| p == name) {
                return Err(Error::InvalidArgument(format!("target_std names unknown parameter `{name}`")));
            }
            if !(*t > 0.0) {
                return Err(Error::InvalidArgument(format!("target_std for `{name}` must be > 0")));
            }
        }
        Ok(())
    }

    fn reached(&self, probes: usize, summary: &PosteriorSummary) -> bool {
        if probes >= self.max_probes {
            return true;
        }
        !self.target_std.is_empty()
            && self
                .target_std
                .iter()
                .all(|(name, t)| summary.axis(name).is_some_and(|a| a.std <= *t))
    }
}

/// Produces the outcome of a probe at a design: a simulator or an instrument.
pub trait ProbeSource {
    fn probe(&mut self, xi: &Design) -> Result<Outcome>;
}

/// Simulated sample with known parameters.
///
/// Each probe emits particles from `source`; each transmits with the model's
/// geometric transmission and is detected with the model's efficiency.
pub struct SimulatedTruth<'m> {
    model: &'m dyn MeasurementModel,
    theta: Vec<f64>,
    source: SourceSpec,
    dark_prob: f64,
    rng: SimRng,
}

impl<'m> SimulatedTruth<'m> {
    pub fn new(model: &'m dyn MeasurementModel, theta: &[f64], source: SourceSpec, dark_prob: f64, seed: u64) -> Result<Self> {
        if theta.len() != model.parameter_names().len() {
            return Err(Error::InvalidArgument("truth has the wrong number of parameters".into()));
        }
        source.validate()?;
        DetectorSpec::new(model.efficiency(theta), dark_prob)?;
        Ok(SimulatedTruth { model, theta: theta.to_vec(), source, dark_prob, rng: rng::stream(seed, 0) })
    }
}

impl ProbeSource for SimulatedTruth<'_> {
    fn probe(&mut self, xi: &Design) -> Result<Outcome> {
        let det = DetectorSpec { efficiency: self.model.efficiency(&self.theta), dark_prob: self.dark_prob };
        let t = self.model.transmission(&self.theta, xi);
        Ok(Outcome::from_detected(sample_probe(&self.source, &det, t, &mut self.rng).y()))
    }
}

impl<F: FnMut(&Design) -> Outcome> ProbeSource for F {
    fn probe(&mut self, xi: &Design) -> Result<Outcome> {
        Ok(self(xi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub seed: u64,
    pub model: serde_json::Value,
    pub prior: serde_json::Value,
    pub window: DesignWindow,
    pub stop: StopRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// One adaptive probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub i: usize,
    pub xi: Design,
    pub u: f64,
    pub y: Outcome,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: RunHeader,
    pub records: Vec<ProbeRecord>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: RunHeader,
}

impl RunLog {
    /// JSON Lines: a header line, then one line per probe.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &HeaderLine { header: self.header.clone() })?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Parse("empty run log".into()))??;
        let header: HeaderLine = serde_json::from_str(&first)?;
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ProbeRecord = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))?;
            records.push(rec);
        }
        Ok(RunLog { header: header.header, records })
    }

    /// `(xi, y)` pairs in probe order.
    pub fn dataset(&self) -> Vec<(Design, Outcome)> {
        self.records.iter().map(|r| (r.xi, r.y)).collect()
    }
}

#[derive(Debug)]
pub struct ExperimentRun {
    pub posterior: ParameterGrid,
    pub log: RunLog,
}

/// A failed run: the error, the iteration it happened in, and the log so far.
#[derive(Debug, thiserror::Error)]
#[error("iteration {iteration}: {source}")]
pub struct ExperimentError {
    pub iteration: usize,
    pub source: Error,
    pub log: Box<RunLog>,
}

/// Adaptive loop: choose the most informative design, probe, update, repeat
/// until the stop rule fires.
pub fn run_experiment(
    prior: &ParameterGrid,
    model: &dyn MeasurementModel,
    window: &DesignWindow,
    stop: &StopRule,
    truth: &mut dyn ProbeSource,
    seed: u64,
) -> std::result::Result<ExperimentRun, ExperimentError> {
    let header = RunHeader {
        seed,
        model: model.describe(),
        prior: serde_json::json!({ "axes": prior.axes() }),
        window: window.clone(),
        stop: stop.clone(),
        truth: None,
        config: None,
    };
    let mut log = RunLog { header, records: Vec::new() };
    let fail = |iteration: usize, source: Error, log: &RunLog| ExperimentError { iteration, source, log: Box::new(log.clone()) };
    if let Err(e) = window.validate().and_then(|_| stop.validate(&model.parameter_names())) {
        return Err(fail(0, e, &log));
    }

    let mut grid = prior.clone();
    let mut i = 0;
    loop {
        i += 1;
        let step = optimize_design(&grid, model, window).and_then(|(xi, u)| {
            let y = truth.probe(&xi)?;
            let post = grid.bayes_update(model, &xi, y)?;
            Ok((xi, u, y, post))
        });
        let (xi, u, y, post) = match step {
            Ok(s) => s,
            Err(e) => return Err(fail(i, e, &log)),
        };
        grid = post;
        let summary = grid.summarize();
        log.records.push(ProbeRecord { i, xi, u, y, mean: summary.means(), std: summary.stds() });
        if stop.reached(i, &summary) {
            break;
        }
    }
    Ok(ExperimentRun { posterior: grid, log })
}

/// [`run_experiment`] against a simulated sample seeded from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_experiment(
    prior: &ParameterGrid,
    model: &dyn MeasurementModel,
    window: &DesignWindow,
    stop: &StopRule,
    truth_theta: &[f64],
    source: SourceSpec,
    dark_prob: f64,
    seed: u64,
) -> std::result::Result<ExperimentRun, ExperimentError> {
    let mut truth = SimulatedTruth::new(model, truth_theta, source, dark_prob, seed).map_err(|e| ExperimentError {
        iteration: 0,
        source: e,
        log: Box::new(RunLog {
            header: RunHeader {
                seed,
                model: model.describe(),
                prior: serde_json::json!({ "axes": prior.axes() }),
                window: window.clone(),
                stop: stop.clone(),
                truth: None,
                config: None,
            },
            records: Vec::new(),
        }),
    })?;
    let mut run = run_experiment(prior, model, window, stop, &mut truth, seed)?;
    run.log.header.truth = Some(serde_json::json!(truth_theta));
    Ok(run)
}
