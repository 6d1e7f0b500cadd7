//! Run configurations: loading, `--set` overrides and validation into
//! executable plans.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::schema;
use crate::design::{DesignWindow, RunLog, StopRule};
use crate::grid::{make_grid, Marginal, ParameterAxis, ParameterGrid, Prior};
use crate::imaging::{Bitmap, ImageFormat, Mask, ScanConfig};
use crate::models::{BeamSpec, EdgeModel, HoleModel, MeasurementModel};
use crate::source::{DetectorSpec, SourceKind, SourceSpec};

/// Largest grid a config may request.
pub const MAX_GRID_NODES: usize = 50_000_000;

/// Largest raster a config may request, pixels times frames.
pub const MAX_RASTER_PIXELS: usize = 100_000_000;

/// One problem with a config, located by its dotted field path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation { path: path.into(), message: message.into() }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Reads a JSON config; `-` reads standard input.
pub fn read_config(path: &Path) -> Result<Value, Violation> {
    let text = if path == Path::new("-") {
        std::io::read_to_string(std::io::stdin())
    } else {
        fs::read_to_string(path)
    }
    .map_err(|e| Violation::new("", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Violation::new("", format!("invalid JSON in {}: {e}", path.display())))
}

/// Applies `path=value` overrides. `value` is parsed as JSON when possible
/// and taken as a string otherwise; numeric segments index arrays.
pub fn apply_overrides(config: &mut Value, overrides: &[String]) -> Result<(), Violation> {
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| Violation::new("", format!("override `{o}` is not of the form path=value")))?;
        if path.is_empty() {
            return Err(Violation::new("", format!("override `{o}` has an empty path")));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(config, path, value)?;
    }
    Ok(())
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), Violation> {
    let segments: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for (k, seg) in segments.iter().enumerate() {
        let last = k + 1 == segments.len();
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Violation::new(path, format!("`{seg}` does not index an array")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Violation::new(path, format!("index {idx} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Violation::new(path, format!("`{seg}` descends into a scalar"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

#[derive(Clone, Debug, Deserialize)]
struct PriorConfig {
    kind: String,
    mean: Option<f64>,
    std: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
struct AxisConfig {
    name: String,
    lo: f64,
    hi: f64,
    count: u64,
    prior: Option<PriorConfig>,
}

#[derive(Clone, Debug, Deserialize)]
struct GridConfig {
    axes: Vec<AxisConfig>,
}

#[derive(Clone, Debug, Deserialize)]
struct WindowConfig {
    bounds: Vec<[f64; 2]>,
    candidates_per_level: Option<u64>,
    levels: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
struct StopConfig {
    max_probes: u64,
    target_std: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, Deserialize)]
struct SourceConfig {
    kind: String,
    n: Option<u64>,
    lambda: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
struct DetectorConfig {
    efficiency: Option<f64>,
    dark_prob: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
struct AdaptiveConfig {
    seed: u64,
    grid: GridConfig,
    design: WindowConfig,
    stop: StopConfig,
    truth: Vec<f64>,
    source: Option<SourceConfig>,
    detector: Option<DetectorConfig>,
    save_posterior: Option<bool>,
    beam: Option<BeamSpec>,
}

#[derive(Clone, Debug, Deserialize)]
struct MaskConfig {
    kind: String,
    x0: Option<f64>,
    cx: Option<f64>,
    cy: Option<f64>,
    radius: Option<f64>,
    y0: Option<f64>,
    x1: Option<f64>,
    y1: Option<f64>,
    width: Option<u64>,
    height: Option<u64>,
    pitch: Option<f64>,
    maxval: Option<u64>,
    levels: Option<Vec<u64>>,
}

#[derive(Clone, Debug, Deserialize)]
struct ScanInput {
    origin: [f64; 2],
    pixel_size: [f64; 2],
    pixels: [u64; 2],
    ions_per_pixel: Option<u64>,
    beam_sigma: Option<f64>,
    beam_offsets: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
struct RasterInput {
    seed: u64,
    mask: MaskConfig,
    scan: ScanInput,
    source: Option<SourceConfig>,
    detector: Option<DetectorConfig>,
    frames: Option<u64>,
    format: Option<String>,
    snr_region: Option<[u64; 4]>,
}

#[derive(Clone, Debug, Deserialize)]
struct SnrInput {
    source_kind: Option<String>,
    efficiencies: Vec<f64>,
    n_range: [u64; 2],
}

#[derive(Clone, Debug, Deserialize)]
struct FitInput {
    input: String,
    theta0: Option<Vec<f64>>,
    bounds: Option<Vec<[f64; 2]>>,
    restarts: Option<u64>,
    tolerance: Option<f64>,
}

/// Which model an adaptive run uses.
#[derive(Clone, Debug)]
pub enum ModelSpec {
    Edge,
    Hole(BeamSpec),
}

impl ModelSpec {
    pub fn build(&self) -> crate::Result<Box<dyn MeasurementModel>> {
        Ok(match self {
            ModelSpec::Edge => Box::new(EdgeModel),
            ModelSpec::Hole(beam) => Box::new(HoleModel::new(*beam)?),
        })
    }

    fn parameter_names(&self) -> [&'static str; 3] {
        match self {
            ModelSpec::Edge => ["x0", "sigma", "a"],
            ModelSpec::Hole(_) => ["cx", "cy", "radius"],
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdaptivePlan {
    pub seed: u64,
    pub model: ModelSpec,
    pub prior: ParameterGrid,
    pub window: DesignWindow,
    pub stop: StopRule,
    pub truth: Vec<f64>,
    pub source: SourceSpec,
    pub dark_prob: f64,
    pub save_posterior: bool,
}

#[derive(Clone, Debug)]
pub struct RasterPlan {
    pub seed: u64,
    pub mask: Mask,
    pub scan: ScanConfig,
    pub source: SourceSpec,
    pub detector: DetectorSpec,
    pub frames: usize,
    pub format: ImageFormat,
    /// Inclusive pixel box `[ix0, iy0, ix1, iy1]`.
    pub snr_region: Option<[usize; 4]>,
}

#[derive(Clone, Debug)]
pub struct SnrPlan {
    pub kinds: Vec<SourceKind>,
    pub efficiencies: Vec<f64>,
    pub n_range: (u32, u32),
}

#[derive(Clone, Debug)]
pub struct FitPlan {
    pub input: PathBuf,
    pub log: RunLog,
    pub model: ModelSpec,
    pub theta0: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub restarts: usize,
    pub tolerance: f64,
}

#[derive(Clone, Debug)]
pub enum Plan {
    ProfileEdge(AdaptivePlan),
    LocateHole(AdaptivePlan),
    Raster(RasterPlan),
    Snr(SnrPlan),
    Fit(FitPlan),
}

/// A validated configuration ready to run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub mode: String,
    pub plan: Plan,
    /// Effective config after overrides, without `output_dir`.
    pub echo: Value,
    pub output_dir: Option<PathBuf>,
}

/// Validates `config` for `mode` (or the config's own `mode` when `None`)
/// and turns it into a plan. All violations found are returned.
pub fn prepare(config: &Value, mode: Option<&str>) -> Result<Prepared, Vec<Violation>> {
    let declared = config.get("mode").and_then(Value::as_str);
    let mode = match (mode, declared) {
        (Some(m), Some(d)) if m != d => {
            return Err(vec![Violation::new("mode", format!("config is for `{d}`, not `{m}`"))]);
        }
        (Some(m), _) => m,
        (None, Some(d)) if schema::MODES.contains(&d) => d,
        (None, Some(d)) => {
            return Err(vec![Violation::new("mode", format!("unknown mode `{d}`; expected one of {}", schema::MODES.join(", ")))]);
        }
        (None, None) => return Err(vec![Violation::new("mode", "missing required field")]),
    };
    let mut violations = schema::check_structure(mode, config);
    if !violations.is_empty() {
        return Err(violations);
    }
    let plan = match mode {
        "profile-edge" => decode::<AdaptiveConfig>(config).and_then(|c| adaptive_plan(c, ModelSpec::Edge)).map(Plan::ProfileEdge),
        "locate-hole" => decode::<AdaptiveConfig>(config)
            .and_then(|c| {
                let beam = c.beam.expect("structure check requires beam");
                adaptive_plan(c, ModelSpec::Hole(beam))
            })
            .map(Plan::LocateHole),
        "raster" => decode::<RasterInput>(config).and_then(raster_plan).map(Plan::Raster),
        "snr" => decode::<SnrInput>(config).and_then(snr_plan).map(Plan::Snr),
        "fit" => decode::<FitInput>(config).and_then(fit_plan).map(Plan::Fit),
        other => Err(vec![Violation::new("mode", format!("unknown mode `{other}`"))]),
    };
    match plan {
        Ok(plan) => {
            let mut echo = config.clone();
            if let Some(m) = echo.as_object_mut() {
                m.remove("output_dir");
            }
            let output_dir = config.get("output_dir").and_then(Value::as_str).map(PathBuf::from);
            Ok(Prepared { mode: mode.to_string(), plan, echo, output_dir })
        }
        Err(v) => {
            violations.extend(v);
            Err(violations)
        }
    }
}

fn decode<T: serde::de::DeserializeOwned>(config: &Value) -> Result<T, Vec<Violation>> {
    let mut stripped = config.clone();
    if let Some(m) = stripped.as_object_mut() {
        m.remove("mode");
        m.remove("output_dir");
    }
    serde_json::from_value(stripped).map_err(|e| vec![Violation::new("", e.to_string())])
}

/// Collects violations for one plan.
#[derive(Default)]
struct Checker {
    found: Vec<Violation>,
}

impl Checker {
    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) -> bool {
        if !ok {
            self.found.push(Violation::new(path, message));
        }
        ok
    }

    fn finish<T>(self, value: impl FnOnce() -> Result<T, Vec<Violation>>) -> Result<T, Vec<Violation>> {
        if self.found.is_empty() {
            value()
        } else {
            Err(self.found)
        }
    }
}

fn source_spec(c: &mut Checker, src: Option<&SourceConfig>) -> SourceSpec {
    let Some(src) = src else {
        return SourceSpec::default();
    };
    match src.kind.as_str() {
        "deterministic" => {
            c.check(src.lambda.is_none(), "source.lambda", "only applies to poissonian sources");
            let n = src.n.unwrap_or(1);
            c.check(n >= 1 && n <= u32::MAX as u64, "source.n", "must be >= 1");
            SourceSpec::Deterministic { n: n.clamp(1, u32::MAX as u64) as u32 }
        }
        _ => {
            c.check(src.n.is_none(), "source.n", "only applies to deterministic sources");
            match src.lambda {
                Some(l) => {
                    c.check(l > 0.0 && l.is_finite() && l < 1e9, "source.lambda", "must be > 0 (and < 1e9)");
                    SourceSpec::Poissonian { lambda: l }
                }
                None => {
                    c.check(false, "source.lambda", "required for poissonian sources");
                    SourceSpec::Poissonian { lambda: 1.0 }
                }
            }
        }
    }
}

fn adaptive_plan(cfg: AdaptiveConfig, model: ModelSpec) -> Result<AdaptivePlan, Vec<Violation>> {
    let mut c = Checker::default();
    let names = model.parameter_names();

    // Grid and prior.
    let axes_ok = c.check(
        cfg.grid.axes.len() == 3,
        "grid.axes",
        format!("expected 3 axes ({}), got {}", names.join(", "), cfg.grid.axes.len()),
    );
    let mut nodes: u128 = 1;
    for (i, ax) in cfg.grid.axes.iter().enumerate() {
        let p = format!("grid.axes[{i}]");
        if let Some(expected) = names.get(i) {
            c.check(ax.name == *expected, format!("{p}.name"), format!("expected `{expected}`, got `{}`", ax.name));
        }
        c.check(ax.count >= 2, format!("{p}.count"), "count ≥ 2");
        let finite = c.check(ax.lo.is_finite() && ax.hi.is_finite(), p.to_string(), "lo and hi must be finite");
        if finite {
            c.check(ax.hi > ax.lo, format!("{p}.hi"), "hi > lo");
        }
        nodes = nodes.saturating_mul(ax.count as u128);
        if let Some(pr) = &ax.prior {
            match pr.kind.as_str() {
                "gaussian" => {
                    c.check(pr.mean.is_some_and(f64::is_finite), format!("{p}.prior.mean"), "gaussian prior needs a finite mean");
                    c.check(pr.std.is_some_and(|s| s > 0.0 && s.is_finite()), format!("{p}.prior.std"), "gaussian prior needs std > 0");
                }
                _ => {
                    c.check(pr.mean.is_none() && pr.std.is_none(), format!("{p}.prior"), "uniform prior takes no mean or std");
                }
            }
        }
    }
    c.check(nodes <= MAX_GRID_NODES as u128, "grid.axes", format!("grid has {nodes} nodes, limit is {MAX_GRID_NODES}"));
    if axes_ok {
        let ax = &cfg.grid.axes;
        match model {
            ModelSpec::Edge => {
                c.check(ax[1].lo > 0.0, "grid.axes[1].lo", "beam sigma must be > 0 on the whole axis");
                c.check(ax[2].lo >= 0.0 && ax[2].hi <= 1.0, "grid.axes[2]", "efficiency axis must lie in [0, 1]");
            }
            ModelSpec::Hole(_) => {
                c.check(ax[2].lo > 0.0, "grid.axes[2].lo", "radius must be > 0 on the whole axis");
            }
        }
    }

    // Beam.
    if let ModelSpec::Hole(beam) = &model {
        c.check(beam.sigma > 0.0 && beam.sigma.is_finite(), "beam.sigma", "must be > 0");
        c.check(beam.a > 0.0 && beam.a <= 1.0, "beam.a", "must be in (0, 1]");
    }

    // Design window.
    let dim = match model {
        ModelSpec::Edge => 1,
        ModelSpec::Hole(_) => 2,
    };
    let bounds_ok = c.check(
        cfg.design.bounds.len() == dim,
        "design.bounds",
        format!("expected {dim} interval(s) for this model, got {}", cfg.design.bounds.len()),
    );
    let mut windows_ok = bounds_ok;
    for (k, [lo, hi]) in cfg.design.bounds.iter().enumerate() {
        windows_ok &= c.check(lo.is_finite() && hi.is_finite() && hi > lo, format!("design.bounds[{k}]"), "need finite lo < hi");
    }
    let k = cfg.design.candidates_per_level.unwrap_or(21);
    let levels = cfg.design.levels.unwrap_or(5);
    c.check(k >= 3, "design.candidates_per_level", "must be >= 3");
    c.check(k <= 10_000, "design.candidates_per_level", "must be <= 10000");
    c.check(levels >= 1, "design.levels", "must be >= 1");
    c.check(levels <= 64, "design.levels", "must be <= 64");

    // The window must cover where the structure can be: the edge position
    // for an edge, the hole center for a hole.
    if windows_ok && axes_ok {
        for d in 0..dim {
            let ax = &cfg.grid.axes[d];
            let [lo, hi] = cfg.design.bounds[d];
            c.check(
                lo <= ax.lo && ax.hi <= hi,
                format!("design.bounds[{d}]"),
                format!(
                    "window [{lo}, {hi}] does not cover the prior support [{}, {}] of `{}`",
                    ax.lo, ax.hi, ax.name
                ),
            );
        }
    }

    // Stop rule.
    c.check(cfg.stop.max_probes >= 1, "stop.max_probes", "must be >= 1");
    if let Some(t) = &cfg.stop.target_std {
        for (name, v) in t {
            c.check(names.contains(&name.as_str()), format!("stop.target_std.{name}"), "not a model parameter");
            c.check(*v > 0.0 && v.is_finite(), format!("stop.target_std.{name}"), "must be > 0");
        }
    }

    // Simulated sample.
    let truth_ok = c.check(cfg.truth.len() == 3, "truth", "expected 3 values");
    if truth_ok {
        c.check(cfg.truth.iter().all(|v| v.is_finite()), "truth", "values must be finite");
        match model {
            ModelSpec::Edge => {
                c.check(cfg.truth[1] > 0.0, "truth[1]", "beam sigma must be > 0");
                c.check((0.0..=1.0).contains(&cfg.truth[2]), "truth[2]", "efficiency must be in [0, 1]");
            }
            ModelSpec::Hole(_) => {
                c.check(cfg.truth[2] > 0.0, "truth[2]", "radius must be > 0");
            }
        }
    }
    let source = source_spec(&mut c, cfg.source.as_ref());
    let dark_prob = cfg.detector.as_ref().and_then(|d| d.dark_prob).unwrap_or(0.0);
    c.check((0.0..1.0).contains(&dark_prob), "detector.dark_prob", "must be in [0, 1)");

    c.finish(|| {
        let mut axes = Vec::with_capacity(3);
        let mut marginals = Vec::with_capacity(3);
        for ax in &cfg.grid.axes {
            axes.push(ParameterAxis::new(ax.name.clone(), ax.lo, ax.hi, ax.count as usize).map_err(runtime_violation("grid"))?);
            marginals.push(match &ax.prior {
                Some(PriorConfig { kind, mean: Some(mean), std: Some(std) }) if kind == "gaussian" => {
                    Marginal::Gaussian { mean: *mean, std: *std }
                }
                _ => Marginal::Uniform,
            });
        }
        let prior = make_grid(axes, &Prior::Independent { marginals }).map_err(runtime_violation("grid"))?;
        let window = DesignWindow::new(cfg.design.bounds.iter().map(|[lo, hi]| (*lo, *hi)).collect())
            .and_then(|w| w.with_resolution(k as usize, levels as usize))
            .map_err(runtime_violation("design"))?;
        let stop = StopRule { max_probes: cfg.stop.max_probes as usize, target_std: cfg.stop.target_std.clone().unwrap_or_default() };
        Ok(AdaptivePlan {
            seed: cfg.seed,
            model,
            prior,
            window,
            stop,
            truth: cfg.truth.clone(),
            source,
            dark_prob,
            save_posterior: cfg.save_posterior.unwrap_or(false),
        })
    })
}

fn runtime_violation(path: &'static str) -> impl Fn(crate::Error) -> Vec<Violation> {
    move |e| vec![Violation::new(path, e.to_string())]
}

fn raster_plan(cfg: RasterInput) -> Result<RasterPlan, Vec<Violation>> {
    let mut c = Checker::default();
    let m = &cfg.mask;
    let allowed: &[&str] = match m.kind.as_str() {
        "edge" => &["x0"],
        "disc" => &["cx", "cy", "radius"],
        "rect" => &["x0", "y0", "x1", "y1"],
        _ => &["width", "height", "pitch", "maxval", "levels"],
    };
    let present = [
        ("x0", m.x0.is_some()),
        ("cx", m.cx.is_some()),
        ("cy", m.cy.is_some()),
        ("radius", m.radius.is_some()),
        ("y0", m.y0.is_some()),
        ("x1", m.x1.is_some()),
        ("y1", m.y1.is_some()),
        ("width", m.width.is_some()),
        ("height", m.height.is_some()),
        ("pitch", m.pitch.is_some()),
        ("maxval", m.maxval.is_some()),
        ("levels", m.levels.is_some()),
    ];
    for (name, is_set) in present {
        let wanted = allowed.contains(&name);
        if is_set && !wanted {
            c.check(false, format!("mask.{name}"), format!("not used by {} masks", m.kind));
        }
        if !is_set && wanted {
            c.check(false, format!("mask.{name}"), format!("required for {} masks", m.kind));
        }
    }
    let finite = |v: Option<f64>| v.is_none_or(f64::is_finite);
    for (name, v) in [("x0", m.x0), ("cx", m.cx), ("cy", m.cy), ("radius", m.radius), ("y0", m.y0), ("x1", m.x1), ("y1", m.y1)] {
        c.check(finite(v), format!("mask.{name}"), "must be finite");
    }
    let mask = match m.kind.as_str() {
        "edge" => Mask::Edge { x0: m.x0.unwrap_or(0.0) },
        "disc" => {
            c.check(m.radius.is_none_or(|r| r > 0.0), "mask.radius", "must be > 0");
            Mask::Disc { cx: m.cx.unwrap_or(0.0), cy: m.cy.unwrap_or(0.0), radius: m.radius.unwrap_or(1.0) }
        }
        "rect" => {
            let (x0, y0, x1, y1) = (m.x0.unwrap_or(0.0), m.y0.unwrap_or(0.0), m.x1.unwrap_or(0.0), m.y1.unwrap_or(0.0));
            c.check(x1 >= x0, "mask.x1", "must be >= mask.x0");
            c.check(y1 >= y0, "mask.y1", "must be >= mask.y0");
            Mask::Rect { x0, y0, x1, y1 }
        }
        _ => {
            let (w, h) = (m.width.unwrap_or(1), m.height.unwrap_or(1));
            let maxval = m.maxval.unwrap_or(1);
            c.check(w >= 1, "mask.width", "must be >= 1");
            c.check(h >= 1, "mask.height", "must be >= 1");
            c.check(m.pitch.is_none_or(|p| p > 0.0 && p.is_finite()), "mask.pitch", "must be > 0");
            c.check((1..=u16::MAX as u64).contains(&maxval), "mask.maxval", "must be in [1, 65535]");
            let levels = m.levels.clone().unwrap_or_default();
            if m.levels.is_some() {
                c.check(
                    levels.len() as u64 == w.saturating_mul(h),
                    "mask.levels",
                    format!("expected width × height = {} levels, got {}", w.saturating_mul(h), levels.len()),
                );
                c.check(levels.iter().all(|&l| l <= maxval), "mask.levels", "levels must be <= maxval");
            }
            Mask::Bitmap(Bitmap {
                width: w as usize,
                height: h as usize,
                pitch: m.pitch.unwrap_or(1.0),
                maxval: maxval.min(u16::MAX as u64) as u16,
                levels: levels.iter().map(|&l| l.min(u16::MAX as u64) as u16).collect(),
            })
        }
    };

    let s = &cfg.scan;
    c.check(s.origin.iter().all(|v| v.is_finite()), "scan.origin", "must be finite");
    c.check(s.pixel_size.iter().all(|v| *v > 0.0 && v.is_finite()), "scan.pixel_size", "must be > 0");
    c.check(s.pixels.iter().all(|v| *v >= 1), "scan.pixels", "must be >= 1");
    let ions = s.ions_per_pixel.unwrap_or(1);
    c.check((1..=u32::MAX as u64).contains(&ions), "scan.ions_per_pixel", "must be >= 1");
    let beam_sigma = s.beam_sigma.unwrap_or(0.0);
    c.check(beam_sigma >= 0.0 && beam_sigma.is_finite(), "scan.beam_sigma", "must be >= 0");
    let offsets = s.beam_offsets.unwrap_or(64);
    c.check((1..=1_000_000).contains(&offsets), "scan.beam_offsets", "must be in [1, 1000000]");
    let frames = cfg.frames.unwrap_or(1);
    c.check(frames >= 1, "frames", "must be >= 1");
    let total = s.pixels[0].saturating_mul(s.pixels[1]).saturating_mul(frames);
    c.check(total <= MAX_RASTER_PIXELS as u64, "scan.pixels", format!("pixels × frames = {total} exceeds {MAX_RASTER_PIXELS}"));

    let source = source_spec(&mut c, cfg.source.as_ref());
    let det = cfg.detector.clone().unwrap_or_default();
    let efficiency = det.efficiency.unwrap_or(1.0);
    let dark_prob = det.dark_prob.unwrap_or(0.0);
    c.check((0.0..=1.0).contains(&efficiency), "detector.efficiency", "must be in [0, 1]");
    c.check((0.0..1.0).contains(&dark_prob), "detector.dark_prob", "must be in [0, 1)");

    if let Some([x0, y0, x1, y1]) = cfg.snr_region {
        c.check(frames >= 2, "snr_region", "empirical SNR needs frames >= 2");
        c.check(x0 <= x1 && y0 <= y1, "snr_region", "need ix0 <= ix1 and iy0 <= iy1");
        c.check(x1 < s.pixels[0] && y1 < s.pixels[1], "snr_region", "box exceeds the image");
    }
    let format = match cfg.format.as_deref() {
        Some("csv") => ImageFormat::Csv,
        _ => ImageFormat::Pgm,
    };

    c.finish(|| {
        Ok(RasterPlan {
            seed: cfg.seed,
            mask,
            scan: ScanConfig {
                origin: s.origin,
                pixel_size: s.pixel_size,
                pixels: [s.pixels[0] as usize, s.pixels[1] as usize],
                ions_per_pixel: ions as u32,
                beam_sigma,
                beam_offsets: offsets as usize,
            },
            source,
            detector: DetectorSpec { efficiency, dark_prob },
            frames: frames as usize,
            format,
            snr_region: cfg.snr_region.map(|r| r.map(|v| v as usize)),
        })
    })
}

fn snr_plan(cfg: SnrInput) -> Result<SnrPlan, Vec<Violation>> {
    let mut c = Checker::default();
    c.check(!cfg.efficiencies.is_empty(), "efficiencies", "must not be empty");
    for (i, a) in cfg.efficiencies.iter().enumerate() {
        c.check(*a > 0.0 && *a <= 1.0, format!("efficiencies[{i}]"), "must be in (0, 1]");
    }
    let [lo, hi] = cfg.n_range;
    c.check(lo >= 1, "n_range", "n_min must be >= 1");
    c.check(lo <= hi, "n_range", "n_min must be <= n_max");
    c.check(hi <= 1_000_000, "n_range", "n_max must be <= 1000000");
    let kinds = match cfg.source_kind.as_deref() {
        Some("deterministic") => vec![SourceKind::Deterministic],
        Some("poisson") => vec![SourceKind::Poisson],
        _ => vec![SourceKind::Deterministic, SourceKind::Poisson],
    };
    c.finish(|| Ok(SnrPlan { kinds, efficiencies: cfg.efficiencies.clone(), n_range: (lo as u32, hi as u32) }))
}

fn fit_plan(cfg: FitInput) -> Result<FitPlan, Vec<Violation>> {
    let mut c = Checker::default();
    let input = PathBuf::from(&cfg.input);
    let log = match fs::File::open(&input).map_err(crate::Error::from).and_then(|f| RunLog::read_jsonl(BufReader::new(f))) {
        Ok(log) => Some(log),
        Err(e) => {
            c.check(false, "input", format!("cannot load run log {}: {e}", input.display()));
            None
        }
    };
    let tolerance = cfg.tolerance.unwrap_or(1e-8);
    c.check(tolerance > 0.0 && tolerance < 1.0, "tolerance", "must be in (0, 1)");
    let restarts = cfg.restarts.unwrap_or(5);
    c.check(restarts <= 1000, "restarts", "must be <= 1000");
    let Some(log) = log else {
        return Err(c.found);
    };
    c.check(!log.records.is_empty(), "input", "run log has no probe records");

    let model = match log.header.model.get("kind").and_then(Value::as_str) {
        Some("edge") => Some(ModelSpec::Edge),
        Some("hole") => {
            let beam: Option<BeamSpec> = log.header.model.get("beam").and_then(|b| serde_json::from_value(b.clone()).ok());
            c.check(beam.is_some(), "input", "hole run log lacks its beam description");
            beam.map(ModelSpec::Hole)
        }
        _ => {
            c.check(false, "input", "run log header names no known model");
            None
        }
    };

    let log_bounds: Option<Vec<(f64, f64)>> = log
        .header
        .prior
        .get("axes")
        .and_then(|a| serde_json::from_value::<Vec<ParameterAxis>>(a.clone()).ok())
        .map(|axes| axes.iter().map(|a| (a.lo(), a.hi())).collect());
    let bounds: Vec<(f64, f64)> = match (&cfg.bounds, log_bounds) {
        (Some(b), _) => b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
        (None, Some(b)) => b,
        (None, None) => {
            c.check(false, "bounds", "not given and not recoverable from the run log");
            Vec::new()
        }
    };
    if c.check(bounds.len() == 3, "bounds", format!("expected 3 intervals, got {}", bounds.len())) {
        for (k, (lo, hi)) in bounds.iter().enumerate() {
            c.check(lo.is_finite() && hi.is_finite() && hi > lo, format!("bounds[{k}]"), "need finite lo < hi");
        }
    }
    let theta0 = match &cfg.theta0 {
        Some(t) => t.clone(),
        None => log
            .records
            .last()
            .map(|r| r.mean.iter().zip(&bounds).map(|(m, (lo, hi))| m.clamp(*lo, *hi)).collect())
            .unwrap_or_default(),
    };
    if c.check(theta0.len() == 3, "theta0", format!("expected 3 values, got {}", theta0.len())) && bounds.len() == 3 {
        for (k, (t, (lo, hi))) in theta0.iter().zip(&bounds).enumerate() {
            c.check(*t >= *lo && *t <= *hi, format!("theta0[{k}]"), format!("{t} lies outside bounds [{lo}, {hi}]"));
        }
    }
    c.finish(|| {
        Ok(FitPlan {
            input,
            log,
            model: model.expect("checked above"),
            theta0,
            bounds,
            restarts: restarts as usize,
            tolerance,
        })
    })
}
