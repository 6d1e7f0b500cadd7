//! Field tables for every run mode: the single source for `--help`, the
//! published JSON schema and structural validation.

use serde_json::{json, Map, Value};

use super::config::Violation;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldKind {
    /// Non-negative integer.
    UInt,
    Float,
    Bool,
    Str,
    Enum(&'static [&'static str]),
    /// Array of floats, optionally of fixed length.
    Floats(Option<usize>),
    /// Array of non-negative integers, optionally of fixed length.
    UInts(Option<usize>),
    /// Array of `[lo, hi]` float pairs.
    Intervals,
    /// Object mapping names to floats.
    FloatMap,
    Object,
    /// Array of objects; element fields use the `path[]` prefix.
    List,
}

impl FieldKind {
    fn describe(&self) -> String {
        match self {
            FieldKind::UInt => "integer".into(),
            FieldKind::Float => "number".into(),
            FieldKind::Bool => "bool".into(),
            FieldKind::Str => "string".into(),
            FieldKind::Enum(v) => v.join("|"),
            FieldKind::Floats(Some(n)) => format!("[number; {n}]"),
            FieldKind::Floats(None) => "[number]".into(),
            FieldKind::UInts(Some(n)) => format!("[integer; {n}]"),
            FieldKind::UInts(None) => "[integer]".into(),
            FieldKind::Intervals => "[[lo, hi]]".into(),
            FieldKind::FloatMap => "{name: number}".into(),
            FieldKind::Object => "object".into(),
            FieldKind::List => "[object]".into(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Field {
    pub path: &'static str,
    pub kind: FieldKind,
    pub required: bool,
    pub default: Option<&'static str>,
    pub doc: &'static str,
}

const fn req(path: &'static str, kind: FieldKind, doc: &'static str) -> Field {
    Field { path, kind, required: true, default: None, doc }
}

const fn opt(path: &'static str, kind: FieldKind, default: Option<&'static str>, doc: &'static str) -> Field {
    Field { path, kind, required: false, default, doc }
}

pub const MODES: [&str; 5] = ["profile-edge", "locate-hole", "raster", "snr", "fit"];

const SOURCE_KINDS: &[&str] = &["deterministic", "poissonian"];
const PRIOR_KINDS: &[&str] = &["uniform", "gaussian"];

const COMMON: &[Field] = &[
    req("mode", FieldKind::Enum(&MODES), "run mode; must match the subcommand"),
    opt("output_dir", FieldKind::Str, None, "artifact directory (else $IONPROBE_OUTPUT_DIR, else .)"),
];

const ADAPTIVE: &[Field] = &[
    req("seed", FieldKind::UInt, "64-bit seed of the simulated sample"),
    req("grid", FieldKind::Object, "parameter grid and prior"),
    req("grid.axes", FieldKind::List, "one entry per model parameter, in model order"),
    req("grid.axes[].name", FieldKind::Str, "parameter name"),
    req("grid.axes[].lo", FieldKind::Float, "first node"),
    req("grid.axes[].hi", FieldKind::Float, "last node"),
    req("grid.axes[].count", FieldKind::UInt, "number of nodes, >= 2"),
    opt("grid.axes[].prior", FieldKind::Object, Some("uniform"), "prior marginal of this axis"),
    req("grid.axes[].prior.kind", FieldKind::Enum(PRIOR_KINDS), "marginal family"),
    opt("grid.axes[].prior.mean", FieldKind::Float, None, "gaussian mean"),
    opt("grid.axes[].prior.std", FieldKind::Float, None, "gaussian standard deviation, > 0"),
    req("design", FieldKind::Object, "probe-position search"),
    req("design.bounds", FieldKind::Intervals, "search window per design dimension, nm"),
    opt("design.candidates_per_level", FieldKind::UInt, Some("21"), "lattice points per dimension and level, >= 3"),
    opt("design.levels", FieldKind::UInt, Some("5"), "refinement levels, >= 1"),
    req("stop", FieldKind::Object, "stop rule"),
    req("stop.max_probes", FieldKind::UInt, "probe budget, >= 1"),
    opt("stop.target_std", FieldKind::FloatMap, None, "stop early once every listed posterior std is reached"),
    req("truth", FieldKind::Floats(Some(3)), "parameters of the simulated sample, in model order"),
    opt("source", FieldKind::Object, Some("deterministic, n = 1"), "particle source"),
    req("source.kind", FieldKind::Enum(SOURCE_KINDS), "source statistics"),
    opt("source.n", FieldKind::UInt, None, "particles per extraction (deterministic)"),
    opt("source.lambda", FieldKind::Float, None, "mean particles per extraction (poissonian)"),
    opt("detector", FieldKind::Object, None, "detector noise"),
    opt("detector.dark_prob", FieldKind::Float, Some("0"), "probability of one dark count per probe"),
    opt("save_posterior", FieldKind::Bool, Some("false"), "also write the final posterior grid"),
];

const HOLE_EXTRA: &[Field] = &[
    req("beam", FieldKind::Object, "beam and detector, known"),
    req("beam.sigma", FieldKind::Float, "1σ beam radius, nm, > 0"),
    req("beam.a", FieldKind::Float, "detector efficiency, in (0, 1]"),
];

const RASTER: &[Field] = &[
    req("seed", FieldKind::UInt, "64-bit seed"),
    req("mask", FieldKind::Object, "sample transmission"),
    req("mask.kind", FieldKind::Enum(&["edge", "disc", "rect", "bitmap"]), "mask shape"),
    opt("mask.x0", FieldKind::Float, None, "edge position (edge) or left side (rect), nm"),
    opt("mask.cx", FieldKind::Float, None, "disc center x, nm"),
    opt("mask.cy", FieldKind::Float, None, "disc center y, nm"),
    opt("mask.radius", FieldKind::Float, None, "disc radius, nm"),
    opt("mask.y0", FieldKind::Float, None, "rect bottom, nm"),
    opt("mask.x1", FieldKind::Float, None, "rect right side, nm"),
    opt("mask.y1", FieldKind::Float, None, "rect top, nm"),
    opt("mask.width", FieldKind::UInt, None, "bitmap width, pixels"),
    opt("mask.height", FieldKind::UInt, None, "bitmap height, pixels"),
    opt("mask.pitch", FieldKind::Float, None, "bitmap pixel pitch, nm"),
    opt("mask.maxval", FieldKind::UInt, None, "bitmap gray level meaning fully open"),
    opt("mask.levels", FieldKind::UInts(None), None, "bitmap gray levels, row-major"),
    req("scan", FieldKind::Object, "raster geometry"),
    req("scan.origin", FieldKind::Floats(Some(2)), "center of pixel (0, 0), nm"),
    req("scan.pixel_size", FieldKind::Floats(Some(2)), "pixel pitch (dx, dy), nm"),
    req("scan.pixels", FieldKind::UInts(Some(2)), "image size (nx, ny)"),
    opt("scan.ions_per_pixel", FieldKind::UInt, Some("1"), "extractions per pixel"),
    opt("scan.beam_sigma", FieldKind::Float, Some("0"), "1σ beam radius, nm"),
    opt("scan.beam_offsets", FieldKind::UInt, Some("64"), "beam offsets per particle for bitmap masks"),
    opt("source", FieldKind::Object, Some("deterministic, n = 1"), "particle source"),
    req("source.kind", FieldKind::Enum(SOURCE_KINDS), "source statistics"),
    opt("source.n", FieldKind::UInt, None, "particles per extraction (deterministic)"),
    opt("source.lambda", FieldKind::Float, None, "mean particles per extraction (poissonian)"),
    opt("detector", FieldKind::Object, Some("ideal"), "detector"),
    opt("detector.efficiency", FieldKind::Float, Some("1"), "detection probability per transmitted particle"),
    opt("detector.dark_prob", FieldKind::Float, Some("0"), "probability of one dark count per extraction"),
    opt("frames", FieldKind::UInt, Some("1"), "independent frames to record"),
    opt("format", FieldKind::Enum(&["pgm", "csv"]), Some("pgm"), "image file format"),
    opt("snr_region", FieldKind::UInts(Some(4)), None, "pixel box [ix0, iy0, ix1, iy1] (inclusive) for empirical SNR over frames"),
];

const SNR: &[Field] = &[
    opt("source_kind", FieldKind::Enum(&["deterministic", "poisson", "both"]), Some("both"), "which SNR curves to tabulate"),
    req("efficiencies", FieldKind::Floats(None), "detection probabilities a, each in (0, 1]"),
    req("n_range", FieldKind::UInts(Some(2)), "inclusive range [n_min, n_max] of mean particle numbers"),
];

const FIT: &[Field] = &[
    req("input", FieldKind::Str, "run log (JSON Lines) to fit"),
    opt("theta0", FieldKind::Floats(Some(3)), Some("last posterior mean of the log"), "starting point"),
    opt("bounds", FieldKind::Intervals, Some("prior grid ranges of the log"), "box constraints per parameter"),
    opt("restarts", FieldKind::UInt, Some("5"), "perturbed restarts"),
    opt("tolerance", FieldKind::Float, Some("1e-8"), "simplex diameter for convergence, in units of the bounds"),
];

/// Fields honored by `mode`.
pub fn fields(mode: &str) -> Vec<Field> {
    let mut out: Vec<Field> = COMMON.to_vec();
    match mode {
        "profile-edge" => out.extend_from_slice(ADAPTIVE),
        "locate-hole" => {
            out.extend_from_slice(ADAPTIVE);
            out.extend_from_slice(HOLE_EXTRA);
        }
        "raster" => out.extend_from_slice(RASTER),
        "snr" => out.extend_from_slice(SNR),
        "fit" => out.extend_from_slice(FIT),
        _ => {}
    }
    out
}

/// Plain-text field table for `--help`.
pub fn help_text(mode: &str) -> String {
    let fields = fields(mode);
    let width = fields.iter().map(|f| f.path.len()).max().unwrap_or(0);
    let mut s = String::from("Config fields (JSON; override with --set path=value):\n");
    for f in &fields {
        let status = match (f.required, f.default) {
            (true, _) => "required".to_string(),
            (false, Some(d)) => format!("default: {d}"),
            (false, None) => "optional".to_string(),
        };
        s.push_str(&format!("  {:width$}  {}  ({status})  {}\n", f.path, f.kind.describe(), f.doc));
    }
    s
}

/// JSON Schema (draft 2020-12) for `mode`.
pub fn json_schema(mode: &str) -> Value {
    let fields = fields(mode);
    let mut root = json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": format!("ionprobe {mode} config"),
        "type": "object",
        "properties": {},
        "required": [],
        "additionalProperties": false,
    });
    for f in &fields {
        insert_schema(&mut root, f);
    }
    root
}

fn leaf_schema(f: &Field) -> Value {
    let mut v = match f.kind {
        FieldKind::UInt => json!({ "type": "integer", "minimum": 0 }),
        FieldKind::Float => json!({ "type": "number" }),
        FieldKind::Bool => json!({ "type": "boolean" }),
        FieldKind::Str => json!({ "type": "string" }),
        FieldKind::Enum(vals) => json!({ "enum": vals }),
        FieldKind::Floats(n) => sized_array(json!({ "type": "number" }), n),
        FieldKind::UInts(n) => sized_array(json!({ "type": "integer", "minimum": 0 }), n),
        FieldKind::Intervals => json!({
            "type": "array",
            "items": { "type": "array", "items": { "type": "number" }, "minItems": 2, "maxItems": 2 },
        }),
        FieldKind::FloatMap => json!({ "type": "object", "additionalProperties": { "type": "number" } }),
        FieldKind::Object => {
            json!({ "type": "object", "properties": {}, "required": [], "additionalProperties": false })
        }
        FieldKind::List => json!({
            "type": "array",
            "items": { "type": "object", "properties": {}, "required": [], "additionalProperties": false },
        }),
    };
    v["description"] = json!(f.doc);
    if let Some(d) = f.default {
        v["default"] = json!(d);
    }
    v
}

fn sized_array(items: Value, n: Option<usize>) -> Value {
    match n {
        Some(n) => json!({ "type": "array", "items": items, "minItems": n, "maxItems": n }),
        None => json!({ "type": "array", "items": items }),
    }
}

fn insert_schema(root: &mut Value, f: &Field) {
    let segments: Vec<&str> = f.path.split('.').collect();
    let mut node = root;
    for seg in &segments[..segments.len() - 1] {
        let (name, list) = match seg.strip_suffix("[]") {
            Some(n) => (n, true),
            None => (*seg, false),
        };
        node = &mut node["properties"][name];
        if list {
            node = &mut node["items"];
        }
    }
    let leaf = segments[segments.len() - 1];
    node["properties"][leaf] = leaf_schema(f);
    if f.required {
        if let Some(r) = node["required"].as_array_mut() {
            r.push(json!(leaf));
        }
    }
}

/// Structural check of `value` against the field table: types, required
/// fields and unknown keys. Every problem is reported.
pub fn check_structure(mode: &str, value: &Value) -> Vec<Violation> {
    let fields = fields(mode);
    let mut out = Vec::new();
    let Some(obj) = value.as_object() else {
        out.push(Violation::new("", "config must be a JSON object"));
        return out;
    };
    check_object(&fields, "", "", obj, &mut out);
    out
}

/// `pattern` is the schema prefix (with `[]`), `concrete` the actual path.
fn check_object(fields: &[Field], pattern: &str, concrete: &str, obj: &Map<String, Value>, out: &mut Vec<Violation>) {
    let children: Vec<&Field> = fields.iter().filter(|f| parent_of(f.path) == pattern).collect();
    for key in obj.keys() {
        if !children.iter().any(|f| leaf_name(f.path) == key) {
            out.push(Violation::new(join(concrete, key), "unknown field"));
        }
    }
    for f in children {
        let name = leaf_name(f.path);
        let path = join(concrete, name);
        match obj.get(name) {
            None | Some(Value::Null) => {
                if f.required {
                    out.push(Violation::new(path, "missing required field"));
                }
            }
            Some(v) => check_value(fields, f, &path, v, out),
        }
    }
}

fn check_value(fields: &[Field], f: &Field, path: &str, v: &Value, out: &mut Vec<Violation>) {
    let bad = |out: &mut Vec<Violation>| out.push(Violation::new(path, format!("expected {}", f.kind.describe())));
    match f.kind {
        FieldKind::UInt => {
            if v.as_u64().is_none() {
                bad(out)
            }
        }
        FieldKind::Float => {
            if v.as_f64().is_none() {
                bad(out)
            }
        }
        FieldKind::Bool => {
            if !v.is_boolean() {
                bad(out)
            }
        }
        FieldKind::Str => {
            if !v.is_string() {
                bad(out)
            }
        }
        FieldKind::Enum(vals) => {
            if !v.as_str().is_some_and(|s| vals.contains(&s)) {
                bad(out)
            }
        }
        FieldKind::Floats(n) => match v.as_array() {
            Some(a) if a.iter().all(|x| x.as_f64().is_some()) && n.is_none_or(|n| a.len() == n) => {}
            _ => bad(out),
        },
        FieldKind::UInts(n) => match v.as_array() {
            Some(a) if a.iter().all(|x| x.as_u64().is_some()) && n.is_none_or(|n| a.len() == n) => {}
            _ => bad(out),
        },
        FieldKind::Intervals => {
            let ok = v.as_array().is_some_and(|a| {
                a.iter().all(|p| p.as_array().is_some_and(|p| p.len() == 2 && p.iter().all(|x| x.as_f64().is_some())))
            });
            if !ok {
                bad(out)
            }
        }
        FieldKind::FloatMap => {
            if !v.as_object().is_some_and(|m| m.values().all(|x| x.as_f64().is_some())) {
                bad(out)
            }
        }
        FieldKind::Object => match v.as_object() {
            Some(m) => check_object(fields, f.path, path, m, out),
            None => bad(out),
        },
        FieldKind::List => match v.as_array() {
            Some(items) => {
                let pattern = format!("{}[]", f.path);
                for (i, item) in items.iter().enumerate() {
                    let p = format!("{path}[{i}]");
                    match item.as_object() {
                        Some(m) => check_object(fields, &pattern, &p, m, out),
                        None => out.push(Violation::new(p, "expected object")),
                    }
                }
            }
            None => bad(out),
        },
    }
}

fn parent_of(path: &str) -> &str {
    path.rsplit_once('.').map_or("", |(p, _)| p)
}

fn leaf_name(path: &str) -> &str {
    path.rsplit_once('.').map_or(path, |(_, l)| l)
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}
