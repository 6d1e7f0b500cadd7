//! Particle sources, detector thinning and counting-statistics SNR.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of particles emitted per extraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    /// Exactly `n` particles every time.
    Deterministic { n: u32 },
    /// Poisson-distributed count with mean `lambda`.
    Poissonian { lambda: f64 },
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceSpec::Deterministic { n: 0 } => {
                Err(Error::InvalidArgument("deterministic source needs n >= 1".into()))
            }
            SourceSpec::Poissonian { lambda } if !(lambda > 0.0) || !lambda.is_finite() => {
                Err(Error::InvalidArgument(format!("poissonian source needs lambda > 0, got {lambda}")))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SourceSpec::Deterministic { n } => n as f64,
            SourceSpec::Poissonian { lambda } => lambda,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SourceSpec::Deterministic { .. } => "deterministic",
            SourceSpec::Poissonian { .. } => "poisson",
        }
    }
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Deterministic { n: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// Probability of one spurious count per gated probe.
    #[serde(default)]
    pub dark_prob: f64,
}

impl DetectorSpec {
    pub fn new(efficiency: f64, dark_prob: f64) -> Result<Self> {
        let d = DetectorSpec { efficiency, dark_prob };
        d.validate()?;
        Ok(d)
    }

    pub fn ideal() -> Self {
        DetectorSpec { efficiency: 1.0, dark_prob: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidArgument(format!("efficiency must be in [0, 1], got {}", self.efficiency)));
        }
        if !(0.0..1.0).contains(&self.dark_prob) {
            return Err(Error::InvalidArgument(format!("dark_prob must be in [0, 1), got {}", self.dark_prob)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub emitted: u64,
    pub transmitted: u64,
    pub detected: u64,
    pub dark: bool,
}

impl ProbeOutcome {
    /// At least one count registered.
    pub fn y(&self) -> bool {
        self.detected >= 1
    }
}

/// Simulates one extraction: emission, transmission through the sample with
/// probability `p_transmit`, detection with the detector efficiency, and an
/// optional dark count.
pub fn sample_probe<R: Rng + ?Sized>(source: &SourceSpec, det: &DetectorSpec, p_transmit: f64, rng: &mut R) -> ProbeOutcome {
    let p_transmit = p_transmit.clamp(0.0, 1.0);
    let emitted = match *source {
        SourceSpec::Deterministic { n } => n as u64,
        SourceSpec::Poissonian { lambda } => {
            let d = Poisson::new(lambda).expect("validated lambda");
            d.sample(rng) as u64
        }
    };
    let transmitted = thin(emitted, p_transmit, rng);
    let mut detected = thin(transmitted, det.efficiency, rng);
    let dark = det.dark_prob > 0.0 && rng.gen::<f64>() < det.dark_prob;
    if dark {
        detected += 1;
    }
    ProbeOutcome { emitted, transmitted, detected, dark }
}

fn thin<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    match n {
        0 => 0,
        1 => u64::from(rng.gen::<f64>() < p),
        _ => Binomial::new(n, p).expect("p in [0, 1]").sample(rng),
    }
}

/// `mu / sigma` of Binomial(n, a) detected counts.
pub fn snr_deterministic(n: u32, a: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if a.is_nan() || !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidArgument(format!("efficiency must be in [0, 1], got {a}")));
    }
    if a == 1.0 {
        return Err(Error::InfiniteSnr("deterministic source with a = 1 has zero variance".into()));
    }
    if a == 0.0 {
        return Err(Error::ZeroSignal("a = 0 detects nothing".into()));
    }
    let n = n as f64;
    Ok((n * a / (1.0 - a)).sqrt())
}

/// `mu / sigma` of thinned Poisson counts: `sqrt(lambda * a)`.
pub fn snr_poisson(lambda: f64, a: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidArgument(format!("efficiency must be in (0, 1], got {a}")));
    }
    Ok((lambda * a).sqrt())
}

/// Maps `[0, inf]` onto `[0, 1]` via `f / (f + 1)`.
pub fn compactify(f: f64) -> Result<f64> {
    if f.is_nan() || f < 0.0 {
        return Err(Error::InvalidArgument(format!("compactify needs f >= 0, got {f}")));
    }
    if f.is_infinite() {
        return Ok(1.0);
    }
    Ok(f / (f + 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Deterministic,
    Poisson,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Deterministic => "deterministic",
            SourceKind::Poisson => "poisson",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub n: u32,
    pub a: f64,
    pub source_kind: SourceKind,
    pub snr: f64,
    pub snr_compactified: f64,
}

/// SNR table over mean particle numbers `n_range` (inclusive) and efficiencies.
/// A deterministic source with `a = 1` yields an infinite SNR row.
pub fn snr_curve(kind: SourceKind, efficiencies: &[f64], n_range: std::ops::RangeInclusive<u32>) -> Result<Vec<SnrRow>> {
    if *n_range.start() == 0 || n_range.is_empty() {
        return Err(Error::InvalidArgument("n range must be non-empty and start at >= 1".into()));
    }
    let mut rows = Vec::new();
    for &a in efficiencies {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidArgument(format!("efficiency must be in (0, 1], got {a}")));
        }
        for n in n_range.clone() {
            let snr = match kind {
                SourceKind::Deterministic => match snr_deterministic(n, a) {
                    Err(Error::InfiniteSnr(_)) => f64::INFINITY,
                    r => r?,
                },
                SourceKind::Poisson => snr_poisson(n as f64, a)?,
            };
            rows.push(SnrRow { n, a, source_kind: kind, snr, snr_compactified: compactify(snr)? });
        }
    }
    Ok(rows)
}

/// CSV with header `n,a,source_kind,snr,snr_compactified`.
pub fn snr_csv(rows: &[SnrRow]) -> String {
    let mut out = String::from("n,a,source_kind,snr,snr_compactified\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            r.a,
            r.source_kind.name(),
            fmt_float(r.snr),
            fmt_float(r.snr_compactified)
        ));
    }
    out
}

fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}
