//! Raster-scan transmission imaging.
//!
//! The sample is stepped across the beam in row-major order starting at the
//! scan origin. At every pixel center a fixed number of extractions is fired;
//! detected counts are summed per pixel. Each pixel draws from its own random
//! stream (stream index = pixel index), so the image does not depend on the
//! order in which pixels are simulated.

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{disc_containment, mask_transmission};
use crate::rng;
use crate::source::{sample_probe, DetectorSpec, SourceSpec};
use crate::special::erfc;

/// Gray-level transmission map; pixel `(i, j)` covers
/// `[i·pitch, (i+1)·pitch) × [j·pitch, (j+1)·pitch)` in nm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bitmap {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    pub maxval: u16,
    /// Row-major, `height` rows of `width` levels.
    pub levels: Vec<u16>,
}

impl Bitmap {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("bitmap dimensions must be >= 1".into()));
        }
        if !(self.pitch > 0.0) || !self.pitch.is_finite() {
            return Err(Error::InvalidArgument("bitmap pitch must be > 0".into()));
        }
        if self.maxval == 0 {
            return Err(Error::InvalidArgument("bitmap maxval must be >= 1".into()));
        }
        if self.levels.len() != self.width * self.height {
            return Err(Error::InvalidArgument(format!(
                "bitmap has {} levels, expected {}",
                self.levels.len(),
                self.width * self.height
            )));
        }
        if self.levels.iter().any(|&l| l > self.maxval) {
            return Err(Error::InvalidArgument("bitmap level exceeds maxval".into()));
        }
        Ok(())
    }

    /// Nearest-pixel gray level scaled to `[0, 1]`; zero outside the bitmap.
    pub fn transmission_at(&self, x: f64, y: f64) -> f64 {
        let (fi, fj) = (x / self.pitch, y / self.pitch);
        if !(fi >= 0.0 && fj >= 0.0) {
            return 0.0;
        }
        let (i, j) = (fi.floor() as usize, fj.floor() as usize);
        if i >= self.width || j >= self.height {
            return 0.0;
        }
        self.levels[j * self.width + i] as f64 / self.maxval as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mask {
    /// Opaque for `x <= x0`, open beyond.
    Edge { x0: f64 },
    /// Open disc.
    Disc { cx: f64, cy: f64, radius: f64 },
    /// Open axis-aligned rectangle.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Bitmap(Bitmap),
}

impl Mask {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Mask::Edge { x0 } if !x0.is_finite() => Err(Error::InvalidArgument("edge position must be finite".into())),
            Mask::Disc { cx, cy, radius } if !finite(&[*cx, *cy, *radius]) || *radius <= 0.0 => {
                Err(Error::InvalidArgument("disc needs finite center and radius > 0".into()))
            }
            Mask::Rect { x0, y0, x1, y1 } if !finite(&[*x0, *y0, *x1, *y1]) || x1 < x0 || y1 < y0 => {
                Err(Error::InvalidArgument("rect needs finite corners with x0 <= x1, y0 <= y1".into()))
            }
            Mask::Bitmap(b) => b.validate(),
            _ => Ok(()),
        }
    }
}

fn default_offsets() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Center of pixel (0, 0), nm.
    pub origin: [f64; 2],
    pub pixel_size: [f64; 2],
    pub pixels: [usize; 2],
    pub ions_per_pixel: u32,
    /// 1σ beam radius, nm. Zero samples the mask at the pixel center.
    pub beam_sigma: f64,
    /// Beam offsets drawn per particle when blurring bitmap masks.
    #[serde(default = "default_offsets")]
    pub beam_offsets: usize,
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_size[0] > 0.0 && self.pixel_size[1] > 0.0) {
            return Err(Error::InvalidArgument("pixel sizes must be > 0".into()));
        }
        if self.pixels[0] == 0 || self.pixels[1] == 0 {
            return Err(Error::InvalidArgument("pixel counts must be >= 1".into()));
        }
        if self.ions_per_pixel == 0 {
            return Err(Error::InvalidArgument("ions_per_pixel must be >= 1".into()));
        }
        if !(self.beam_sigma >= 0.0) || !self.beam_sigma.is_finite() {
            return Err(Error::InvalidArgument("beam_sigma must be >= 0".into()));
        }
        if self.beam_offsets == 0 {
            return Err(Error::InvalidArgument("beam_offsets must be >= 1".into()));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn pixel_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin[0] + ix as f64 * self.pixel_size[0],
            self.origin[1] + iy as f64 * self.pixel_size[1],
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub mask: Mask,
    pub scan: ScanConfig,
    pub seed: u64,
    pub source: SourceSpec,
    pub detector: DetectorSpec,
    pub scan_order: String,
    /// Echo of the run configuration that produced the image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// Detected counts, `ny` rows of `nx` pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub nx: usize,
    pub ny: usize,
    pub counts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ImageMeta>,
}

impl Image {
    pub fn new(nx: usize, ny: usize, counts: Vec<u32>) -> Result<Self> {
        if nx == 0 || ny == 0 || counts.len() != nx * ny {
            return Err(Error::InvalidArgument(format!("{} counts do not fill {nx}x{ny}", counts.len())));
        }
        Ok(Image { nx, ny, counts, meta: None })
    }

    pub fn get(&self, ix: usize, iy: usize) -> u32 {
        self.counts[iy * self.nx + ix]
    }

    /// Same dimensions and counts, ignoring metadata.
    pub fn same_pixels(&self, other: &Image) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.counts == other.counts
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.counts.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut counts = Vec::new();
        let mut nx = None;
        let mut ny = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: Vec<u32> = line
                .split(',')
                .map(|v| v.trim().parse::<u32>().map_err(|e| Error::Parse(format!("csv value `{v}`: {e}"))))
                .collect::<Result<_>>()?;
            match nx {
                None => nx = Some(row.len()),
                Some(n) if n != row.len() => return Err(Error::Parse("ragged csv rows".into())),
                _ => {}
            }
            counts.extend(row);
            ny += 1;
        }
        Image::new(nx.unwrap_or(0), ny, counts)
    }

    /// Plain PGM (`P2`) with metadata in comment lines. `maxval` is the
    /// largest count, at least 1.
    pub fn to_pgm(&self) -> String {
        let maxval = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut s = String::from("P2\n");
        match &self.meta {
            Some(meta) => {
                let json = serde_json::to_string(meta).expect("metadata serializes");
                let _ = writeln!(s, "# ionprobe {json}");
            }
            None => s.push_str("# ionprobe\n"),
        }
        let _ = writeln!(s, "{} {}", self.nx, self.ny);
        let _ = writeln!(s, "{maxval}");
        for row in self.counts.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_pgm(text: &str) -> Result<Self> {
        let mut meta = None;
        let mut tokens = Vec::new();
        for line in text.lines() {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(json) = comment.trim().strip_prefix("ionprobe ") {
                    meta = Some(serde_json::from_str(json)?);
                }
                continue;
            }
            tokens.extend(line.split_whitespace());
        }
        if tokens.first() != Some(&"P2") {
            return Err(Error::Parse("not a plain PGM (P2) file".into()));
        }
        let num = |t: &str| t.parse::<usize>().map_err(|e| Error::Parse(format!("pgm token `{t}`: {e}")));
        if tokens.len() < 4 {
            return Err(Error::Parse("truncated pgm header".into()));
        }
        let (nx, ny, _maxval) = (num(tokens[1])?, num(tokens[2])?, num(tokens[3])?);
        let counts: Vec<u32> = tokens[4..]
            .iter()
            .map(|t| t.parse::<u32>().map_err(|e| Error::Parse(format!("pgm value `{t}`: {e}"))))
            .collect::<Result<_>>()?;
        let mut img = Image::new(nx, ny, counts)?;
        img.meta = meta;
        Ok(img)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Csv,
    Pgm,
}

pub fn write_image(image: &Image, format: ImageFormat, path: &Path) -> Result<()> {
    let text = match format {
        ImageFormat::Csv => image.to_csv(),
        ImageFormat::Pgm => image.to_pgm(),
    };
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_image(format: ImageFormat, path: &Path) -> Result<Image> {
    let text = std::fs::read_to_string(path)?;
    match format {
        ImageFormat::Csv => Image::from_csv(&text),
        ImageFormat::Pgm => Image::from_pgm(&text),
    }
}

/// Per-particle transmission probability with the beam centered at `(x, y)`.
/// Bitmaps need random beam offsets; the other masks have closed forms.
fn blurred_transmission<R: Rng>(mask: &Mask, x: f64, y: f64, scan: &ScanConfig, rng: &mut R) -> f64 {
    let s = scan.beam_sigma;
    if s == 0.0 {
        return mask_transmission(mask, x, y);
    }
    match mask {
        Mask::Edge { x0 } => 0.5 * erfc((x0 - x) / (s * SQRT_2)),
        Mask::Disc { cx, cy, radius } => disc_containment((x - cx).hypot(y - cy), *radius, s).unwrap_or(0.0),
        Mask::Rect { x0, y0, x1, y1 } => {
            let band = |lo: f64, hi: f64, c: f64| 0.5 * (erfc((lo - c) / (s * SQRT_2)) - erfc((hi - c) / (s * SQRT_2)));
            band(*x0, *x1, x) * band(*y0, *y1, y)
        }
        Mask::Bitmap(_) => {
            let n = scan.beam_offsets;
            let sum: f64 = (0..n)
                .map(|_| {
                    let dx: f64 = StandardNormal.sample(rng);
                    let dy: f64 = StandardNormal.sample(rng);
                    mask_transmission(mask, x + s * dx, y + s * dy)
                })
                .sum();
            sum / n as f64
        }
    }
}

/// Simulates a raster scan of `mask`.
pub fn raster_scan(mask: &Mask, scan: &ScanConfig, source: &SourceSpec, det: &DetectorSpec, seed: u64) -> Result<Image> {
    mask.validate()?;
    scan.validate()?;
    source.validate()?;
    det.validate()?;
    let [nx, ny] = scan.pixels;
    let counts: Vec<u32> = (0..nx * ny)
        .into_par_iter()
        .map(|p| {
            let (ix, iy) = (p % nx, p / nx);
            let (x, y) = scan.pixel_center(ix, iy);
            let mut rng = rng::stream(seed, p as u64);
            let mut total = 0u64;
            for _ in 0..scan.ions_per_pixel {
                let t = blurred_transmission(mask, x, y, scan, &mut rng);
                total += sample_probe(source, det, t, &mut rng).detected;
            }
            total.min(u32::MAX as u64) as u32
        })
        .collect();
    let mut img = Image::new(nx, ny, counts)?;
    img.meta = Some(ImageMeta {
        mask: mask.clone(),
        scan: scan.clone(),
        seed,
        source: *source,
        detector: *det,
        scan_order: "row-major from origin; pixel index = iy * nx + ix".into(),
        config: None,
    });
    Ok(img)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub mean: f64,
    pub std: f64,
    /// `mean / std`; infinite when `std` is zero.
    pub snr: f64,
}

/// Pooled mean, standard deviation and SNR of the counts in `region` across
/// frames.
pub fn empirical_snr(images: &[Image], region: &[(usize, usize)]) -> Result<SnrEstimate> {
    if images.len() < 2 {
        return Err(Error::InvalidArgument("need at least two frames".into()));
    }
    if region.is_empty() {
        return Err(Error::InvalidArgument("region is empty".into()));
    }
    let first = &images[0];
    for img in &images[1..] {
        if img.nx != first.nx || img.ny != first.ny {
            return Err(Error::MismatchedImages("frame dimensions differ".into()));
        }
        let scan = |i: &Image| i.meta.as_ref().map(|m| (m.scan.clone(), m.source, m.detector));
        if scan(img) != scan(first) {
            return Err(Error::MismatchedImages("scan, source or detector settings differ".into()));
        }
    }
    if region.iter().any(|&(ix, iy)| ix >= first.nx || iy >= first.ny) {
        return Err(Error::InvalidArgument("region pixel outside the image".into()));
    }
    let values: Vec<f64> = images
        .iter()
        .flat_map(|img| region.iter().map(move |&(ix, iy)| img.get(ix, iy) as f64))
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    let snr = if std == 0.0 { f64::INFINITY } else { mean / std };
    Ok(SnrEstimate { mean, std, snr })
}
