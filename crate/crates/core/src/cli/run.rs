//! Executes validated plans and writes their artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{AdaptivePlan, FitPlan, Plan, Prepared, RasterPlan, SnrPlan};
use crate::design::{simulate_experiment, ExperimentError, RunLog};
use crate::error::Error;
use crate::estimation::{mle_fit, Dataset, FitOptions};
use crate::imaging::{empirical_snr, raster_scan, write_image, ImageFormat};
use crate::rng::derive_seed;
use crate::source::{snr_csv, snr_curve};

/// A failed run: the library error plus, for adaptive runs, the iteration.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub iteration: Option<usize>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure { error, iteration: None }
    }
}

impl From<std::io::Error> for RunFailure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

/// Runs `prepared`, writing artifacts into `out_dir`. Returns the summary
/// JSON, which is also written to `summary.json`.
pub fn execute(prepared: &Prepared, out_dir: &Path) -> Result<Value, RunFailure> {
    fs::create_dir_all(out_dir)?;
    let summary = match &prepared.plan {
        Plan::ProfileEdge(p) | Plan::LocateHole(p) => adaptive(&prepared.mode, p, &prepared.echo, out_dir)?,
        Plan::Raster(p) => raster(p, &prepared.echo, out_dir)?,
        Plan::Snr(p) => snr(p, out_dir)?,
        Plan::Fit(p) => fit(p, out_dir)?,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn write_json(path: &Path, value: &Value) -> Result<(), RunFailure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_log(log: &RunLog, path: &Path) -> Result<(), RunFailure> {
    fs::write(path, log.to_jsonl())?;
    Ok(())
}

fn adaptive(mode: &str, p: &AdaptivePlan, echo: &Value, out_dir: &Path) -> Result<Value, RunFailure> {
    let model = p.model.build()?;
    let log_path = out_dir.join("run.jsonl");
    let result = simulate_experiment(&p.prior, model.as_ref(), &p.window, &p.stop, &p.truth, p.source, p.dark_prob, p.seed);
    let mut run = match result {
        Ok(run) => run,
        Err(ExperimentError { iteration, source, mut log }) => {
            // Keep the partial log for post-mortems.
            log.header.config = Some(echo.clone());
            write_log(&log, &log_path)?;
            return Err(RunFailure { error: source, iteration: Some(iteration) });
        }
    };
    run.log.header.config = Some(echo.clone());
    write_log(&run.log, &log_path)?;

    let summary = run.posterior.summarize();
    let probes = run.log.records.len();
    let stopped_by = if probes >= p.stop.max_probes { "max_probes" } else { "target_std" };
    let mut files = vec!["run.jsonl".to_string()];
    if p.save_posterior {
        fs::write(out_dir.join("posterior.json"), run.posterior.to_json()?)?;
        files.push("posterior.json".into());
    }
    Ok(json!({
        "mode": mode,
        "seed": p.seed,
        "probes": probes,
        "parameters": summary.axes,
        "interval_method": summary.interval_method,
        "stopped_by": stopped_by,
        "files": files,
    }))
}

fn frame_name(frames: usize, k: usize, format: ImageFormat) -> String {
    let ext = match format {
        ImageFormat::Pgm => "pgm",
        ImageFormat::Csv => "csv",
    };
    if frames == 1 {
        format!("image.{ext}")
    } else {
        format!("frame_{k:04}.{ext}")
    }
}

fn raster(p: &RasterPlan, echo: &Value, out_dir: &Path) -> Result<Value, RunFailure> {
    let started = Instant::now();
    let mut images = Vec::with_capacity(p.frames);
    let mut files = Vec::with_capacity(p.frames);
    for k in 0..p.frames {
        let seed = if p.frames == 1 { p.seed } else { derive_seed(p.seed, k as u64) };
        let mut img = raster_scan(&p.mask, &p.scan, &p.source, &p.detector, seed)?;
        if let Some(meta) = img.meta.as_mut() {
            meta.config = Some(echo.clone());
        }
        let name = frame_name(p.frames, k, p.format);
        write_image(&img, p.format, &out_dir.join(&name))?;
        files.push(name);
        if p.snr_region.is_some() {
            images.push(img);
        }
    }
    let wall_time_s = started.elapsed().as_secs_f64();
    write_json(
        &out_dir.join("image.json"),
        &json!({ "config": echo, "seed": p.seed, "wall_time_s": wall_time_s, "files": files }),
    )?;

    let mut summary = json!({
        "mode": "raster",
        "seed": p.seed,
        "frames": p.frames,
        "pixels": p.scan.pixels,
        "files": files,
    });
    if let Some([x0, y0, x1, y1]) = p.snr_region {
        let region: Vec<(usize, usize)> = (y0..=y1).flat_map(|iy| (x0..=x1).map(move |ix| (ix, iy))).collect();
        let est = empirical_snr(&images, &region)?;
        summary["snr"] = json!({ "region": [x0, y0, x1, y1], "mean": est.mean, "std": est.std, "snr": finite_or_string(est.snr) });
    }
    Ok(summary)
}

fn finite_or_string(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

fn snr(p: &SnrPlan, out_dir: &Path) -> Result<Value, RunFailure> {
    let mut rows = Vec::new();
    for &kind in &p.kinds {
        rows.extend(snr_curve(kind, &p.efficiencies, p.n_range.0..=p.n_range.1)?);
    }
    fs::write(out_dir.join("snr.csv"), snr_csv(&rows))?;
    Ok(json!({
        "mode": "snr",
        "rows": rows.len(),
        "source_kinds": p.kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
        "files": ["snr.csv"],
    }))
}

fn fit(p: &FitPlan, out_dir: &Path) -> Result<Value, RunFailure> {
    let model = p.model.build()?;
    let data = Dataset::new(p.log.dataset());
    let opts = FitOptions { restarts: p.restarts, tolerance: p.tolerance, ..FitOptions::default() };
    let result = mle_fit(&data, model.as_ref(), &p.theta0, &p.bounds, &opts)?;
    write_json(&out_dir.join("fit.json"), &serde_json::to_value(&result).map_err(Error::from)?)?;
    let parameters: Vec<Value> = result
        .parameters
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let se = result.std_errors[k];
            json!({
                "name": name,
                "estimate": result.theta_hat[k],
                "std_error": se,
                "ci95": se.map(|s| (result.theta_hat[k] - 1.96 * s, result.theta_hat[k] + 1.96 * s)),
                "at_bound": result.at_bound[k],
            })
        })
        .collect();
    Ok(json!({
        "mode": "fit",
        "seed": p.log.header.seed,
        "input": PathBuf::from(&p.input),
        "probes": data.len(),
        "parameters": parameters,
        "interval_method": "normal approximation from the observed information",
        "log_likelihood": result.log_likelihood,
        "converged": result.converged,
        "files": ["fit.json"],
    }))
}
