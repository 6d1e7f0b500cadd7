//! Counting-statistics SNR of deterministic and Poissonian sources, analytic
//! and simulated.

use ionprobe::rng::seeded;
use ionprobe::source::snr_csv;
use ionprobe::{compactify, sample_probe, snr_curve, snr_deterministic, snr_poisson, DetectorSpec, SourceKind, SourceSpec};

fn simulated_snr(source: SourceSpec, a: f64, frames: usize, seed: u64) -> f64 {
    let det = DetectorSpec::new(a, 0.0).expect("valid detector");
    let mut rng = seeded(seed);
    let counts: Vec<f64> = (0..frames).map(|_| sample_probe(&source, &det, 1.0, &mut rng).detected as f64).collect();
    let mean = counts.iter().sum::<f64>() / frames as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (frames as f64 - 1.0);
    mean / var.sqrt()
}

fn main() -> ionprobe::Result<()> {
    let det = snr_deterministic(1, 0.96)?;
    println!("single ion, a = 0.96: SNR {det:.5} (compactified {:.4})", compactify(det)?);
    println!("Poisson, lambda = 1, a = 0.96: SNR {:.5}", snr_poisson(1.0, 0.96)?);
    println!("deterministic n = 4, a = 0.5 vs Poisson lambda = 4, a = 1: {} vs {}", snr_deterministic(4, 0.5)?, snr_poisson(4.0, 1.0)?);

    println!(
        "simulated, 10^4 frames: deterministic {:.3}, Poisson {:.3}",
        simulated_snr(SourceSpec::Deterministic { n: 1 }, 0.96, 10_000, 1),
        simulated_snr(SourceSpec::Poissonian { lambda: 1.0 }, 1.0, 10_000, 2)
    );

    let mut rows = snr_curve(SourceKind::Deterministic, &[0.5, 0.9, 0.96], 1..=5)?;
    rows.extend(snr_curve(SourceKind::Poisson, &[0.5, 0.9, 0.96], 1..=5)?);
    print!("{}", snr_csv(&rows));
    Ok(())
}
