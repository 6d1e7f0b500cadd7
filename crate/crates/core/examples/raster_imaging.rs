//! Raster-scan images of a disc aperture with a deterministic and a
//! Poissonian source, written as plain PGM, plus the empirical SNR over
//! repeated frames.
//!
//! Usage: `cargo run --release --example raster_imaging [output-dir]`

use std::path::PathBuf;

use ionprobe::imaging::write_image;
use ionprobe::rng::derive_seed;
use ionprobe::{empirical_snr, raster_scan, DetectorSpec, ImageFormat, Mask, ScanConfig, SourceSpec};

fn main() -> ionprobe::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "raster_out".into()));
    std::fs::create_dir_all(&out)?;

    let mask = Mask::Disc { cx: 0.0, cy: 0.0, radius: 400.0 };
    let scan = ScanConfig {
        origin: [-600.0, -600.0],
        pixel_size: [50.0, 50.0],
        pixels: [25, 25],
        ions_per_pixel: 1,
        beam_sigma: 25.0,
        beam_offsets: 64,
    };
    let det = DetectorSpec::new(0.96, 0.0)?;

    for (name, source) in [("deterministic", SourceSpec::Deterministic { n: 1 }), ("poisson", SourceSpec::Poissonian { lambda: 1.0 })] {
        let img = raster_scan(&mask, &scan, &source, &det, 11)?;
        let path = out.join(format!("{name}.pgm"));
        write_image(&img, ImageFormat::Pgm, &path)?;
        let open = img.counts.iter().filter(|&&c| c > 0).count();
        println!("{name:13} {} of {} pixels registered an ion -> {}", open, img.counts.len(), path.display());

        // Repeated frames of the open center give the per-pixel SNR.
        let frames: Vec<_> = (0..200)
            .map(|k| raster_scan(&mask, &scan, &source, &det, derive_seed(11, k)))
            .collect::<Result<_, _>>()?;
        let region: Vec<_> = (10..15).flat_map(|iy| (10..15).map(move |ix| (ix, iy))).collect();
        let snr = empirical_snr(&frames, &region)?;
        println!("{name:13} center mean {:.3}, std {:.3}, SNR {:.2}", snr.mean, snr.std, snr.snr);
    }
    Ok(())
}
