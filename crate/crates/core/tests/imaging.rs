mod common;

use ionprobe::imaging::{read_image, write_image};
use ionprobe::rng::derive_seed;
use ionprobe::{
    empirical_snr, mask_transmission, raster_scan, Bitmap, DetectorSpec, Error, Image, ImageFormat, Mask, ScanConfig,
    SourceSpec,
};
use proptest::prelude::*;

fn scan(origin: [f64; 2], px: f64, n: [usize; 2], sigma: f64) -> ScanConfig {
    ScanConfig { origin, pixel_size: [px, px], pixels: n, ions_per_pixel: 1, beam_sigma: sigma, beam_offsets: 64 }
}

fn one_ion() -> SourceSpec {
    SourceSpec::Deterministic { n: 1 }
}

#[test]
fn open_mask_counts_every_ion() {
    let mask = Mask::Rect { x0: -1e9, y0: -1e9, x1: 1e9, y1: 1e9 };
    let img = raster_scan(&mask, &scan([0.0, 0.0], 25.0, [8, 6], 20.0), &one_ion(), &DetectorSpec::ideal(), 1).unwrap();
    assert!(img.counts.iter().all(|&c| c == 1));
}

#[test]
fn point_beam_reproduces_mask_indicators() {
    let masks = [
        Mask::Edge { x0: 0.0 },
        Mask::Disc { cx: 10.0, cy: -5.0, radius: 60.0 },
        Mask::Rect { x0: -30.0, y0: -10.0, x1: 40.0, y1: 55.0 },
        Mask::Bitmap(Bitmap { width: 3, height: 2, pitch: 40.0, maxval: 1, levels: vec![1, 0, 1, 0, 1, 1] }),
    ];
    for mask in masks {
        let sc = scan([-97.5, -92.5], 12.5, [17, 16], 0.0);
        let img = raster_scan(&mask, &sc, &one_ion(), &DetectorSpec::ideal(), 9).unwrap();
        for iy in 0..16 {
            for ix in 0..17 {
                let (x, y) = sc.pixel_center(ix, iy);
                assert_eq!(img.get(ix, iy) as f64, mask_transmission(&mask, x, y), "{mask:?} at ({x}, {y})");
            }
        }
    }
    // The edge image is an exact step at x = 0.
    let sc = scan([-50.0, 0.0], 10.0, [11, 3], 0.0);
    let img = raster_scan(&Mask::Edge { x0: 0.0 }, &sc, &one_ion(), &DetectorSpec::ideal(), 2).unwrap();
    for iy in 0..3 {
        let row: Vec<u32> = (0..11).map(|ix| img.get(ix, iy)).collect();
        assert_eq!(row, vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }
}

#[test]
fn disc_interior_counts_follow_efficiency() {
    // 150 nm holes imaged at 25 nm pixels; the interior pixels are those
    // whose beam sits at least 10 beam widths inside the rim.
    let mask = Mask::Disc { cx: 0.0, cy: 0.0, radius: 75.0 };
    let sc = scan([-100.0, -100.0], 25.0, [9, 9], 5.0);
    let det = DetectorSpec::new(0.95, 0.0).unwrap();
    let mut counts = Vec::new();
    for seed in 0..100u64 {
        let img = raster_scan(&mask, &sc, &one_ion(), &det, seed).unwrap();
        for iy in 0..9 {
            for ix in 0..9 {
                let (x, y) = sc.pixel_center(ix, iy);
                if x.hypot(y) <= 25.0 {
                    counts.push(img.get(ix, iy) as f64);
                }
            }
        }
    }
    let (m, _) = common::mean_std(&counts);
    let se = (0.95 * 0.05 / counts.len() as f64).sqrt();
    assert!((m - 0.95).abs() <= 3.0 * se, "{m} over {} pixels", counts.len());
}

#[test]
fn same_seed_same_bytes() {
    let mask = Mask::Bitmap(Bitmap { width: 4, height: 4, pitch: 25.0, maxval: 3, levels: (0..16).map(|v| v % 4).collect() });
    let sc = ScanConfig { ions_per_pixel: 5, ..scan([0.0, 0.0], 10.0, [12, 12], 15.0) };
    let dir = tempfile::tempdir().unwrap();
    for fmt in [ImageFormat::Pgm, ImageFormat::Csv] {
        let a = raster_scan(&mask, &sc, &SourceSpec::Poissonian { lambda: 2.0 }, &DetectorSpec::new(0.8, 0.01).unwrap(), 42).unwrap();
        let b = raster_scan(&mask, &sc, &SourceSpec::Poissonian { lambda: 2.0 }, &DetectorSpec::new(0.8, 0.01).unwrap(), 42).unwrap();
        let (pa, pb) = (dir.path().join("a"), dir.path().join("b"));
        write_image(&a, fmt, &pa).unwrap();
        write_image(&b, fmt, &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        let c = raster_scan(&mask, &sc, &SourceSpec::Poissonian { lambda: 2.0 }, &DetectorSpec::new(0.8, 0.01).unwrap(), 43).unwrap();
        assert_ne!(a.counts, c.counts);
    }
}

#[test]
fn pixel_streams_do_not_depend_on_evaluation_order() {
    // Pixel p draws from stream p alone: a sub-scan whose pixel indices
    // coincide reproduces the same counts.
    let mask = Mask::Disc { cx: 0.0, cy: 0.0, radius: 40.0 };
    let sc = ScanConfig { ions_per_pixel: 3, ..scan([-50.0, -50.0], 10.0, [11, 11], 8.0) };
    let det = DetectorSpec::new(0.9, 0.05).unwrap();
    let full = raster_scan(&mask, &sc, &one_ion(), &det, 5).unwrap();
    let top = raster_scan(&mask, &ScanConfig { pixels: [11, 4], ..sc.clone() }, &one_ion(), &det, 5).unwrap();
    assert_eq!(&full.counts[..44], &top.counts[..]);
}

#[test]
fn minimal_files() {
    let img = Image::new(1, 1, vec![1]).unwrap();
    let pgm = img.to_pgm();
    assert!(pgm.starts_with("P2\n#"));
    assert!(pgm.ends_with("\n1 1\n1\n1\n"));
    assert_eq!(Image::new(2, 2, vec![0, 1, 1, 0]).unwrap().to_csv(), "0,1\n1,0\n");
    let empty = Image::new(2, 1, vec![0, 0]).unwrap().to_pgm();
    assert!(empty.contains("\n2 1\n1\n"));
}

#[test]
fn snr_sentinels_and_mismatches() {
    let a = Image::new(2, 2, vec![3, 3, 3, 3]).unwrap();
    let est = empirical_snr(&[a.clone(), a.clone()], &[(0, 0), (1, 1)]).unwrap();
    assert!(est.snr.is_infinite());
    let b = Image::new(1, 2, vec![3, 3]).unwrap();
    assert!(matches!(empirical_snr(&[a.clone(), b], &[(0, 0)]), Err(Error::MismatchedImages(_))));
    assert!(empirical_snr(std::slice::from_ref(&a), &[(0, 0)]).is_err());
    assert!(empirical_snr(&[a.clone(), a.clone()], &[]).is_err());
    let sc = scan([0.0, 0.0], 1.0, [1, 1], 0.0);
    let open = Mask::Edge { x0: -10.0 };
    let x = raster_scan(&open, &sc, &one_ion(), &DetectorSpec::new(0.5, 0.0).unwrap(), 1).unwrap();
    let y = raster_scan(&open, &sc, &one_ion(), &DetectorSpec::new(0.6, 0.0).unwrap(), 2).unwrap();
    assert!(matches!(empirical_snr(&[x, y], &[(0, 0)]), Err(Error::MismatchedImages(_))));
}

fn frames(source: SourceSpec, a: f64, n: u64, seed: u64) -> Vec<Image> {
    let sc = scan([0.0, 0.0], 25.0, [1, 1], 0.0);
    let det = DetectorSpec::new(a, 0.0).unwrap();
    (0..n).map(|k| raster_scan(&Mask::Edge { x0: -1e6 }, &sc, &source, &det, derive_seed(seed, k)).unwrap()).collect()
}

#[test]
fn empirical_snr_tracks_the_analytic_values() {
    let det = empirical_snr(&frames(one_ion(), 0.96, 10_000, 1), &[(0, 0)]).unwrap();
    assert!((det.snr - 4.899).abs() <= 0.05 * 4.899, "{}", det.snr);
    let poi = empirical_snr(&frames(SourceSpec::Poissonian { lambda: 1.0 }, 1.0, 10_000, 2), &[(0, 0)]).unwrap();
    assert!((poi.snr - 1.0).abs() <= 0.05, "{}", poi.snr);
    for a in [0.5, 0.9] {
        let d = empirical_snr(&frames(one_ion(), a, 10_000, 3), &[(0, 0)]).unwrap();
        let p = empirical_snr(&frames(SourceSpec::Poissonian { lambda: 1.0 }, a, 10_000, 4), &[(0, 0)]).unwrap();
        assert!(d.snr > p.snr, "a = {a}: {} vs {}", d.snr, p.snr);
    }
}

fn image_strategy() -> impl Strategy<Value = Image> {
    (1usize..12, 1usize..12).prop_flat_map(|(nx, ny)| {
        prop::collection::vec(0u32..1000, nx * ny).prop_map(move |c| Image::new(nx, ny, c).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn files_round_trip(img in image_strategy(), csv: bool) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        let fmt = if csv { ImageFormat::Csv } else { ImageFormat::Pgm };
        write_image(&img, fmt, &path).unwrap();
        let back = read_image(fmt, &path).unwrap();
        prop_assert!(back.same_pixels(&img));
        prop_assert_eq!(back.counts, img.counts);
    }

    #[test]
    fn counts_respect_the_ion_budget(seed: u64, ions in 1u32..6, dark in 0.0..0.5f64, a in 0.0..=1.0f64) {
        let sc = ScanConfig { ions_per_pixel: ions, ..scan([-20.0, -20.0], 10.0, [5, 5], 6.0) };
        let img = raster_scan(&Mask::Disc { cx: 0.0, cy: 0.0, radius: 15.0 }, &sc, &SourceSpec::Deterministic { n: 2 },
            &DetectorSpec::new(a, dark).unwrap(), seed).unwrap();
        // Two particles plus at most one dark count per extraction.
        prop_assert!(img.counts.iter().all(|&c| c <= 3 * ions));
        let meta = img.meta.as_ref().unwrap();
        prop_assert_eq!(meta.seed, seed);
        prop_assert_eq!(&meta.scan, &sc);
    }
}
