mod common;

use common::{axis, fn_model, simpson, trapezoid_weight};
use ionprobe::{make_grid, Design, EdgeModel, Error, Marginal, Outcome, ParameterGrid, Prior};
use proptest::prelude::*;

fn unit_grid(count: usize) -> ParameterGrid {
    make_grid(vec![axis("t", 0.0, 1.0, count)], &Prior::Uniform).unwrap()
}

#[test]
fn uniform_unit_interval_is_unit_density() {
    let g = unit_grid(11);
    assert!(g.weights().iter().all(|&w| (w - 1.0).abs() < 1e-15));
    assert!((g.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn huge_gaussian_is_flat() {
    let g = make_grid(vec![axis("t", 0.0, 1.0, 11)], &Prior::gaussian(&[(0.5, 1e6)])).unwrap();
    let w = g.weights();
    let max = w.iter().cloned().fold(f64::MIN, f64::max);
    let min = w.iter().cloned().fold(f64::MAX, f64::min);
    assert!((max - min) / max < 1e-6);
}

#[test]
fn gaussian_product_matches_node_evaluation() {
    let g = make_grid(vec![axis("x", 0.0, 1.0, 11), axis("y", 0.0, 1.0, 11)], &Prior::gaussian(&[(0.5, 0.1), (0.5, 0.1)])).unwrap();
    // Oracle: unnormalized product at every node, normalized with trapezoid volumes.
    let h = 0.1;
    let mut raw = vec![0.0; 121];
    let mut mass = 0.0;
    for i in 0..11 {
        for j in 0..11 {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let v = (-(x - 0.5f64).powi(2) / 0.02).exp() * (-(y - 0.5f64).powi(2) / 0.02).exp();
            raw[i * 11 + j] = v;
            mass += v * trapezoid_weight(h, i, 11) * trapezoid_weight(h, j, 11);
        }
    }
    for (k, w) in g.weights().iter().enumerate() {
        assert!((w - raw[k] / mass).abs() <= 1e-12 * (raw[k] / mass).max(1e-300), "node {k}");
    }
    let argmax = g.weights().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(argmax, 5 * 11 + 5);
}

#[test]
fn bad_axes_and_priors_are_rejected() {
    assert!(ionprobe::ParameterAxis::new("t", 1.0, 1.0, 5).is_err());
    assert!(ionprobe::ParameterAxis::new("t", 0.0, 1.0, 1).is_err());
    assert!(make_grid(vec![axis("t", 0.0, 1.0, 5)], &Prior::gaussian(&[(0.5, 0.0)])).is_err());
    assert!(make_grid(vec![axis("t", 0.0, 1.0, 5)], &Prior::gaussian(&[(0.5, -1.0)])).is_err());
}

#[test]
fn two_node_update_has_likelihood_ratio() {
    let g = unit_grid(2);
    let m = fn_model(1, 1, |t: &[f64], _: &Design| if t[0] == 0.0 { 0.8 } else { 0.4 });
    let post = g.bayes_update(&m, &Design::Scalar(0.0), Outcome::Transmitted).unwrap();
    let w = post.weights();
    assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
    assert!((post.total_mass() - 1.0).abs() < 1e-12);
    // The input is untouched.
    assert_eq!(g.weights(), &[1.0, 1.0]);
}

#[test]
fn constant_likelihood_is_a_fixed_point() {
    let g = make_grid(vec![axis("x", -1.0, 3.0, 9), axis("y", 0.0, 2.0, 7)], &Prior::gaussian(&[(1.0, 0.7), (0.5, 2.0)])).unwrap();
    let m = fn_model(2, 1, |_: &[f64], _: &Design| 0.3);
    for y in [Outcome::Blocked, Outcome::Transmitted] {
        let post = g.bayes_update(&m, &Design::Scalar(0.0), y).unwrap();
        for (a, b) in post.weights().iter().zip(g.weights()) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }
}

fn edge_grid() -> ParameterGrid {
    make_grid(vec![axis("x0", -5.0, 5.0, 5), axis("sigma", 5.0, 15.0, 3), axis("a", 0.9, 1.0, 3)], &Prior::Uniform).unwrap()
}

#[test]
fn edge_far_open_side_only_reweights_efficiency() {
    let g = edge_grid();
    let xi = -1e4;
    let post = g.bayes_update(&EdgeModel, &Design::Scalar(xi), Outcome::Transmitted).unwrap();
    // Per-node arithmetic: w * p(1) / Σ w * p(1) * vol.
    let mut un = Vec::new();
    let mut mass = 0.0;
    for n in 0..g.len() {
        let t = g.node_theta(n);
        let p = t[2] * 0.5 * libm::erfc((xi - t[0]) / (t[1] * std::f64::consts::SQRT_2));
        un.push(g.weights()[n] * p);
        mass += g.weights()[n] * p * g.node_volume(n);
    }
    for n in 0..g.len() {
        assert!((post.weights()[n] - un[n] / mass).abs() < 1e-12);
        let t = g.node_theta(n);
        // Uniform prior on the box, so the posterior is proportional to a.
        assert!((post.weights()[n] - t[2] / 0.95 / 100.0 / 0.1 * 1.0).abs() < 1e-9);
    }
}

#[test]
fn marginal_evidence_examples() {
    let g = unit_grid(11);
    let m = fn_model(1, 1, |_: &[f64], _: &Design| 0.3);
    assert!((g.marginal_evidence(&m, &Design::Scalar(0.0), Outcome::Transmitted).unwrap() - 0.3).abs() < 1e-12);

    let g2 = unit_grid(2);
    let m2 = fn_model(1, 1, |t: &[f64], _: &Design| if t[0] == 0.0 { 1.0 } else { 0.0 });
    assert!((g2.marginal_evidence(&m2, &Design::Scalar(0.0), Outcome::Transmitted).unwrap() - 0.5).abs() < 1e-15);

    // Edge model on a three-node sigma axis: explicit sum.
    let g3 = make_grid(vec![axis("x0", -1.0, 1.0, 2), axis("sigma", 5.0, 15.0, 3), axis("a", 0.9, 1.0, 2)], &Prior::Uniform).unwrap();
    let xi = 3.0;
    let density = 1.0 / (2.0 * 10.0 * 0.1);
    let mut hand = 0.0;
    for (i, x0) in [-1.0, 1.0].into_iter().enumerate() {
        for (j, s) in [5.0, 10.0, 15.0].into_iter().enumerate() {
            for (k, a) in [0.9, 1.0].into_iter().enumerate() {
                let vol = trapezoid_weight(2.0, i, 2) * trapezoid_weight(5.0, j, 3) * trapezoid_weight(0.1, k, 2);
                hand += density * vol * a * 0.5 * libm::erfc((xi - x0) / (s * std::f64::consts::SQRT_2));
            }
        }
    }
    let ev = g3.marginal_evidence(&EdgeModel, &Design::Scalar(xi), Outcome::Transmitted).unwrap();
    assert!((ev - hand).abs() < 1e-12, "{ev} vs {hand}");
    let ev0 = g3.marginal_evidence(&EdgeModel, &Design::Scalar(xi), Outcome::Blocked).unwrap();
    assert!((ev + ev0 - 1.0).abs() < 1e-10);
}

#[test]
fn impossible_outcome_is_degenerate_evidence() {
    let g = unit_grid(5);
    let m = fn_model(1, 1, |_: &[f64], _: &Design| 1.0);
    match g.bayes_update(&m, &Design::Scalar(0.0), Outcome::Blocked) {
        Err(Error::DegenerateEvidence { outcome, .. }) => assert_eq!(outcome, 0),
        other => panic!("expected degenerate evidence, got {other:?}"),
    }
}

#[test]
fn entropy_of_uniform_intervals() {
    assert!(unit_grid(11).entropy().abs() < 1e-12);
    let g = make_grid(vec![axis("t", 0.0, 2.0, 11)], &Prior::Uniform).unwrap();
    assert!((g.entropy() - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn gaussian_entropy_matches_fine_quadrature() {
    let g = make_grid(vec![axis("t", 0.0, 1.0, 101)], &Prior::gaussian(&[(0.5, 0.1)])).unwrap();
    // Oracle at ten times the resolution.
    let dens = |x: f64| (-(x - 0.5f64).powi(2) / 0.02).exp();
    let z = simpson(0.0, 1.0, 1000, dens);
    let h = simpson(0.0, 1.0, 1000, |x| {
        let p = dens(x) / z;
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    });
    assert!((g.entropy() - h).abs() < 1e-3, "{} vs {h}", g.entropy());
}

#[test]
fn truncated_gaussian_moments() {
    let g = make_grid(vec![axis("t", 0.0, 1.0, 201)], &Prior::gaussian(&[(0.5, 0.1)])).unwrap();
    let s = g.summarize();
    let dens = |x: f64| (-(x - 0.5f64).powi(2) / 0.02).exp();
    let z = simpson(0.0, 1.0, 2000, dens);
    let mean = simpson(0.0, 1.0, 2000, |x| x * dens(x)) / z;
    let var = simpson(0.0, 1.0, 2000, |x| (x - mean).powi(2) * dens(x)) / z;
    assert!((s.axes[0].mean - mean).abs() < 1e-3);
    assert!((s.axes[0].std - var.sqrt()).abs() < 2e-3);
    assert!((s.axes[0].mean - 0.5).abs() < 1e-3);
    assert!((s.axes[0].std - 0.1).abs() < 2e-3);
    // Central 95% of an (almost untruncated) normal: ±1.96 std.
    let (lo, hi) = s.axes[0].ci95;
    assert!((lo - (0.5 - 1.959964 * 0.1)).abs() < 2e-3);
    assert!((hi - (0.5 + 1.959964 * 0.1)).abs() < 2e-3);
}

#[test]
fn symmetric_and_concentrated_summaries() {
    let g = make_grid(vec![axis("t", -3.0, 7.0, 41)], &Prior::gaussian(&[(2.0, 1.5)])).unwrap();
    assert!((g.summarize().axes[0].mean - 2.0).abs() < 0.25 / 100.0);

    let ax = axis("t", 0.0, 1.0, 11);
    let mut w = vec![0.0; 11];
    w[4] = 1.0;
    let d = ParameterGrid::from_unnormalized(vec![ax], w).unwrap();
    assert!(d.summarize().axes[0].std <= 0.1);
}

#[test]
fn snapshot_json_round_trips() {
    let g = edge_grid().bayes_update(&EdgeModel, &Design::Scalar(1.5), Outcome::Blocked).unwrap();
    let back = ParameterGrid::from_json(&g.to_json().unwrap()).unwrap();
    assert_eq!(back, g);
    let v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
    assert_eq!(v["axes"][1]["name"], "sigma");
    assert_eq!(v["weights"].as_array().unwrap().len(), 45);
}

#[test]
fn marginals_can_mix() {
    let g = make_grid(
        vec![axis("x", -1.0, 1.0, 5), axis("y", 0.0, 4.0, 9)],
        &Prior::Independent { marginals: vec![Marginal::Uniform, Marginal::Gaussian { mean: 2.0, std: 0.5 }] },
    )
    .unwrap();
    let s = g.summarize();
    assert!(s.axes[0].mean.abs() < 1e-12);
    assert!((s.axes[1].mean - 2.0).abs() < 1e-9);
}

fn random_edge_data() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((-40.0..40.0f64, any::<bool>()), 1..60)
}

fn small_edge_grid() -> ParameterGrid {
    make_grid(vec![axis("x0", -10.0, 10.0, 9), axis("sigma", 4.0, 16.0, 7), axis("a", 0.8, 1.0, 5)], &Prior::gaussian(&[(0.0, 6.0), (10.0, 5.0), (0.9, 0.1)]))
        .unwrap()
}

fn outcome(b: bool) -> Outcome {
    if b {
        Outcome::Transmitted
    } else {
        Outcome::Blocked
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn updates_keep_normalization_and_sign(data in random_edge_data()) {
        let mut g = small_edge_grid();
        for (x, y) in data {
            match g.bayes_update(&EdgeModel, &Design::Scalar(x), outcome(y)) {
                Ok(next) => g = next,
                Err(Error::DegenerateEvidence { .. }) => continue,
                Err(e) => panic!("{e}"),
            }
            prop_assert!((g.total_mass() - 1.0).abs() <= 1e-10);
            prop_assert!(g.weights().iter().all(|w| w.is_finite() && *w >= 0.0));
        }
    }

    #[test]
    fn update_order_does_not_matter(x1 in -30.0..30.0f64, x2 in -30.0..30.0f64, y1: bool, y2: bool) {
        let g = small_edge_grid();
        let (d1, d2) = (Design::Scalar(x1), Design::Scalar(x2));
        let a = g.bayes_update(&EdgeModel, &d1, outcome(y1)).and_then(|g| g.bayes_update(&EdgeModel, &d2, outcome(y2)));
        let b = g.bayes_update(&EdgeModel, &d2, outcome(y2)).and_then(|g| g.bayes_update(&EdgeModel, &d1, outcome(y1)));
        if let (Ok(a), Ok(b)) = (a, b) {
            for (p, q) in a.weights().iter().zip(b.weights()) {
                prop_assert!((p - q).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn constant_likelihoods_leave_weights(c in 0.01..0.99f64, y: bool) {
        let g = small_edge_grid();
        let m = fn_model(3, 1, move |_: &[f64], _: &Design| c);
        let post = g.bayes_update(&m, &Design::Scalar(0.0), outcome(y)).unwrap();
        for (p, q) in post.weights().iter().zip(g.weights()) {
            prop_assert!((p - q).abs() <= 1e-12 * q);
        }
    }

    #[test]
    fn uniform_entropy_is_log_length(lo in -100.0..100.0f64, len in 1e-3..1e3f64, count in 2usize..200) {
        let g = make_grid(vec![axis("t", lo, lo + len, count)], &Prior::Uniform).unwrap();
        prop_assert!((g.entropy() - len.ln()).abs() <= 1e-9);
    }

    #[test]
    fn evidence_sums_to_one_and_intervals_bracket_means(x in -50.0..50.0f64, data in random_edge_data()) {
        let mut g = small_edge_grid();
        for (xi, y) in data.into_iter().take(10) {
            if let Ok(n) = g.bayes_update(&EdgeModel, &Design::Scalar(xi), outcome(y)) {
                g = n;
            }
        }
        let d = Design::Scalar(x);
        let e1 = g.marginal_evidence(&EdgeModel, &d, Outcome::Transmitted).unwrap();
        let e0 = g.marginal_evidence(&EdgeModel, &d, Outcome::Blocked).unwrap();
        prop_assert!((e0 + e1 - 1.0).abs() <= 1e-10);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e1));
        for a in g.summarize().axes {
            prop_assert!(a.std >= 0.0);
            prop_assert!(a.ci95.0 <= a.mean && a.mean <= a.ci95.1);
        }
    }
}
