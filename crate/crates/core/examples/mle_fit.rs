//! Maximum-likelihood fit of simulated knife-edge data, compared with the
//! grid posterior of the same data.

use ionprobe::rng::seeded;
use ionprobe::{
    make_grid, mle_fit, sample_probe, Dataset, Design, DetectorSpec, EdgeModel, FitOptions, MeasurementModel, Outcome,
    ParameterAxis, Prior, SourceSpec,
};
use rand::Rng;

fn main() -> ionprobe::Result<()> {
    let truth = [0.0, 11.0, 0.95];
    let model = EdgeModel;
    let mut rng = seeded(42);
    let source = SourceSpec::Deterministic { n: 1 };
    let det = DetectorSpec::new(truth[2], 0.0)?;

    // Probes uniform over ±4 sigma of the true edge.
    let records: Vec<(Design, Outcome)> = (0..10_000)
        .map(|_| {
            let xi = Design::Scalar(rng.gen_range(-44.0..44.0));
            let p = model.transmission(&truth, &xi);
            (xi, Outcome::from_detected(sample_probe(&source, &det, p, &mut rng).y()))
        })
        .collect();
    let data = Dataset::new(records);

    let bounds = [(-10.0, 10.0), (5.0, 20.0), (0.8, 1.0)];
    let fit = mle_fit(&data, &model, &[0.0, 10.0, 0.9], &bounds, &FitOptions::default())?;
    println!("converged: {}, log-likelihood {:.3}", fit.converged, fit.log_likelihood);
    for (k, name) in fit.parameters.iter().enumerate() {
        let se = fit.std_errors[k].map_or("n/a".to_string(), |s| format!("{s:.4}"));
        println!("MLE   {name:6} {:8.4} ± {se}", fit.theta_hat[k]);
    }

    let grid = make_grid(
        vec![
            ParameterAxis::new("x0", -3.0, 3.0, 61)?,
            ParameterAxis::new("sigma", 9.0, 13.0, 41)?,
            ParameterAxis::new("a", 0.92, 0.98, 31)?,
        ],
        &Prior::Uniform,
    )?;
    let post = grid.update_with_dataset(&model, &data.records)?;
    for a in post.summarize().axes {
        println!("Bayes {:6} {:8.4} ± {:.4}", a.name, a.mean, a.std);
    }
    Ok(())
}
