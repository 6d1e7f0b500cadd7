//! Adaptive localization of a circular hole with a known Gaussian beam.
//!
//! Usage: `cargo run --release --example locate_hole [probes] [seed]`

use ionprobe::{
    make_grid, simulate_experiment, BeamSpec, DesignWindow, HoleModel, Marginal, ParameterAxis, Prior, SourceSpec,
    StopRule,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let probes: usize = args.next().map_or(Ok(150), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let model = HoleModel::new(BeamSpec::new(25.0, 0.95)?)?;
    let prior = make_grid(
        vec![
            ParameterAxis::new("cx", -60.0, 60.0, 49)?,
            ParameterAxis::new("cy", -60.0, 60.0, 49)?,
            ParameterAxis::new("radius", 799.0, 829.0, 13)?,
        ],
        &Prior::Independent {
            marginals: vec![
                Marginal::Gaussian { mean: 0.0, std: 20.0 },
                Marginal::Gaussian { mean: 0.0, std: 20.0 },
                Marginal::Uniform,
            ],
        },
    )?;
    let window = DesignWindow::new(vec![(-1000.0, 1000.0), (-1000.0, 1000.0)])?.with_resolution(11, 5)?;
    let truth = [12.7, -8.3, 814.1];

    let run = simulate_experiment(
        &prior,
        &model,
        &window,
        &StopRule::max_probes(probes),
        &truth,
        SourceSpec::Deterministic { n: 1 },
        0.0,
        seed,
    )?;
    for r in run.log.records.iter().filter(|r| r.i % 25 == 0) {
        let c = r.xi.coords();
        println!(
            "probe {:4}  xi = ({:7.1}, {:7.1})  y = {}  center = ({:.1} ± {:.1}, {:.1} ± {:.1})",
            r.i,
            c[0],
            c[1],
            r.y.bit(),
            r.mean[0],
            r.std[0],
            r.mean[1],
            r.std[1]
        );
    }
    println!("truth {truth:?}");
    for a in run.posterior.summarize().axes {
        println!("{:6} {:8.2} ± {:.2}  95% [{:.2}, {:.2}]", a.name, a.mean, a.std, a.ci95.0, a.ci95.1);
    }
    Ok(())
}
