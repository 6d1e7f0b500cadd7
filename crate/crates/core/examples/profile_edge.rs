//! Adaptive knife-edge beam profiling against a simulated edge.
//!
//! Usage: `cargo run --release --example profile_edge [probes] [seed]`

use ionprobe::{
    make_grid, simulate_experiment, utility, Design, DesignWindow, EdgeModel, ParameterAxis, Prior, SourceSpec,
    StopRule,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let probes: usize = args.next().map_or(Ok(300), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let prior = make_grid(
        vec![
            ParameterAxis::new("x0", -16.0, 16.0, 65)?,
            ParameterAxis::new("sigma", 5.0, 20.0, 31)?,
            ParameterAxis::new("a", 0.85, 1.0, 11)?,
        ],
        &Prior::Uniform,
    )?;
    let window = DesignWindow::new(vec![(-60.0, 60.0)])?.with_resolution(7, 5)?;
    let truth = [0.0, 11.0, 0.95];

    // Where would the first probe be most informative?
    for x in [-40.0, -20.0, -10.0, 0.0, 10.0, 20.0, 40.0] {
        println!("U(xi = {x:5.1}) = {:.4} nats", utility(&prior, &EdgeModel, &Design::Scalar(x))?);
    }

    let run = simulate_experiment(
        &prior,
        &EdgeModel,
        &window,
        &StopRule::max_probes(probes),
        &truth,
        SourceSpec::Deterministic { n: 1 },
        0.0,
        seed,
    )?;

    for r in run.log.records.iter().filter(|r| r.i % (probes / 10).max(1) == 0) {
        println!(
            "probe {:4}  xi = {:7.2}  U = {:.4}  y = {}  sigma = {:.2} ± {:.2}",
            r.i,
            r.xi.coords()[0],
            r.u,
            r.y.bit(),
            r.mean[1],
            r.std[1]
        );
    }
    println!("truth {truth:?}");
    for a in run.posterior.summarize().axes {
        println!("{:6} {:8.3} ± {:.3}", a.name, a.mean, a.std);
    }
    Ok(())
}
