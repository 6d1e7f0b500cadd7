//! Builds a knife-edge prior grid, feeds it a handful of hand-picked probe
//! outcomes and prints how the posterior tightens.

use ionprobe::{make_grid, Design, EdgeModel, Outcome, ParameterAxis, Prior};

fn main() -> ionprobe::Result<()> {
    let axes = vec![
        ParameterAxis::new("x0", -20.0, 20.0, 81)?,
        ParameterAxis::new("sigma", 5.0, 20.0, 31)?,
        ParameterAxis::new("a", 0.85, 1.0, 11)?,
    ];
    let mut grid = make_grid(axes, &Prior::Uniform)?;
    let model = EdgeModel;
    println!("prior entropy {:.4} nats", grid.entropy());

    // Blade far left: beam passes. Blade far right: beam blocked.
    let probes = [(-40.0, Outcome::Transmitted), (40.0, Outcome::Blocked), (-5.0, Outcome::Transmitted), (5.0, Outcome::Blocked)];
    for (x, y) in probes {
        grid = grid.bayes_update(&model, &Design::Scalar(x), y)?;
        let s = grid.summarize();
        println!(
            "xi = {x:6.1}  y = {}  entropy {:.4}  x0 = {:.2} ± {:.2}",
            y.bit(),
            grid.entropy(),
            s.axes[0].mean,
            s.axes[0].std
        );
    }

    for a in grid.summarize().axes {
        println!("{:6} mean {:8.3}  std {:7.3}  95% [{:.3}, {:.3}]", a.name, a.mean, a.std, a.ci95.0, a.ci95.1);
    }
    println!("mass check: {:.3e}", grid.total_mass() - 1.0);
    Ok(())
}
