// A random marker trajectory: knots, natural cubic spline, equal-τ samples.

use v4d::phantom::{generate_knots, SplinePath, TrajectoryConfig};
use v4d::rng::stream;

pub fn run_example() -> v4d::Result<()> {
    let cfg = TrajectoryConfig { seed: 3, ..TrajectoryConfig::default() };
    let knots = generate_knots(&cfg, &mut stream(cfg.seed, &[0]))?;
    let path = SplinePath::fit(&knots)?;
    let points = path.sample(cfg.samples_per_spline)?;
    println!("{} knots, {} samples", knots.len(), points.len());

    let steps: Vec<f64> = points
        .windows(2)
        .map(|w| (0..3).map(|a| (w[1][a] - w[0][a]).powi(2)).sum::<f64>().sqrt())
        .collect();
    let max = steps.iter().cloned().fold(0.0, f64::max);
    let min = steps.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("step length {:.4} .. {:.4} mm (equal τ spacing, unequal distances)", min, max);
    assert!(max / min > 1.0);

    let worst = knots
        .iter()
        .enumerate()
        .map(|(j, k)| (0..3).map(|a| (path.eval(j as f64)[a] - k[a]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    println!("max interpolation error at knots {worst:.2e} mm");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
