//! Random knot sets inside the field of view.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub knots_min: usize,
    pub knots_max: usize,
    pub samples_per_spline: usize,
    /// Field of view along (depth, height, width).
    pub fov_mm: [f64; 3],
    /// Border excluded from knot sampling.
    pub margin_mm: f64,
    #[serde(with = "crate::rng::seed_format")]
    pub seed: u64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { knots_min: 60, knots_max: 90, samples_per_spline: 500, fov_mm: [3.0, 3.0, 3.5], margin_mm: 0.5, seed: 0 }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knots_min < 2 || self.knots_min > self.knots_max {
            return Err(invalid!("knot range {}..={} is invalid", self.knots_min, self.knots_max));
        }
        if self.samples_per_spline < 2 {
            return Err(invalid!("samples_per_spline must be at least 2"));
        }
        let min_fov = self.fov_mm.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_fov > 0.0) || !(self.margin_mm >= 0.0) || self.margin_mm >= min_fov / 2.0 {
            return Err(invalid!("margin {} mm must be below half the smallest FOV side", self.margin_mm));
        }
        Ok(())
    }
}

/// Between `knots_min` and `knots_max` knots, uniform in the inset box.
pub fn generate_knots(cfg: &TrajectoryConfig, rng: &mut impl Rng) -> Result<Vec<[f64; 3]>> {
    cfg.validate()?;
    let n = rng.gen_range(cfg.knots_min..=cfg.knots_max);
    let m = cfg.margin_mm;
    Ok((0..n).map(|_| std::array::from_fn(|a| m + rng.gen::<f64>() * (cfg.fov_mm[a] - 2.0 * m))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn count_and_determinism() {
        let cfg = TrajectoryConfig::default();
        let a = generate_knots(&cfg, &mut stream(1, &[])).unwrap();
        assert!((60..=90).contains(&a.len()));
        assert_eq!(a, generate_knots(&cfg, &mut stream(1, &[])).unwrap());
    }

    #[test]
    fn degenerate_box_collapses_to_center() {
        let eps = 1e-3;
        let cfg = TrajectoryConfig { fov_mm: [3.0; 3], margin_mm: 1.5 - eps, ..TrajectoryConfig::default() };
        for k in generate_knots(&cfg, &mut stream(2, &[])).unwrap() {
            let d: f64 = (0..3).map(|a| (k[a] - cfg.fov_mm[a] / 2.0).powi(2)).sum::<f64>().sqrt();
            assert!(d <= eps * 3f64.sqrt(), "{d}");
        }
    }

    #[test]
    fn uniform_statistics() {
        let cfg = TrajectoryConfig { knots_min: 10_000, knots_max: 10_000, ..TrajectoryConfig::default() };
        let k = generate_knots(&cfg, &mut stream(3, &[])).unwrap();
        for a in 0..3 {
            let lo = cfg.margin_mm;
            let hi = cfg.fov_mm[a] - cfg.margin_mm;
            let v: Vec<f64> = k.iter().map(|p| p[a]).collect();
            assert!(v.iter().all(|&x| x >= lo && x <= hi));
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let sigma = (hi - lo) / 12f64.sqrt() / (v.len() as f64).sqrt();
            assert!((mean - (lo + hi) / 2.0).abs() <= 3.0 * sigma, "axis {a}: {mean}");
        }
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            TrajectoryConfig { knots_min: 91, ..TrajectoryConfig::default() },
            TrajectoryConfig { samples_per_spline: 1, ..TrajectoryConfig::default() },
            TrajectoryConfig { margin_mm: 1.5, ..TrajectoryConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
