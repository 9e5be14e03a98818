//! Partial-volume rendering of a cube marker with multiplicative speckle.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    /// Voxels along (depth, height, width).
    pub extent: [usize; 3],
    pub marker_edge_mm: f64,
    pub marker_intensity: f64,
    pub background: f64,
    pub speckle_std: f64,
    #[serde(with = "crate::rng::seed_format")]
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self { extent: [32; 3], marker_edge_mm: 1.0, marker_intensity: 1.0, background: 0.05, speckle_std: 0.05, seed: 0 }
    }
}

impl PhantomConfig {
    pub fn validate(&self, fov_mm: [f64; 3]) -> Result<()> {
        if self.extent.contains(&0) {
            return Err(invalid!("volume extent must be positive, got {:?}", self.extent));
        }
        if !(self.marker_edge_mm > 0.0) || fov_mm.iter().any(|&f| self.marker_edge_mm >= f) {
            return Err(invalid!("marker edge {} mm must be positive and fit the field of view {fov_mm:?}", self.marker_edge_mm));
        }
        if !(self.marker_intensity >= 0.0) || !(self.background >= 0.0) || !(self.speckle_std >= 0.0) {
            return Err(invalid!("intensities and speckle std must be non-negative"));
        }
        Ok(())
    }

    pub fn pitch(&self, fov_mm: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| fov_mm[a] / self.extent[a] as f64)
    }
}

/// Fraction of voxel `i` (pitch `p`) covered by the interval `[lo, hi]`.
fn coverage_1d(i: usize, p: f64, lo: f64, hi: f64) -> f64 {
    let (vlo, vhi) = (i as f64 * p, (i + 1) as f64 * p);
    if lo <= vlo && vhi <= hi {
        return 1.0;
    }
    ((hi.min(vhi) - lo.max(vlo)) / p).clamp(0.0, 1.0)
}

/// Volume `[D, H, W, 1]` of the marker centred at `pos` (mm, within the FOV).
pub fn render_volume(pos: [f64; 3], fov_mm: [f64; 3], cfg: &PhantomConfig, rng: &mut impl Rng) -> Result<Tensor> {
    if (0..3).any(|a| !(pos[a] >= 0.0 && pos[a] <= fov_mm[a])) {
        return Err(invalid!("marker position {pos:?} lies outside the field of view {fov_mm:?}"));
    }
    let pitch = cfg.pitch(fov_mm);
    let half = cfg.marker_edge_mm / 2.0;
    let cover: Vec<Vec<f64>> = (0..3)
        .map(|a| (0..cfg.extent[a]).map(|i| coverage_1d(i, pitch[a], pos[a] - half, pos[a] + half)).collect())
        .collect();
    let [d, h, w] = cfg.extent;
    let mut data = Vec::with_capacity(d * h * w);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let c = cover[0][z] * cover[1][y] * cover[2][x];
                let clean = cfg.background * (1.0 - c) + cfg.marker_intensity * c;
                let n: f64 = rng.sample(StandardNormal);
                data.push((clean * (1.0 + cfg.speckle_std * n)).max(0.0));
            }
        }
    }
    Tensor::new(&[d, h, w, 1], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    const FOV: [f64; 3] = [3.2, 3.2, 3.2];

    fn clean(extent: usize) -> PhantomConfig {
        PhantomConfig { extent: [extent; 3], speckle_std: 0.0, ..PhantomConfig::default() }
    }

    #[test]
    fn aligned_cube_closed_form() {
        let cfg = clean(32);
        let v = render_volume([1.6; 3], FOV, &cfg, &mut stream(0, &[])).unwrap();
        // Cube spans [1.1, 2.1] mm = voxels 11..=20 at 0.1 mm pitch.
        for i in 12..20 {
            assert_eq!(v.get(&[i, 15, 16, 0]).unwrap(), 1.0);
        }
        assert_eq!(v.get(&[0, 0, 0, 0]).unwrap(), 0.05);
        assert_eq!(v.get(&[25, 16, 16, 0]).unwrap(), 0.05);
        let bright = v.data().iter().filter(|&&x| x > 0.5).count();
        assert!((900..=1331).contains(&bright), "{bright}");
    }

    #[test]
    fn one_voxel_shift_translates_volume() {
        let cfg = clean(32);
        let pos = [1.234, 1.5, 1.71];
        let a = render_volume(pos, FOV, &cfg, &mut stream(0, &[])).unwrap();
        let b = render_volume([pos[0] + 0.1, pos[1], pos[2]], FOV, &cfg, &mut stream(0, &[])).unwrap();
        for z in 0..31 {
            for y in 0..32 {
                for x in 0..32 {
                    let d = (a.get(&[z, y, x, 0]).unwrap() - b.get(&[z + 1, y, x, 0]).unwrap()).abs();
                    assert!(d <= 1e-12, "{z} {y} {x}: {d}");
                }
            }
        }
    }

    #[test]
    fn centroid_recovers_position() {
        let cfg = PhantomConfig { extent: [16; 3], ..clean(16) };
        let fov = [3.0, 3.0, 3.5];
        let pitch = cfg.pitch(fov);
        let mut r = stream(1, &[]);
        for _ in 0..100 {
            let pos: [f64; 3] = std::array::from_fn(|a| r.gen_range(0.5..fov[a] - 0.5));
            let v = render_volume(pos, fov, &cfg, &mut r).unwrap();
            let mut sum = 0.0;
            let mut m = [0.0; 3];
            for z in 0..16 {
                for y in 0..16 {
                    for x in 0..16 {
                        let wgt = v.get(&[z, y, x, 0]).unwrap() - cfg.background;
                        sum += wgt;
                        for (a, i) in [z, y, x].into_iter().enumerate() {
                            m[a] += wgt * (i as f64 + 0.5) * pitch[a];
                        }
                    }
                }
            }
            for a in 0..3 {
                assert!((m[a] / sum - pos[a]).abs() <= 0.5 * pitch[a]);
            }
        }
    }

    #[test]
    fn marker_width_in_voxels() {
        let cfg = clean(32);
        let fov = [3.0, 3.0, 3.5];
        let v = render_volume([1.5, 1.5, 1.75], fov, &cfg, &mut stream(0, &[])).unwrap();
        let line: Vec<f64> = (0..32).map(|x| v.get(&[16, 16, x, 0]).unwrap()).collect();
        let covered: f64 = line.iter().map(|&x| (x - 0.05) / 0.95).sum();
        let expect = 1.0 / 3.5 * 32.0;
        assert!((covered - expect).abs() <= 1.0, "{covered} vs {expect}");
    }

    #[test]
    fn speckle_is_non_negative_and_seeded() {
        let cfg = PhantomConfig { extent: [8; 3], speckle_std: 2.0, ..PhantomConfig::default() };
        let a = render_volume([1.5; 3], FOV, &cfg, &mut stream(3, &[])).unwrap();
        let b = render_volume([1.5; 3], FOV, &cfg, &mut stream(3, &[])).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&x| x >= 0.0));
        assert!(a.data().iter().any(|&x| x == 0.0));
    }

    #[test]
    fn rejects_outside_and_bad_config() {
        let cfg = clean(8);
        assert!(render_volume([-0.1, 1.0, 1.0], FOV, &cfg, &mut stream(0, &[])).is_err());
        assert!(render_volume([1.0, 1.0, 3.3], FOV, &cfg, &mut stream(0, &[])).is_err());
        let big = PhantomConfig { marker_edge_mm: 4.0, ..cfg };
        assert!(big.validate(FOV).is_err());
    }
}
