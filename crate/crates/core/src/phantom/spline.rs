//! Natural cubic splines through 3D knots with uniform parameters τ_j = j.

use crate::error::{invalid, Result};

/// Piecewise cubic `f(τ)`; segment `j` covers `[j, j+1]` and stores, per
/// coordinate, `[a, b, c, d]` of `a + b·s + c·s² + d·s³` with `s = τ − j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplinePath {
    knots: Vec<[f64; 3]>,
    coeffs: Vec<[[f64; 4]; 3]>,
}

/// Second derivatives at the knots of a natural spline with unit spacing,
/// by the Thomas algorithm on `M[j-1] + 4M[j] + M[j+1] = 6Δ²y[j]`.
fn second_derivatives(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let inner = n - 2;
    let mut c = vec![0.0; inner];
    let mut d = vec![0.0; inner];
    for i in 0..inner {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        let (cp, dp) = if i == 0 { (0.0, 0.0) } else { (c[i - 1], d[i - 1]) };
        let denom = 4.0 - cp;
        c[i] = 1.0 / denom;
        d[i] = (rhs - dp) / denom;
    }
    m[inner] = d[inner - 1];
    for i in (0..inner - 1).rev() {
        m[i + 1] = d[i] - c[i] * m[i + 2];
    }
    m
}

impl SplinePath {
    pub fn fit(knots: &[[f64; 3]]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid!("a spline needs at least 2 knots, got {}", knots.len()));
        }
        let mut coeffs = vec![[[0.0; 4]; 3]; knots.len() - 1];
        for axis in 0..3 {
            let y: Vec<f64> = knots.iter().map(|k| k[axis]).collect();
            let m = second_derivatives(&y);
            for (j, seg) in coeffs.iter_mut().enumerate() {
                seg[axis] = [
                    y[j],
                    y[j + 1] - y[j] - (2.0 * m[j] + m[j + 1]) / 6.0,
                    m[j] / 2.0,
                    (m[j + 1] - m[j]) / 6.0,
                ];
            }
        }
        Ok(Self { knots: knots.to_vec(), coeffs })
    }

    pub fn knots(&self) -> &[[f64; 3]] {
        &self.knots
    }

    pub fn coefficients(&self) -> &[[[f64; 4]; 3]] {
        &self.coeffs
    }

    /// Largest valid parameter, `J − 1`.
    pub fn tau_max(&self) -> f64 {
        (self.knots.len() - 1) as f64
    }

    fn locate(&self, tau: f64) -> (usize, f64) {
        let last = self.coeffs.len() - 1;
        let j = (tau.max(0.0).floor() as usize).min(last);
        (j, tau - j as f64)
    }

    /// Position at `tau`, clamped into `[0, J−1]` for segment lookup.
    pub fn eval(&self, tau: f64) -> [f64; 3] {
        let (j, s) = self.locate(tau);
        self.coeffs[j].map(|[a, b, c, d]| a + s * (b + s * (c + s * d)))
    }

    pub fn second_derivative(&self, tau: f64) -> [f64; 3] {
        let (j, s) = self.locate(tau);
        self.coeffs[j].map(|[_, _, c, d]| 2.0 * c + 6.0 * d * s)
    }

    /// Second derivative at the right end of segment `j`.
    pub fn second_derivative_end(&self, j: usize) -> [f64; 3] {
        self.coeffs[j].map(|[_, _, c, d]| 2.0 * c + 6.0 * d)
    }

    /// `count` points at equally spaced τ over `[0, J−1]`, endpoints included.
    pub fn sample(&self, count: usize) -> Result<Vec<[f64; 3]>> {
        if count < 2 {
            return Err(invalid!("need at least 2 samples, got {count}"));
        }
        let span = self.tau_max();
        Ok((0..count)
            .map(|i| {
                if i == count - 1 {
                    return *self.knots.last().unwrap();
                }
                self.eval(span * i as f64 / (count - 1) as f64)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::Lcg;

    fn random_knots(rng: &mut Lcg, n: usize) -> Vec<[f64; 3]> {
        (0..n).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect()
    }

    /// Natural-spline second derivatives from the full (J×J) linear system
    /// solved by Gaussian elimination with partial pivoting.
    fn dense_second_derivatives(y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        a[0][0] = 1.0;
        a[n - 1][n - 1] = 1.0;
        for i in 1..n - 1 {
            a[i][i - 1] = 1.0;
            a[i][i] = 4.0;
            a[i][i + 1] = 1.0;
            a[i][n] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for k in col..=n {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n] / a[i][i]).collect()
    }

    #[test]
    fn too_few_knots() {
        assert!(SplinePath::fit(&[[0.0; 3]]).is_err());
        assert!(SplinePath::fit(&[[0.0; 3], [1.0; 3]]).unwrap().sample(1).is_err());
    }

    #[test]
    fn two_knots_are_linear() {
        let p = SplinePath::fit(&[[0.0, 1.0, 2.0], [2.0, 3.0, 6.0]]).unwrap();
        assert_eq!(p.eval(0.5), [1.0, 2.0, 4.0]);
        let pts = p.sample(5).unwrap();
        for (i, q) in pts.iter().enumerate() {
            let t = i as f64 / 4.0;
            for a in 0..3 {
                let want = p.knots()[0][a] + t * (p.knots()[1][a] - p.knots()[0][a]);
                assert!((q[a] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn interpolates_and_is_c2() {
        let mut rng = Lcg::new(3);
        let knots = random_knots(&mut rng, 75);
        let p = SplinePath::fit(&knots).unwrap();
        for (j, k) in knots.iter().enumerate() {
            let f = p.eval(j as f64);
            for a in 0..3 {
                assert!((f[a] - k[a]).abs() <= 1e-9);
            }
        }
        for j in 0..knots.len() - 2 {
            let left = p.second_derivative_end(j);
            let right = p.second_derivative(j as f64 + 1.0);
            for a in 0..3 {
                assert!((left[a] - right[a]).abs() <= 1e-6);
            }
        }
        assert!(p.second_derivative(0.0).iter().all(|v| v.abs() < 1e-12));
        assert!(p.second_derivative_end(knots.len() - 2).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_dense_solver() {
        let mut rng = Lcg::new(4);
        let knots = random_knots(&mut rng, 10);
        let p = SplinePath::fit(&knots).unwrap();
        for axis in 0..3 {
            let y: Vec<f64> = knots.iter().map(|k| k[axis]).collect();
            let m = dense_second_derivatives(&y);
            for j in 0..9 {
                let want = [
                    y[j],
                    y[j + 1] - y[j] - (2.0 * m[j] + m[j + 1]) / 6.0,
                    m[j] / 2.0,
                    (m[j + 1] - m[j]) / 6.0,
                ];
                for k in 0..4 {
                    assert!((p.coefficients()[j][axis][k] - want[k]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn collinear_knots_stay_on_the_line() {
        let dir = [0.3, -0.5, 0.8];
        let ts = [0.0, 0.4, 1.7, 1.9, 3.0, 2.2];
        let knots: Vec<[f64; 3]> = ts.iter().map(|&t| dir.map(|d| 1.0 + d * t)).collect();
        let p = SplinePath::fit(&knots).unwrap();
        for q in p.sample(101).unwrap() {
            let t = (q[0] - 1.0) / dir[0];
            for a in 0..3 {
                assert!((q[a] - (1.0 + dir[a] * t)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn aligned_samples_return_knots() {
        let mut rng = Lcg::new(5);
        let knots = random_knots(&mut rng, 12);
        let p = SplinePath::fit(&knots).unwrap();
        for (q, k) in p.sample(12).unwrap().iter().zip(&knots) {
            for a in 0..3 {
                assert!((q[a] - k[a]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn equal_parameter_steps_give_unequal_distances() {
        let p = SplinePath::fit(&[[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 0.0, 0.5]]).unwrap();
        let pts = p.sample(50).unwrap();
        let d: Vec<f64> = pts
            .windows(2)
            .map(|w| (0..3).map(|a| (w[1][a] - w[0][a]).powi(2)).sum::<f64>().sqrt())
            .collect();
        let max = d.iter().cloned().fold(f64::MIN, f64::max);
        let min = d.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min > 1.0 + 1e-6, "{max} / {min}");
    }
}
