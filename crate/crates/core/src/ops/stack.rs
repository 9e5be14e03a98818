use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Folds time into channels: `[N, T, D, H, W, C] -> [N, D, H, W, T·C]`,
/// with output channel `t·C + c` holding frame `t`, channel `c`.
pub fn channel_stack(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 6 {
        return Err(shape_err!("channel stacking needs a rank-6 input, got {:?}", input.shape()));
    }
    let s = input.shape();
    let (n, t, c) = (s[0], s[1], s[5]);
    let cells = s[2] * s[3] * s[4];
    let mut out = vec![0.0; input.len()];
    for b in 0..n {
        for ti in 0..t {
            let src = &input.data()[(b * t + ti) * cells * c..(b * t + ti + 1) * cells * c];
            for cell in 0..cells {
                let dst = (b * cells + cell) * t * c + ti * c;
                out[dst..dst + c].copy_from_slice(&src[cell * c..(cell + 1) * c]);
            }
        }
    }
    Tensor::new(&[n, s[2], s[3], s[4], t * c], out)
}

/// Inverse of [`channel_stack`] for a known frame count.
pub fn channel_unstack(input: &Tensor, frames: usize) -> Result<Tensor> {
    if input.rank() != 5 || frames == 0 || !input.shape()[4].is_multiple_of(frames) {
        return Err(shape_err!("cannot split {:?} into {frames} frames", input.shape()));
    }
    let s = input.shape();
    let (n, c) = (s[0], s[4] / frames);
    let cells = s[1] * s[2] * s[3];
    let mut out = vec![0.0; input.len()];
    for b in 0..n {
        for cell in 0..cells {
            let src = (b * cells + cell) * frames * c;
            for ti in 0..frames {
                let dst = ((b * frames + ti) * cells + cell) * c;
                out[dst..dst + c].copy_from_slice(&input.data()[src + ti * c..src + (ti + 1) * c]);
            }
        }
    }
    Tensor::new(&[n, frames, s[1], s[2], s[3], c], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{random_tensor, Lcg};

    #[test]
    fn single_frame_squeezes() {
        let mut rng = Lcg::new(1);
        let x = random_tensor(&mut rng, &[2, 1, 2, 3, 2, 3]);
        let y = channel_stack(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2, 3, 2, 3]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn two_frames_in_order() {
        let x = Tensor::new(&[1, 2, 1, 1, 2, 1], vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let y = channel_stack(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 2, 2]);
        assert_eq!(y.data(), &[1.0, 10.0, 2.0, 20.0]);
    }

    #[test]
    fn index_map_and_inverse() {
        let mut rng = Lcg::new(2);
        let x = random_tensor(&mut rng, &[1, 5, 2, 2, 2, 3]);
        let y = channel_stack(&x).unwrap();
        for t in 0..5 {
            for d in 0..2 {
                for h in 0..2 {
                    for w in 0..2 {
                        for c in 0..3 {
                            assert_eq!(y.get(&[0, d, h, w, t * 3 + c]).unwrap(), x.get(&[0, t, d, h, w, c]).unwrap());
                        }
                    }
                }
            }
        }
        let mut a = x.flatten();
        let mut b = y.flatten();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_eq!(channel_unstack(&y, 5).unwrap(), x);
    }

    #[test]
    fn wrong_rank_rejected() {
        assert!(channel_stack(&Tensor::zeros(&[1, 2, 2, 2, 1]).unwrap()).is_err());
    }
}
