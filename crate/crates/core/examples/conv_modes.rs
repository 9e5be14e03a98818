// The four ways of convolving a volume sequence, side by side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use v4d::ops::{channel_stack, conv3d, conv4d_factorized, conv4d_full, ConvParams, FactorOrder, Padding};
use v4d::tensor::slice_axis;
use v4d::Tensor;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn conv(rng: &mut ChaCha8Rng, kernel: &[usize], cin: usize, cout: usize) -> v4d::Result<ConvParams> {
    let mut shape = kernel.to_vec();
    shape.extend([cin, cout]);
    ConvParams::new(random(rng, &shape), Tensor::zeros(&[cout])?, vec![1; kernel.len()], Padding::Same)
}

pub fn run_example() -> v4d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // One sequence of five 8^3 single-channel volumes.
    let seq = random(&mut rng, &[1, 5, 8, 8, 8, 1]);

    let last = slice_axis(&seq, 1, 4, 1)?.reshape(&[1, 8, 8, 8, 1])?;
    let p3 = conv(&mut rng, &[3, 3, 3], 1, 4)?;
    println!("3d    {:?} -> {:?}, {} weights", last.shape(), conv3d(&last, &p3)?.shape(), p3.weight.len());

    let stacked = channel_stack(&seq)?;
    let pc = conv(&mut rng, &[3, 3, 3], 5, 4)?;
    println!("3d-c  {:?} -> {:?}, {} weights", stacked.shape(), conv3d(&stacked, &pc)?.shape(), pc.weight.len());

    let ps = conv(&mut rng, &[1, 3, 3, 3], 1, 4)?;
    let pt = conv(&mut rng, &[3, 1, 1, 1], 4, 4)?;
    let y = conv4d_factorized(&seq, &ps, &pt, FactorOrder::SpatialFirst)?;
    println!("f-4d  {:?} -> {:?}, {} weights", seq.shape(), y.shape(), ps.weight.len() + pt.weight.len());

    let p4 = conv(&mut rng, &[3, 3, 3, 3], 1, 4)?;
    println!("4d    {:?} -> {:?}, {} weights", seq.shape(), conv4d_full(&seq, &p4)?.shape(), p4.weight.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
