// Tensors, padding and the binary tensor record.

use v4d::tensor::{pad, slice_axis, PadSpec};
use v4d::Tensor;

pub fn run_example() -> v4d::Result<()> {
    let t = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])?;
    let padded = pad(&t, &PadSpec::zeros(vec![(0, 0), (1, 2)]))?;
    println!("padded {:?} -> {:?}", t.shape(), padded.shape());
    assert_eq!(slice_axis(&padded, 1, 1, 3)?, t);

    let mut bytes = Vec::new();
    padded.write_record(&mut bytes)?;
    let back = Tensor::read_record(bytes.as_slice())?;
    println!("record of {} bytes round-trips: {}", bytes.len(), back == padded);
    assert_eq!(back, padded);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
