// Finite-difference check of every layer's backward pass.

use v4d::gradcheck::{check_layers, Fault, GradcheckOptions};

pub fn run_example() -> v4d::Result<()> {
    let opts = GradcheckOptions::default();
    let results = check_layers(&opts)?;
    for r in &results {
        println!("{r}");
    }
    assert!(results.iter().all(|r| r.passed()));

    // A sign error in the dense bias gradient is caught and named.
    let broken = GradcheckOptions { fault: Some(Fault::DenseBiasSign), ..opts };
    let failed: Vec<_> = check_layers(&broken)?.into_iter().filter(|r| !r.passed()).collect();
    println!("with injected fault: {} failing check(s), first {}", failed.len(), failed[0].layer);
    assert_eq!(failed[0].layer, "dense_affine");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
