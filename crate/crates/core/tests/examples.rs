//! Runs every example end to end.

mod tensor_records {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/tensor_records.rs"));
}

mod conv_modes {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/conv_modes.rs"));
}

mod gradient_check {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/gradient_check.rs"));
}

mod spline_trajectory {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/spline_trajectory.rs"));
}

mod phantom_dataset {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/phantom_dataset.rs"));
}

mod train_linear {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/train_linear.rs"));
}

mod param_counts {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/param_counts.rs"));
}

mod train_tiny_cnn {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/train_tiny_cnn.rs"));
}

mod latency {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/latency.rs"));
}

mod mini_sweep {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/mini_sweep.rs"));
}

#[test]
fn example_tensor_records() {
    tensor_records::run_example().unwrap();
}

#[test]
fn example_conv_modes() {
    conv_modes::run_example().unwrap();
}

#[test]
fn example_gradient_check() {
    gradient_check::run_example().unwrap();
}

#[test]
fn example_spline_trajectory() {
    spline_trajectory::run_example().unwrap();
}

#[test]
fn example_phantom_dataset() {
    phantom_dataset::run_example().unwrap();
}

#[test]
fn example_train_linear() {
    train_linear::run_example().unwrap();
}

#[test]
fn example_param_counts() {
    param_counts::run_example().unwrap();
}

#[test]
fn example_train_tiny_cnn() {
    train_tiny_cnn::run_example().unwrap();
}

#[test]
fn example_latency() {
    latency::run_example().unwrap();
}

#[test]
fn example_mini_sweep() {
    mini_sweep::run_example().unwrap();
}
