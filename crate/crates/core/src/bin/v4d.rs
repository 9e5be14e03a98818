fn main() {
    std::process::exit(v4d::cli::main());
}
