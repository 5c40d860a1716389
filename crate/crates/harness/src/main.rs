fn main() {
    std::process::exit(gradbound_harness::cli::run(std::env::args_os()));
}
