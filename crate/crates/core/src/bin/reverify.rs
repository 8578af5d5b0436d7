fn main() {
    std::process::exit(reverify::harness::cli::run_cli(std::env::args_os()));
}
