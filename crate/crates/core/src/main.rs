fn main() {
    std::process::exit(regboot::harness::cli::run_cli(std::env::args_os()));
}
