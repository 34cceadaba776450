fn main() {
    std::process::exit(trontide::harness::cli::run_cli(std::env::args_os()));
}
