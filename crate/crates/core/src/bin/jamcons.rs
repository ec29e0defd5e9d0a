fn main() {
    std::process::exit(jamming_consensus::cli::run_cli(std::env::args_os()));
}
