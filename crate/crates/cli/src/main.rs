fn main() {
    std::process::exit(traitsim_cli::run_cli(std::env::args_os()));
}
