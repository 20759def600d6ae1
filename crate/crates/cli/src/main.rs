fn main() {
    std::process::exit(parafun_cli::run_cli(std::env::args_os()));
}
