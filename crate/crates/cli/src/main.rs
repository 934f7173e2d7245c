fn main() {
    std::process::exit(photonstat_cli::run(std::env::args_os()));
}
