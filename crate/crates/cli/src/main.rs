fn main() {
    std::process::exit(graphcast_cli::run(std::env::args_os()));
}
