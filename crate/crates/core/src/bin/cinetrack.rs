fn main() {
    std::process::exit(cinetrack::cli::run_from_args(std::env::args_os()));
}
