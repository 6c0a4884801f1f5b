fn main() {
    std::process::exit(cauemo::cli::run(std::env::args_os()));
}
