fn main() {
    std::process::exit(feag::cli::run(std::env::args_os()));
}
