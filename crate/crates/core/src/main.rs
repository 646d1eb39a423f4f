fn main() {
    std::process::exit(provchain::cli::run(std::env::args_os()));
}
