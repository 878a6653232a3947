fn main() {
    std::process::exit(mgritopt::cli::run(std::env::args_os()));
}
