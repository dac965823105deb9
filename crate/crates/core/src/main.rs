fn main() {
    std::process::exit(bootdiag::cli::run(std::env::args_os()));
}
