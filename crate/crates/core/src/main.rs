fn main() {
    std::process::exit(niert::cli::run(std::env::args_os()));
}
