fn main() {
    std::process::exit(revtri::cli::run(std::env::args_os()));
}
