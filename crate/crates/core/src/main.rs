fn main() {
    std::process::exit(lbk::cli::run(std::env::args_os()));
}
