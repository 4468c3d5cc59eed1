fn main() {
    std::process::exit(vrsgd::cli::run(std::env::args_os()));
}
