fn main() {
    std::process::exit(melttune::cli::run(std::env::args_os()));
}
