fn main() {
    std::process::exit(vesselgnn::cli::run(std::env::args_os()));
}
