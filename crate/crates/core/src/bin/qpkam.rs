fn main() {
    std::process::exit(qpkam::cli::main_with_args(std::env::args_os()));
}
