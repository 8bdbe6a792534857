fn main() {
    std::process::exit(conic_collapse::cli::main_with_args(std::env::args_os()));
}
