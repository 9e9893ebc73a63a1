fn main() {
    std::process::exit(pair_core::cli::main_with_args(std::env::args_os()));
}
