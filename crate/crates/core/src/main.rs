fn main() {
    std::process::exit(dressed::cli::main_with_args(std::env::args_os()));
}
