fn main() {
    std::process::exit(conic_palm::cli::main_with_args(std::env::args_os()));
}
