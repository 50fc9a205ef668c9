fn main() {
    std::process::exit(bearform_cli::cli::main_with_args(std::env::args_os()));
}
