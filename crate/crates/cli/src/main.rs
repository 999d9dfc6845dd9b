fn main() {
    std::process::exit(qbeat_cli::cli::main_with_args(std::env::args_os()));
}
