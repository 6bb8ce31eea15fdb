fn main() {
    std::process::exit(didkit_cli::main_with_args(std::env::args_os()));
}
