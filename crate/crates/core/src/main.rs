fn main() {
    std::process::exit(contactig::cli::main_with_args(std::env::args_os()));
}
