fn main() {
    std::process::exit(chaintraj::cli::main_with_args(std::env::args_os()));
}
