fn main() {
    std::process::exit(leaksim::cli::main_with_args(std::env::args_os()));
}
