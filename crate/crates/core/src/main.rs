fn main() {
    std::process::exit(rafm::cli::main_with_args(std::env::args_os()));
}
