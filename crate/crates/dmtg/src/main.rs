fn main() {
    std::process::exit(dmtg::cli::main_with_args(std::env::args_os()));
}
