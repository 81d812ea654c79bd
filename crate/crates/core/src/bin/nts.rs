fn main() {
    std::process::exit(nts_core::cli::main_with_args(std::env::args_os()));
}
