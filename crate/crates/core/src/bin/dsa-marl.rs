fn main() {
    std::process::exit(dsa_marl::cli::main_with_args(std::env::args_os()));
}
