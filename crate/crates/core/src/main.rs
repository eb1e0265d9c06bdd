fn main() {
    std::process::exit(rhm_lab::harness::cli::main_with(std::env::args_os()));
}
