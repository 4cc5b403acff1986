fn main() {
    std::process::exit(mpc_peb::cli::main_with_args(std::env::args_os()));
}
