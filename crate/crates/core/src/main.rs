fn main() {
    std::process::exit(robsurv::cli::main_with_args(std::env::args_os()));
}
