fn main() {
    std::process::exit(nlunmix_core::cli_io::main_with_args(std::env::args_os()));
}
