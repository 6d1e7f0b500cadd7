fn main() {
    std::process::exit(ionprobe::cli::main_with_args(std::env::args_os()));
}
