fn main() {
    std::process::exit(syncdialog::cli::main_with_args(std::env::args_os()));
}
