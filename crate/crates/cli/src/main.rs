fn main() {
    std::process::exit(phjb_cli::main_with(std::env::args_os()));
}
