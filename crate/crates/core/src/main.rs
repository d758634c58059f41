fn main() {
    std::process::exit(plasmawave::cli::main_with(std::env::args_os()));
}
