fn main() {
    std::process::exit(vtube::cli::main_with(std::env::args_os()));
}
