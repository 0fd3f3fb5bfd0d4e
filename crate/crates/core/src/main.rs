fn main() {
    std::process::exit(supcar::cli::run(std::env::args_os()));
}
