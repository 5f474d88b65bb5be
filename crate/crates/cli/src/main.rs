fn main() {
    std::process::exit(darkspin_cli::run(std::env::args_os()));
}
