fn main() {
    std::process::exit(capalloc_cli::run_cli(std::env::args_os()));
}
