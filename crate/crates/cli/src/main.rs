fn main() {
    std::process::exit(dipstop_cli::run(std::env::args_os()));
}
