fn main() {
    std::process::exit(aoii_cli::run(std::env::args_os()));
}
