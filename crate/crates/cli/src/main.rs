fn main() {
    std::process::exit(horo_cli::run(std::env::args_os()));
}
