fn main() {
    std::process::exit(jpji_cli::run(std::env::args_os()));
}
