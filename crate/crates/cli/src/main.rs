fn main() {
    std::process::exit(carfollow_cli::run(std::env::args_os()));
}
