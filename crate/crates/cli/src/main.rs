fn main() {
    std::process::exit(looptrust_cli::run(std::env::args_os()));
}
