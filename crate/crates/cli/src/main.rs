fn main() {
    std::process::exit(firewatch_cli::run(std::env::args_os()));
}
