fn main() {
    std::process::exit(sgdsched_cli::run(std::env::args_os()));
}
