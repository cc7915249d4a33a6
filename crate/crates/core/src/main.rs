fn main() {
    std::process::exit(ringtrap::cli::run(std::env::args_os()));
}
