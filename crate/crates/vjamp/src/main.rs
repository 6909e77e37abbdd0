fn main() {
    std::process::exit(vjamp::cli::run(std::env::args_os()));
}
