fn main() {
    std::process::exit(lpcann::cli::run(std::env::args_os()));
}
