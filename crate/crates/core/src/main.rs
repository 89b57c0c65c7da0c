fn main() {
    std::process::exit(dualmink::cli::run(std::env::args_os()));
}
