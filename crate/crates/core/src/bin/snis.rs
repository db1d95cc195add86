fn main() {
    std::process::exit(snis::cli::run(std::env::args_os()));
}
