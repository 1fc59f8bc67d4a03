fn main() {
    std::process::exit(momentset::cli::run(std::env::args_os()));
}
