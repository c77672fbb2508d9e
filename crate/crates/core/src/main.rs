fn main() {
    std::process::exit(infogeo::cli::run(std::env::args_os()));
}
