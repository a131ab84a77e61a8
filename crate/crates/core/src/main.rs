fn main() {
    std::process::exit(dpme::cli::run(std::env::args_os()));
}
