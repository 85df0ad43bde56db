fn main() {
    std::process::exit(gatecert::cli::run(std::env::args_os()));
}
