fn main() {
    std::process::exit(higita::cli::run(std::env::args_os()));
}
