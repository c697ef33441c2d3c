fn main() {
    std::process::exit(fomox::cli::run(std::env::args_os()));
}
