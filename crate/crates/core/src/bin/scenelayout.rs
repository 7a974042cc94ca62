fn main() {
    std::process::exit(scenelayout::cli::run(std::env::args_os()));
}
