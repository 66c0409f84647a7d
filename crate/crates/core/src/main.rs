fn main() {
    std::process::exit(sged::cli::run(std::env::args_os()));
}
