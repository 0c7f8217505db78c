fn main() {
    std::process::exit(nodebias::cli::run(std::env::args_os()));
}
