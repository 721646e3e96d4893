fn main() {
    std::process::exit(nlchns::cli::run(std::env::args_os()));
}
