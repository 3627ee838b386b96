fn main() {
    std::process::exit(fri_forge::cli::run(std::env::args_os()));
}
