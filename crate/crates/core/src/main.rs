fn main() {
    std::process::exit(reflpose::cli::run(std::env::args_os()));
}
