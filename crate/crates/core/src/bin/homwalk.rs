fn main() {
    std::process::exit(homwalk::cli::run(std::env::args_os()));
}
