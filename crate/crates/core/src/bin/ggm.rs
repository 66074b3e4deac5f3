fn main() {
    std::process::exit(ggm::cli::run(std::env::args_os()));
}
