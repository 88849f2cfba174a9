fn main() {
    std::process::exit(translim::cli::run());
}
