fn main() {
    std::process::exit(inkrec_cli::run());
}
