fn main() {
    std::process::exit(orbitchain::cli::run());
}
