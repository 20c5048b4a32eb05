fn main() {
    std::process::exit(bmvae::cli::run(std::env::args()));
}
