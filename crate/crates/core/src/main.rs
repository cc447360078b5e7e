fn main() {
    std::process::exit(bcm_spectral::cli::run());
}
