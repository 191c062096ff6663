fn main() {
    std::process::exit(qgauss::cli::run());
}
