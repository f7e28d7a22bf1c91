fn main() {
    std::process::exit(sociq_cli::run());
}
