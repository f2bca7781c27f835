fn main() {
    std::process::exit(necc::cli::run());
}
