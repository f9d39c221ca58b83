fn main() {
    std::process::exit(proto_ltn::cli::run());
}
