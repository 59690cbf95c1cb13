fn main() {
    std::process::exit(qdynkit::cli::main());
}
