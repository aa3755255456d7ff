fn main() {
    std::process::exit(blindsearch::cli::main());
}
