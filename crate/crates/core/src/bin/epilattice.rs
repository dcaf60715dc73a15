fn main() {
    std::process::exit(epilattice::cli::main());
}
