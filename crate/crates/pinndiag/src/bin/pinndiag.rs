fn main() {
    std::process::exit(pinndiag::cli::main());
}
