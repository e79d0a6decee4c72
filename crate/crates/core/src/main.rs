fn main() {
    std::process::exit(cga::cli::main());
}
