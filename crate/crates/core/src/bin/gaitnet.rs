fn main() {
    std::process::exit(gaitnet::cli::main());
}
