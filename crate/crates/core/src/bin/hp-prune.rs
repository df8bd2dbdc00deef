fn main() {
    std::process::exit(hp_prune::cli::main());
}
