fn main() {
    std::process::exit(splab_cli::run());
}
