fn main() {
    std::process::exit(qotf::cli::main_with(std::env::args()));
}
