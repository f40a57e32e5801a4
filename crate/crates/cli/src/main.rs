fn main() {
    std::process::exit(evadebench_cli::main_with_args(std::env::args()));
}
