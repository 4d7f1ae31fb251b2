fn main() {
    std::process::exit(qdose::run_command(std::env::args_os()));
}
