fn main() {
    std::process::exit(singflow_cli::run(std::env::args_os()));
}
