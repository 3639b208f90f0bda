fn main() {
    std::process::exit(motionflow_cli::run(std::env::args_os()));
}
