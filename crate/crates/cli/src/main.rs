fn main() {
    std::process::exit(ginoe_cli::run(std::env::args_os()));
}
