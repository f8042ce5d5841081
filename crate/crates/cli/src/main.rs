fn main() {
    std::process::exit(glt_cli::run(std::env::args_os()));
}
