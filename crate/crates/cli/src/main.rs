fn main() {
    std::process::exit(nnpm_cli::run(std::env::args_os()));
}
