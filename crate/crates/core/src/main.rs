fn main() {
    std::process::exit(lsart::cli::run_command(std::env::args_os()));
}
