fn main() {
    std::process::exit(wellposed::cli::run_command(std::env::args_os()));
}
