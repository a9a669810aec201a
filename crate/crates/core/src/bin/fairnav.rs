fn main() {
    std::process::exit(fairnav::cli::run_cli(std::env::args_os()));
}
