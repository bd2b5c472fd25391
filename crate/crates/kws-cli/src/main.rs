fn main() {
    std::process::exit(kws_cli::run_from_args(std::env::args_os()));
}
