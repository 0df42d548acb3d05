fn main() {
    std::process::exit(gameblend_workbench::cli::run_from_args(std::env::args_os()));
}
