fn main() {
    std::process::exit(hitl_cli::cli_main(std::env::args_os()));
}
