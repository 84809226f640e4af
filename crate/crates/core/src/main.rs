fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(coevo::cli::cli_main(std::env::args_os()))
}
