fn main() -> std::process::ExitCode {
    dcrab_cli::main_with(std::env::args_os().collect())
}
