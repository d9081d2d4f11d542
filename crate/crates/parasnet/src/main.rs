fn main() -> std::process::ExitCode {
    parasnet::cli::main_with(std::env::args_os())
}
