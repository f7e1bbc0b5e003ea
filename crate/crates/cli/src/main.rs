fn main() -> std::process::ExitCode {
    objevo_cli::cli::main()
}
