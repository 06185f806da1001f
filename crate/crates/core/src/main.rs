fn main() -> std::process::ExitCode {
    cia::cli::main()
}
