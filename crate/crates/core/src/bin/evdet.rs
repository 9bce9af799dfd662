fn main() -> std::process::ExitCode {
    evdet::cli::main()
}
