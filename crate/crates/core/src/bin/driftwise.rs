fn main() -> std::process::ExitCode {
    driftwise::cli::main()
}
