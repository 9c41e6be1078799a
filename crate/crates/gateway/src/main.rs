fn main() -> std::process::ExitCode {
    meshforge_gateway::cli::main()
}
