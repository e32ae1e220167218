fn main() -> std::process::ExitCode {
    fedrl_sim::cli::main()
}
