fn main() -> std::process::ExitCode {
    gpr_yield::cli::main()
}
