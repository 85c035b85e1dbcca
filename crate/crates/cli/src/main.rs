fn main() {
    let stdin = std::io::stdin();
    let code = diffplan_cli::main_with(std::env::args_os(), &mut stdin.lock(), &mut std::io::stdout());
    std::process::exit(code);
}
