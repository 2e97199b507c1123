fn main() {
    let code = shamir_consensus::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
