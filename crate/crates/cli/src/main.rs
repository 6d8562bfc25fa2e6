fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(scatvox_cli::run_subcommand(&argv));
}
