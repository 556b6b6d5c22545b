use clap::Parser;

fn main() {
    let cli = cheatt_harness::cli::Cli::parse();
    if let Err(e) = cheatt_harness::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
