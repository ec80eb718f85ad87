use clap::Parser;

fn main() {
    let cli = funkrig::cli::Cli::parse();
    if let Err(e) = funkrig::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
