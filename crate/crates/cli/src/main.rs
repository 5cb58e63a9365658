use clap::Parser;
use parity_forge_cli::{configure_threads, exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| run(cli));
    match outcome {
        Ok(summary) => {
            for line in summary {
                eprintln!("{line}");
            }
            std::process::exit(exit_code::OK);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
