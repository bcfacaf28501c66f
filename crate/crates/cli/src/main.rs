use std::io::Write;
use std::process::ExitCode;

use bisys_cli::{render, run, Cli, Format};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let mut out = std::io::stdout().lock();
            if out
                .write_all(render(&report, cli.format).as_bytes())
                .is_err()
            {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = e.to_report();
            match cli.format {
                Format::Json => eprintln!(
                    "{}",
                    serde_json::to_string(&report).expect("error report serializes")
                ),
                Format::Text => eprintln!("error [{}]: {}", report.category, report.message),
            }
            ExitCode::from(report.exit_code as u8)
        }
    }
}
