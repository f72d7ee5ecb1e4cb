use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use bdist_cli::{run_command, CliConfig, CliError};
use clap::Parser;

fn main() -> ExitCode {
    let config = match CliConfig::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run_command(&config, &mut out).and_then(|()| out.flush().map_err(CliError::from));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("bdist: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
