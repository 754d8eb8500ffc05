use std::io::{self, Write};
use std::process::ExitCode;

use ceiq_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = io::BufWriter::new(io::stdout());
    let mut diag = io::stderr();
    let code = match run(cli, &mut out, &mut diag) {
        Ok(()) => ceiq_cli::exit::OK,
        Err(e) => {
            let _ = writeln!(diag, "error: {e}");
            e.exit_code()
        }
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
