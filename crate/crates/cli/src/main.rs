use std::fs::File;
use std::io::{BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use tracepursuit_cli::{error_record, export_csv, run, Cli, CliError, Format, Plan};

fn main() -> ExitCode {
    let plan = match Plan::from_cli(Cli::parse()) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let cfg = match plan {
        Plan::Export { design, out } => {
            let result = trace_pursuit::Generator::new(design.clone())
                .map_err(CliError::from)
                .and_then(|g| export_csv(&g.replicate(0), &out));
            return match result {
                Ok(()) => {
                    println!("wrote {} x {} to {}", design.n, design.p, out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            };
        }
        Plan::Run(cfg) => cfg,
    };
    let json = cfg.format == Format::JsonLines;
    let mut sink: Box<dyn Write> = match &cfg.out {
        Some(path) => match File::create(path) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => {
                let err = CliError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                };
                return fail(&err);
            }
        },
        None => Box::new(std::io::stdout().lock()),
    };
    match run(&cfg, &mut sink) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                let _ = writeln!(sink, "{}", error_record(Some(cfg.command), &e));
                let _ = sink.flush();
            }
            fail(&e)
        }
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error [{}]: {e}", e.category());
    eprintln!("  hint: {}", e.hint());
    ExitCode::FAILURE
}
