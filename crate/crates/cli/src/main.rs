use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anisolve::Result;
use anisolve_cli::args::{parse_grid, Cli, Command};
use anisolve_cli::bench::run_bench;
use anisolve_cli::cost::write_cost_model;
use anisolve_cli::solve::{run_solve, EXIT_CONVERGED, EXIT_ERROR, EXIT_NOT_CONVERGED};
use anisolve_cli::verify::{format_table, run_verify, VerifyOptions, EXIT_FAILED};
use clap::error::ErrorKind;
use clap::Parser;

const EXIT_USAGE: u8 = 64;

fn csv_sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            let (summary, converged) = run_solve(&args)?;
            let text = serde_json::to_string_pretty(&summary).expect("summary is plain JSON");
            let _ = writeln!(io::stdout(), "{text}");
            Ok(if converged { EXIT_CONVERGED } else { EXIT_NOT_CONVERGED })
        }
        Command::Verify(args) => {
            let mut opts = VerifyOptions {
                workers: args.workers,
                inject_fault: args.inject_fault,
                ..VerifyOptions::default()
            };
            if let Some(g) = &args.grid {
                opts.grids = vec![parse_grid(g)?];
                opts.spectrum = true;
            }
            let checks = run_verify(&opts)?;
            print!("{}", format_table(&checks));
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if failed.is_empty() {
                println!("all checks passed");
                Ok(0)
            } else {
                println!("failed: {}", failed.join(", "));
                Ok(EXIT_FAILED)
            }
        }
        Command::Bench(args) => {
            let mut out = csv_sink(args.out_csv.as_deref())?;
            run_bench(&args, &mut out)?;
            out.flush()?;
            Ok(0)
        }
        Command::CostModel(args) => {
            let mut out = csv_sink(args.out_csv.as_deref())?;
            write_cost_model(&mut out)?;
            out.flush()?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
