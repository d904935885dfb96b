//! `hcenergy`: energy functions for `.sir` programs and comparison of
//! estimates against measurements.
//!
//! Exit status: 0 on success, 2 when some function has no energy function
//! (N/A), 3 on a stage error (including unreadable files), 64 on bad usage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hcenergy::report::{compare, parse_functions, parse_measurements, run_pipeline, Format, ReportOptions};

#[derive(Parser)]
#[command(name = "hcenergy", version, about = "Static energy analysis of SSA programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Text => Format::Text,
            OutputFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Infer the energy function of every function in a program.
    Analyze {
        program: PathBuf,
        /// Energy model file.
        #[arg(long)]
        model: PathBuf,
        /// Print the Horn-clause translation.
        #[arg(long)]
        dump_hcir: bool,
        /// Print the cost equations, rankings and recurrences.
        #[arg(long)]
        dump_recurrences: bool,
        /// Run every function and print the visited blocks.
        #[arg(long)]
        trace: bool,
        /// Input sizes for --trace, e.g. `N=4;M=2`.
        #[arg(long, default_value = "")]
        sizes: String,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Evaluate energy functions at measured sizes and report the error.
    Compare {
        /// Lines of `name = closed form` (an `analyze` text report works).
        #[arg(long)]
        functions: PathBuf,
        /// CSV with header `benchmark,sizes,hw_nj`.
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
}

const NOT_AVAILABLE: u8 = 2;
const STAGE_ERROR: u8 = 3;
const USAGE: u8 = 64;

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("read error: {}: {e}", path.display()))
}

fn parse_trace_sizes(text: &str) -> Result<BTreeMap<String, i64>, String> {
    let mut out = BTreeMap::new();
    for part in text.split([';', ',']).map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("bad size `{part}`"))?;
        let v: i64 = v.trim().parse().map_err(|_| format!("bad size `{part}`"))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Analyze {
            program,
            model,
            dump_hcir,
            dump_recurrences,
            trace,
            sizes,
            format,
        } => {
            let sizes = parse_trace_sizes(&sizes)?;
            let p = run_pipeline(&read(&program)?, &read(&model)?).map_err(|e| e.to_string())?;
            let opts = ReportOptions {
                dump_hcir,
                dump_recurrences,
            };
            print!("{}", p.render(opts, format.into()));
            if trace {
                for f in &p.module.functions {
                    let t = p.trace(&f.name, &sizes).map_err(|e| e.to_string())?;
                    for l in t.lines() {
                        println!("# {l}");
                    }
                }
            }
            Ok(if p.has_not_available() { NOT_AVAILABLE } else { 0 })
        }
        Command::Compare {
            functions,
            measurements,
            format,
        } => {
            let f = parse_functions(&read(&functions)?).map_err(|e| e.to_string())?;
            let m = parse_measurements(&read(&measurements)?).map_err(|e| e.to_string())?;
            let c = compare(&f, &m).map_err(|e| e.to_string())?;
            print!("{}", c.render(format.into()));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("hcenergy: {msg}");
            ExitCode::from(STAGE_ERROR)
        }
    }
}
