mod config;
mod report;
mod runs;
mod trace;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::ExperimentConfig;
use runs::RunError;
use trace::{Body, Check, LevelCsvRow, RenormCsvRow, Trace, TRACE_SCHEMA};

const EXIT_INPUT: u8 = 1;
const EXIT_FALSIFIED: u8 = 2;

#[derive(Parser)]
#[command(name = "qpc", version, about = "Config-driven runner for quasi-periodic cocycle experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the pipeline named by a JSON config and write its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        verbose: bool,
    },
    /// Print fixed-width summaries of trace files.
    Report {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

#[derive(Serialize)]
struct Falsification<'a> {
    schema: u32,
    kind: &'a str,
    error: Option<String>,
    failed: Vec<&'a Check>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            threads,
            verbose,
        } => run_cmd(&config, &out, threads, verbose),
        Cmd::Report { traces } => {
            for path in &traces {
                match report::report_file(path) {
                    Ok(text) => print!("{text}"),
                    Err(e) => {
                        eprintln!("error: {e:#}");
                        return ExitCode::from(EXIT_INPUT);
                    }
                }
            }
            ExitCode::SUCCESS
        }
    }
}

fn run_cmd(config: &Path, out: &Path, threads: Option<usize>, verbose: bool) -> ExitCode {
    let (cfg, input) = match ExperimentConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let kind = cfg.kind.name();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_INPUT);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    if verbose {
        eprintln!("running {kind} with {} threads", pool.current_num_threads());
    }
    let t0 = Instant::now();
    let result = pool.install(|| runs::run(&cfg, input.as_deref()));
    let secs = t0.elapsed().as_secs_f64();
    match result {
        Ok((mut body, checks)) => {
            if !verbose {
                if let Body::KamRun(k) = &mut body {
                    k.rows.iter_mut().for_each(|r| r.wall_time_ms = 0.0);
                }
            }
            let trace = Trace {
                schema: TRACE_SCHEMA,
                body,
                checks,
                wall_time_s: verbose.then_some(secs),
            };
            if let Err(e) = write_outputs(out, &trace) {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_INPUT);
            }
            let failed = trace.falsified();
            println!("{kind}: {}/{} checks passed", trace.checks.len() - failed.len(), trace.checks.len());
            if failed.is_empty() {
                return ExitCode::SUCCESS;
            }
            let rec = Falsification {
                schema: TRACE_SCHEMA,
                kind,
                error: None,
                failed,
            };
            if let Err(e) = write_json(&out.join("falsification.json"), &rec) {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_INPUT);
            }
            ExitCode::from(EXIT_FALSIFIED)
        }
        Err(RunError::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(RunError::Pipeline(msg)) => {
            println!("{kind}: pipeline failed: {msg}");
            let rec = Falsification {
                schema: TRACE_SCHEMA,
                kind,
                error: Some(msg),
                failed: Vec::new(),
            };
            let written = std::fs::create_dir_all(out)
                .context("creating output directory")
                .and_then(|_| write_json(&out.join("falsification.json"), &rec));
            if let Err(e) = written {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_INPUT);
            }
            ExitCode::from(EXIT_FALSIFIED)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(out: &Path, trace: &Trace) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("trace.json"), trace)?;
    let csv_path = out.join("trace.csv");
    match &trace.body {
        Body::KamRun(k) => write_csv(&csv_path, &k.rows),
        Body::GevreyLadder(g) => {
            let rows: Vec<LevelCsvRow> = [("green", &g.green), ("truncation", &g.truncation)]
                .into_iter()
                .flat_map(|(name, rep)| {
                    rep.levels.iter().map(move |l| LevelCsvRow {
                        ladder: name,
                        j: l.j,
                        h_j: l.h_j,
                        gap_norm: l.gap_norm,
                        sup_err: l.sup_err,
                        dbar_defect: l.dbar_defect,
                    })
                })
                .collect();
            write_csv(&csv_path, &rows)
        }
        Body::RenormRun(r) => write_csv(&csv_path, &r.rows.iter().map(RenormCsvRow::from).collect::<Vec<_>>()),
        Body::HomologicalBench(h) => write_csv(&csv_path, &h.rows),
        Body::DcScan(_) | Body::BracketEstimate(_) => Ok(()),
    }
}
