use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tomobell::dump::DumpFormat;
use tomobell::runner::{
    analytic_values, run_single, run_sweep, CsvTable, DumpSpec, RunConfig, RunReport, SweepSpec,
    SweepVariable,
};
use tomobell::selftest::run_selftest;
use tomobell::{Error, Result};

#[derive(Parser)]
#[command(name = "tomobell", version, about = "Homodyne-tomography Bell test simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: sample, estimate B and print a report
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Write the raw events to this file
        #[arg(long)]
        dump_samples: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DumpKind::Binary)]
        dump_format: DumpKind,
    },
    /// Sweep the crystal phase
    SweepPhi {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Sweep the detector efficiency
    SweepEta {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Exact values only, no sampling
    Oracle {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Kernel unbiasedness and sampler goodness-of-fit checks
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Samples per check
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        /// Random parameter draws for the goodness-of-fit test
        #[arg(long, default_value_t = 20)]
        gof_draws: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gain |Lambda|
    #[arg(long, conflicts_with = "mean_photon")]
    lambda: Option<f64>,
    /// Mean photon number per mode
    #[arg(long)]
    mean_photon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    crystal_phase: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta2: Option<f64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    blocks: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "TOMOBELL_WORKERS")]
    workers: Option<usize>,
    /// Fock truncation of the oracle
    #[arg(long)]
    n_max: Option<usize>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, allow_negative_numbers = true)]
    start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    stop: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Explicit comma-separated points
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    values: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpKind {
    Binary,
    Csv,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_toml_str(&std::fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        if self.lambda.is_some() {
            c.lambda = self.lambda;
            c.mean_photon = None;
        }
        if self.mean_photon.is_some() {
            c.mean_photon = self.mean_photon;
            c.lambda = None;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(crystal_phase, eta, alpha, beta, alpha2, beta2, samples, blocks, seed, n_max);
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        if self.out.is_some() {
            c.output = self.out.clone();
        }
        Ok(c)
    }
}

impl SweepArgs {
    fn apply(&self, spec: &mut SweepSpec) {
        if self.start.is_some() {
            spec.start = self.start;
        }
        if self.stop.is_some() {
            spec.stop = self.stop;
        }
        if self.steps.is_some() {
            spec.steps = self.steps;
        }
        if self.values.is_some() {
            spec.values = self.values.clone();
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let f = File::create(p)
                .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", p.display())))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn summary(r: &RunReport) -> String {
    format!(
        "B = {:.5} +- {:.5} (analytic {:.5}), {:.1} sigma above 2, {} events in {:.2} s",
        r.bell.value,
        r.bell.std_error,
        r.analytic.bell,
        r.violation_sigmas,
        r.config.samples,
        r.wall_time_s
    )
}

fn simulate(run: &RunArgs, dump: Option<&PathBuf>, dump_format: DumpKind) -> Result<()> {
    let mut c = run.config()?;
    if let Some(path) = dump {
        let format = match dump_format {
            DumpKind::Binary => DumpFormat::Binary,
            DumpKind::Csv => DumpFormat::Csv,
        };
        c.dump = Some(DumpSpec { path: path.clone(), format });
    }
    c.validate()?;
    // open the output before sampling so an unwritable path fails fast
    let out = open_output(c.output.as_deref())?;
    let report = run_single(&c)?;
    eprintln!("{}", summary(&report));
    match run.format.unwrap_or(Format::Report) {
        Format::Report => {
            let mut out = out;
            writeln!(out, "{}", report.to_json()?)?;
            out.flush()?;
        }
        Format::Csv => {
            let mut table = CsvTable::new(out)?;
            table.write_row("none", 0, report.config.crystal_phase, &Ok(report))?;
            table.finish()?.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepEntry {
    point: u64,
    value: f64,
    status: String,
    report: Option<RunReport>,
}

fn sweep(run: &RunArgs, args: &SweepArgs, variable: SweepVariable) -> Result<()> {
    let mut c = run.config()?;
    let mut spec = match c.sweep.take() {
        Some(s) if s.variable == variable => s,
        _ => SweepSpec::new(variable),
    };
    args.apply(&mut spec);
    c.sweep = Some(spec);
    c.validate()?;
    let out = open_output(c.output.as_deref())?;

    let mut failures = Vec::new();
    match run.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut table = CsvTable::new(out)?;
            let rows = run_sweep(&c, |row| {
                if let Ok(r) = &row.outcome {
                    eprintln!("{} = {}: {}", variable.name(), row.value, summary(r));
                }
                table.write_sweep_row(row)
            })?;
            table.finish()?.flush()?;
            failures.extend(rows.into_iter().filter_map(|r| r.outcome.err()));
        }
        Format::Report => {
            let rows = run_sweep(&c, |_| Ok(()))?;
            let mut entries = Vec::new();
            for row in rows {
                let (status, report) = match row.outcome {
                    Ok(r) => ("ok".to_string(), Some(r)),
                    Err(e) => {
                        let s = format!("error: {e}");
                        failures.push(e);
                        (s, None)
                    }
                };
                entries.push(SweepEntry { point: row.point, value: row.value, status, report });
            }
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &entries)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    // the table is complete; surface the first failing point in the exit code
    match failures.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn oracle(run: &RunArgs) -> Result<()> {
    let c = run.config()?;
    let validated = c.validate()?;
    let values = analytic_values(&validated, c.n_max)?;
    write_json(c.output.as_deref(), &values)
}

fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { run, dump_samples, dump_format } => {
            simulate(run, dump_samples.as_ref(), *dump_format)
        }
        Command::SweepPhi { run, sweep: s } => sweep(run, s, SweepVariable::Phi),
        Command::SweepEta { run, sweep: s } => sweep(run, s, SweepVariable::Eta),
        Command::Oracle { run } => oracle(run),
        Command::Selftest { seed, samples, gof_draws, out } => {
            let report = run_selftest(*seed, *samples, *gof_draws);
            for r in &report.unbiasedness {
                eprintln!("kernel {} eta={}: max {:.2} sigma", r.state.name(), r.eta, r.max_sigmas());
            }
            for (k, g) in report.goodness_of_fit.iter().enumerate() {
                eprintln!("pair fit {k}: chi2 = {:.1} / {} dof, p = {:.4}", g.chi2, g.dof, g.p_value);
            }
            write_json(out.as_deref(), &report)?;
            if report.passed {
                eprintln!("selftest passed");
                Ok(())
            } else {
                let failed = report.unbiasedness.iter().filter(|r| !r.passed(3.0)).count()
                    + report.goodness_of_fit.iter().filter(|g| g.p_value <= 1e-3).count();
                Err(Error::SelftestFailed(format!("{failed} check(s) out of tolerance")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
