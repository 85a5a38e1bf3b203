//! Run orchestration: configuration, parallel generation and estimation,
//! reports and sweeps.
//!
//! Events of a run are split into chunks of [`CHUNK_SIZE`]; chunk `c` of
//! sweep point `p` always draws from [`stream`]`(seed, p, c)` and is reduced
//! in chunk order. Results therefore depend on the seed only, never on the
//! number of worker threads.
//!
//! # Config file
//!
//! TOML, every key optional:
//!
//! ```toml
//! mean_photon = 0.5        # or lambda = 0.577; not both
//! crystal_phase = 3.141592653589793
//! eta = 0.85
//! alpha = 0.0
//! beta = 1.1780972450961724
//! alpha2 = 0.7853981633974483
//! beta2 = 0.39269908169872983
//! samples = 1000000
//! blocks = 20
//! seed = 1
//! workers = 8
//! n_max = 8
//!
//! [sweep]
//! variable = "phi"         # or "eta"
//! start = 0.0
//! stop = 6.283185307179586
//! steps = 17               # or values = [..]
//! ```

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::{csv_error, DumpFormat, DumpWriter};
use crate::error::{ConfigViolation, Error, Result};
use crate::estimator::{BlockLayout, EventAccumulator};
use crate::kernel::PatternKernel;
use crate::model::{
    lambda_from_mean_photon, mean_photon, validate_run_config, BellAngles, BlockedEstimate,
    QuadSample, RawRunConfig, ValidatedRun,
};
use crate::oracle::{
    bell_closed_form, build_state, p11_closed_form, pair_probabilities, rotate_and_project,
    DEFAULT_N_MAX,
};
use crate::sampler::{stream, EventSampler};

/// Receives raw events in run order.
pub type EventSink<'a> = &'a mut dyn FnMut(&[QuadSample]) -> Result<()>;

/// Events per random stream.
pub const CHUNK_SIZE: u64 = 16_384;

/// Chunks handed to the pool per batch, per worker.
const CHUNKS_PER_WORKER: usize = 8;

/// Default `eta` sweep points.
pub const DEFAULT_ETA_POINTS: [f64; 5] = [0.65, 0.75, 0.85, 0.95, 1.0];

pub const DEFAULT_PHI_STEPS: usize = 17;

/// Largest accepted number of sweep points.
pub const MAX_SWEEP_POINTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Phi,
    Eta,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Phi => "phi",
            SweepVariable::Eta => "eta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Explicit points; overrides `start`, `stop` and `steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable) -> Self {
        Self { variable, start: None, stop: None, steps: None, values: None }
    }

    /// Sweep points. Without explicit bounds `phi` runs over `[0, 2pi]` in
    /// 17 steps and `eta` over [`DEFAULT_ETA_POINTS`].
    pub fn points(&self) -> Vec<f64> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        let (start, stop, steps) = match self.variable {
            SweepVariable::Phi => (
                self.start.unwrap_or(0.0),
                self.stop.unwrap_or(TAU),
                self.steps.unwrap_or(DEFAULT_PHI_STEPS),
            ),
            SweepVariable::Eta => {
                if self.start.is_none() && self.stop.is_none() && self.steps.is_none() {
                    return DEFAULT_ETA_POINTS.to_vec();
                }
                (
                    self.start.unwrap_or(DEFAULT_ETA_POINTS[0]),
                    self.stop.unwrap_or(1.0),
                    self.steps.unwrap_or(DEFAULT_ETA_POINTS.len()),
                )
            }
        };
        linspace(start, stop, steps)
    }

    fn violations(&self) -> Vec<ConfigViolation> {
        let mut errs = Vec::new();
        let sweep = |m: String| ConfigViolation::Sweep(m);
        if self.values.is_none() {
            match self.steps {
                Some(0) => errs.push(sweep("steps must be at least 1".into())),
                Some(n) if n > MAX_SWEEP_POINTS => {
                    errs.push(sweep(format!("steps = {n} exceeds {MAX_SWEEP_POINTS}")))
                }
                _ => {}
            }
            for (name, v) in [("start", self.start), ("stop", self.stop)] {
                if v.is_some_and(|v| !v.is_finite()) {
                    errs.push(sweep(format!("{name} is not finite")));
                }
            }
        } else if self.values.as_ref().is_some_and(Vec::is_empty) {
            errs.push(sweep("values is empty".into()));
        }
        if !errs.is_empty() {
            return errs;
        }
        for v in self.points() {
            let ok = match self.variable {
                SweepVariable::Phi => v.is_finite(),
                SweepVariable::Eta => v.is_finite() && v > 0.5 && v <= 1.0,
            };
            if !ok {
                errs.push(sweep(format!("{} = {v} outside its domain", self.variable.name())));
            }
        }
        errs
    }
}

fn linspace(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Where to write raw events of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: DumpFormat,
}

/// Run configuration as read from TOML or assembled from flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Real gain `|Lambda|`. Mutually exclusive with `mean_photon`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Mean photon number per mode. Defaults to 0.5 when neither is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_photon: Option<f64>,
    pub crystal_phase: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub samples: u64,
    pub blocks: u64,
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub n_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<DumpSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

pub const DEFAULT_MEAN_PHOTON: f64 = 0.5;

impl Default for RunConfig {
    fn default() -> Self {
        let a = BellAngles::standard();
        Self {
            lambda: None,
            mean_photon: None,
            crystal_phase: PI,
            eta: 0.85,
            alpha: a.alpha,
            beta: a.beta,
            alpha2: a.alpha_prime,
            beta2: a.beta_prime,
            samples: 1_000_000,
            blocks: 20,
            seed: 0,
            workers: None,
            n_max: DEFAULT_N_MAX,
            output: None,
            dump: None,
            sweep: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn angles(&self) -> BellAngles {
        BellAngles::new(self.alpha, self.beta, self.alpha2, self.beta2)
    }

    /// Worker count, falling back to the number of available cores.
    pub fn resolved_workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn gain(&self) -> std::result::Result<f64, ConfigViolation> {
        match (self.lambda, self.mean_photon) {
            (Some(_), Some(_)) => Err(ConfigViolation::GainSpecification),
            (Some(l), None) => Ok(l),
            (None, n) => {
                let n = n.unwrap_or(DEFAULT_MEAN_PHOTON);
                lambda_from_mean_photon(n).map_err(|_| ConfigViolation::InvalidMeanPhoton(n))
            }
        }
    }

    /// Check the whole configuration, sweep included, reporting every
    /// violation.
    pub fn validate(&self) -> Result<ValidatedRun> {
        let mut errs = Vec::new();
        let lambda = self.gain().unwrap_or_else(|e| {
            errs.push(e);
            0.0
        });
        let raw = RawRunConfig {
            lambda: Complex64::new(lambda, 0.0),
            phi: self.crystal_phase,
            angles: self.angles(),
            eta: self.eta,
            n_samples: self.samples,
            n_blocks: self.blocks,
            seed: self.seed,
        };
        // a swept eta replaces the base value
        let eta_swept = self.sweep.as_ref().is_some_and(|s| s.variable == SweepVariable::Eta);
        let base = validate_run_config(&RawRunConfig {
            eta: if eta_swept { 1.0 } else { raw.eta },
            ..raw
        });
        let run = match base {
            Ok(run) => Some(run),
            Err(v) => {
                errs.extend(v);
                None
            }
        };
        if self.workers == Some(0) {
            errs.push(ConfigViolation::NoWorkers);
        }
        if self.n_max < 2 {
            errs.push(ConfigViolation::Truncation(self.n_max));
        }
        if let Some(s) = &self.sweep {
            errs.extend(s.violations());
        }
        match run {
            Some(run) if errs.is_empty() => Ok(run),
            _ => Err(Error::Config(errs)),
        }
    }

    /// The configuration of one sweep point.
    fn at_point(&self, variable: SweepVariable, value: f64) -> RunConfig {
        let mut c = self.clone();
        c.sweep = None;
        match variable {
            SweepVariable::Phi => c.crystal_phase = value,
            SweepVariable::Eta => c.eta = value,
        }
        c
    }
}

/// Parameters of a finished run, echoed into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub lambda: f64,
    pub mean_photon: f64,
    pub crystal_phase: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub samples: u64,
    pub blocks: u64,
    pub seed: u64,
    pub point: u64,
    pub workers: usize,
    pub n_max: usize,
}

/// Oracle values for the same point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticValues {
    pub bell: f64,
    pub correlations: [f64; 4],
    pub p11: f64,
    /// Closed-form `B` for comparison with the truncated oracle.
    pub bell_closed_form: f64,
    /// Probability mass lost to Fock truncation.
    pub truncation_deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub bell: BlockedEstimate,
    /// In `(a,b), (a,b'), (a',b'), (a',b)` order.
    pub correlations: [BlockedEstimate; 4],
    pub p11: BlockedEstimate,
    pub analytic: AnalyticValues,
    /// `(B - 2) / sigma_B`.
    pub violation_sigmas: f64,
    /// True when `B` exceeds 2 by more than three standard errors.
    pub violation: bool,
    pub wall_time_s: f64,
    pub samples_per_second: f64,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Exact values for a validated point. Fails with
/// [`Error::DegenerateState`] when the state carries no photon pairs.
pub fn analytic_values(run: &ValidatedRun, n_max: usize) -> Result<AnalyticValues> {
    let pairs = run.angles.pairs();
    let mut correlations = [0.0; 4];
    let mut p11 = 0.0;
    for (c, &(a, b)) in correlations.iter_mut().zip(&pairs) {
        let p = pair_probabilities(&run.params, a, b, n_max)?;
        *c = p.correlation();
        p11 = p.p11;
    }
    let state = build_state(&run.params, n_max)?;
    let deficit = rotate_and_project(&state, pairs[0].0, pairs[0].1, n_max)?.deficit();
    debug_assert!((p11 - p11_closed_form(&run.params)).abs() < 1e-6 + 10.0 * deficit);
    Ok(AnalyticValues {
        bell: crate::model::bell_combination(correlations),
        correlations,
        p11,
        bell_closed_form: bell_closed_form(run.params.phi(), &run.angles),
        truncation_deficit: deficit,
    })
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// Draw and accumulate all events of one point. When `dump` is given the
/// raw events are written to it in run order.
pub fn simulate(
    run: &ValidatedRun,
    point: u64,
    workers: usize,
    mut dump: Option<EventSink<'_>>,
) -> Result<EventAccumulator> {
    let layout = BlockLayout::new(run.n_samples, run.n_blocks)?;
    let pairs = run.angles.pairs();
    let sampler = EventSampler::new(&run.params, run.eta);
    let kernel = PatternKernel::tabulated(run.eta);
    let keep = dump.is_some();
    let pool = build_pool(workers)?;

    let n_chunks = run.n_samples.div_ceil(CHUNK_SIZE);
    let batch = (workers * CHUNKS_PER_WORKER) as u64;
    let mut total = EventAccumulator::new(layout, &pairs);

    let chunk = |c: u64| {
        let start = c * CHUNK_SIZE;
        let end = (start + CHUNK_SIZE).min(run.n_samples);
        let mut rng = stream(run.seed, point, c);
        let mut acc = EventAccumulator::new(layout, &pairs);
        let mut events = Vec::with_capacity(if keep { (end - start) as usize } else { 0 });
        for i in start..end {
            let ev = sampler.sample(&mut rng);
            acc.add(i, &kernel.event(&ev));
            if keep {
                events.push(ev);
            }
        }
        (acc, events)
    };

    let mut first = 0;
    while first < n_chunks {
        let last = (first + batch).min(n_chunks);
        let results: Vec<_> = pool.install(|| (first..last).into_par_iter().map(chunk).collect());
        for (acc, events) in &results {
            total.merge(acc);
            if let Some(w) = dump.as_mut() {
                w(events)?;
            }
        }
        first = last;
    }
    Ok(total)
}

/// Run one point with sweep index `point`. The oracle runs first, so a
/// degenerate state fails before any sampling.
pub fn run_point(config: &RunConfig, point: u64) -> Result<RunReport> {
    run_point_with_dump(config, point, None)
}

fn run_point_with_dump(
    config: &RunConfig,
    point: u64,
    dump: Option<EventSink<'_>>,
) -> Result<RunReport> {
    let run = config.validate()?;
    let analytic = analytic_values(&run, config.n_max)?;
    let workers = config.resolved_workers();

    let started = Instant::now();
    let acc = simulate(&run, point, workers, dump)?;
    let correlations = [
        acc.correlation(0)?,
        acc.correlation(1)?,
        acc.correlation(2)?,
        acc.correlation(3)?,
    ];
    let bell = acc.bell([0, 1, 2, 3])?;
    let p11 = acc.p11()?;
    let wall = started.elapsed().as_secs_f64();

    let lambda = run.params.lambda().norm();
    let violation_sigmas = (bell.value - 2.0) / bell.std_error;
    Ok(RunReport {
        config: ConfigEcho {
            lambda,
            mean_photon: mean_photon(lambda),
            crystal_phase: run.params.phi(),
            eta: run.eta.get(),
            alpha: run.angles.alpha,
            beta: run.angles.beta,
            alpha2: run.angles.alpha_prime,
            beta2: run.angles.beta_prime,
            samples: run.n_samples,
            blocks: run.n_blocks,
            seed: run.seed,
            point,
            workers,
            n_max: config.n_max,
        },
        bell,
        correlations,
        p11,
        analytic,
        violation_sigmas,
        violation: violation_sigmas > 3.0,
        wall_time_s: wall,
        samples_per_second: run.n_samples as f64 / wall.max(1e-9),
    })
}

/// Single run; equivalent to point 0 of a sweep. Writes the raw event dump
/// when the config asks for one.
pub fn run_single(config: &RunConfig) -> Result<RunReport> {
    let Some(spec) = &config.dump else {
        return run_point(config, 0);
    };
    config.validate()?;
    let file = std::io::BufWriter::new(std::fs::File::create(&spec.path)?);
    let mut writer = DumpWriter::new(file, spec.format)?;
    let mut sink = |ev: &[QuadSample]| writer.write(ev);
    let report = run_point_with_dump(config, 0, Some(&mut sink))?;
    writer.finish()?;
    Ok(report)
}

/// One sweep point's outcome.
#[derive(Debug)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub point: u64,
    pub value: f64,
    pub outcome: Result<RunReport>,
}

/// Run every point of the config's sweep, calling `on_row` as each finishes.
/// A failing point is reported in its row and does not stop the sweep; an
/// error from `on_row` does.
pub fn run_sweep(
    config: &RunConfig,
    mut on_row: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<Vec<SweepRow>> {
    let Some(spec) = &config.sweep else {
        return Err(Error::Config(vec![ConfigViolation::Sweep("no sweep configured".into())]));
    };
    config.validate()?;
    let mut rows = Vec::new();
    for (i, value) in spec.points().into_iter().enumerate() {
        let point_config = config.at_point(spec.variable, value);
        let outcome = run_point(&point_config, i as u64);
        let row = SweepRow { variable: spec.variable, point: i as u64, value, outcome };
        on_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Columns of the results table. `C1..C4` are the correlations at
/// `(a,b), (a,b'), (a',b'), (a',b)`. Timing is deliberately absent so that
/// identical runs produce identical bytes.
pub const CSV_COLUMNS: [&str; 20] = [
    "variable",
    "point",
    "value",
    "status",
    "B",
    "sigma_B",
    "C1",
    "sigma_C1",
    "C2",
    "sigma_C2",
    "C3",
    "sigma_C3",
    "C4",
    "sigma_C4",
    "P11",
    "sigma_P11",
    "analytic_B",
    "n_samples",
    "n_blocks",
    "seed",
];

/// Results table writer; each row is flushed as soon as it is written.
pub struct CsvTable<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> CsvTable<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut out = csv::WriterBuilder::new().from_writer(writer);
        out.write_record(CSV_COLUMNS).map_err(csv_error)?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write_row(
        &mut self,
        variable: &str,
        point: u64,
        value: f64,
        outcome: &Result<RunReport>,
    ) -> Result<()> {
        let mut rec = vec![variable.to_string(), point.to_string(), value.to_string()];
        match outcome {
            Ok(r) => {
                rec.push("ok".into());
                let mut est = vec![r.bell];
                est.extend(r.correlations);
                est.push(r.p11);
                for e in est {
                    rec.push(e.value.to_string());
                    rec.push(e.std_error.to_string());
                }
                rec.push(r.analytic.bell.to_string());
                rec.push(r.config.samples.to_string());
                rec.push(r.config.blocks.to_string());
                rec.push(r.config.seed.to_string());
            }
            Err(e) => {
                rec.push(format!("error: {e}"));
                rec.resize(CSV_COLUMNS.len(), String::new());
            }
        }
        self.out.write_record(&rec).map_err(csv_error)?;
        self.out.flush()?;
        Ok(())
    }

    pub fn write_sweep_row(&mut self, row: &SweepRow) -> Result<()> {
        self.write_row(row.variable.name(), row.point, row.value, &row.outcome)
    }

    pub fn finish(self) -> Result<W> {
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}
