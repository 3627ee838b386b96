//! Delay-recovery metrics, experiment sweeps and table emission.
//!
//! A cell aggregates per-trial NMSE values by averaging them in dB.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitude::{estimate_amplitudes_gd, estimate_amplitudes_ls, AmplitudeProblem, GdOptions};
use crate::autodiff::Tensor;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{FriError, Result};
use crate::kernels::{standard_support, BSplineKernel, Kernel};
use crate::sampler::{build_grid, ExampleDraw, ExampleSpec, SampleGrid, SnrPolicy};
use crate::seed::{self, stream};
use crate::signal::{GenerationRanges, PulseShape};
use crate::trainer::{batch_samples, train, TrainConfig, TrainMode};

/// Display floor for exact matches.
pub const NMSE_FLOOR_DB: f64 = -150.0;

/// Bundled reference results, keyed by suite.
pub const REFERENCE_JSON: &str = include_str!("../data/reference.json");

/// `10·log10(‖τ − τ̂‖² / ‖τ‖²)` after sorting both vectors ascending.
pub fn nmse_db(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    let mut t = truth.to_vec();
    let mut e = estimate.to_vec();
    t.sort_by(f64::total_cmp);
    e.sort_by(f64::total_cmp);
    nmse_db_paired(&t, &e)
}

/// Same ratio without reordering, for quantities paired by index (amplitudes).
pub fn nmse_db_paired(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(FriError::Shape {
            op: "nmse_db",
            left: vec![truth.len()],
            right: vec![estimate.len()],
        });
    }
    let den: f64 = truth.iter().map(|x| x * x).sum();
    if !(den > 0.0) {
        return Err(FriError::numeric("NMSE of an all-zero truth vector is undefined"));
    }
    let num: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    if num == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (num / den).log10()).max(NMSE_FLOOR_DB))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Delays,
    AmplitudesLs,
    AmplitudesGd,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Delays => "delays",
            Target::AmplitudesLs => "amplitudes_ls",
            Target::AmplitudesGd => "amplitudes_gd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseCell {
    /// `None` for noiseless cells.
    pub snr_db: Option<f64>,
    pub delta_tau: Option<f64>,
    pub target: Target,
    pub nmse_db: f64,
    pub trials: usize,
    pub model_id: String,
    /// Trials whose amplitude solve failed and were scored as all-zero estimates.
    #[serde(default)]
    pub failures: usize,
}

/// A trained encoder together with the measurement setup it was trained for.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub id: String,
    pub encoder: Encoder,
    pub kernel: Kernel,
    pub grid: SampleGrid,
    pub pulse: PulseShape,
    pub ranges: GenerationRanges,
}

impl ModelBundle {
    /// Loads `config.json`, `encoder.json`, `encoder.ckpt` and `kernel.json` from a run directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            fs::read_to_string(dir.join(name)).map_err(|e| FriError::config(format!("{}: {e}", dir.join(name).display())))
        };
        let cfg: TrainConfig = serde_json::from_str(&read("config.json")?)?;
        let enc_cfg: EncoderConfig = serde_json::from_str(&read("encoder.json")?)?;
        let kernel = Kernel::from_json(&serde_json::from_str(&read("kernel.json")?)?)?;
        let encoder = Encoder::load(enc_cfg, &dir.join("encoder.ckpt"))?;
        let id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        Ok(Self {
            id,
            encoder,
            kernel,
            grid: cfg.grid,
            pulse: cfg.pulse,
            ranges: cfg.ranges,
        })
    }
}

/// Which quantities a sweep scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Targets {
    pub amplitudes_ls: bool,
    pub amplitudes_gd: bool,
}

impl Targets {
    pub const DELAYS: Targets = Targets {
        amplitudes_ls: false,
        amplitudes_gd: false,
    };
    pub const ALL: Targets = Targets {
        amplitudes_ls: true,
        amplitudes_gd: true,
    };
}

struct TrialScore {
    delays: f64,
    ls: Option<f64>,
    gd: Option<f64>,
}

fn score_amplitudes(truth: &[f64], est: Result<Vec<f64>>) -> (f64, bool) {
    match est {
        Ok(a) => (nmse_db_paired(truth, &a).unwrap_or(0.0), false),
        Err(_) => (0.0, true),
    }
}

/// Scores one cell: `trials` fresh test draws from `spec`, seeded by `(seed, cell)`.
fn run_cell(bundle: &ModelBundle, spec: &ExampleSpec, trials: usize, seed_value: u64, cell: u64, targets: Targets) -> Result<Vec<TrialScore>> {
    let cell_seed = seed::derive(seed_value, stream::TEST, cell);
    let draws = (0..trials as u64)
        .into_par_iter()
        .map(|i| ExampleDraw::generate(spec, cell_seed, stream::TEST, i))
        .collect::<Result<Vec<_>>>()?;
    let l = bundle.encoder.config().output_len;
    let chunks: Vec<Result<Vec<TrialScore>>> = draws
        .par_chunks(256)
        .map(|chunk| {
            let y: Tensor = batch_samples(&bundle.kernel, chunk, bundle.pulse, &bundle.grid)?;
            let pred = bundle.encoder.predict_delays(&y, true)?;
            let n = bundle.grid.n;
            chunk
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let est = &pred.data()[i * l..(i + 1) * l];
                    let samples = &y.data()[i * n..(i + 1) * n];
                    let delays = nmse_db(d.signal.delays(), est)?;
                    let problem = AmplitudeProblem {
                        samples,
                        delays: est,
                        kernel: &bundle.kernel,
                        pulse: bundle.pulse,
                        grid: &bundle.grid,
                    };
                    let truth = d.signal.amplitudes();
                    let ls = targets.amplitudes_ls.then(|| score_amplitudes(truth, estimate_amplitudes_ls(&problem)));
                    let gd = targets.amplitudes_gd.then(|| {
                        let opts = GdOptions {
                            max_steps: 20_000,
                            tolerance: 1e-8,
                            ..Default::default()
                        };
                        score_amplitudes(truth, estimate_amplitudes_gd(&problem, opts, cell_seed ^ i as u64).map(|r| r.amplitudes))
                    });
                    Ok(TrialScore {
                        delays,
                        ls: ls.map(|s| if s.1 { f64::NAN } else { s.0 }),
                        gd: gd.map(|s| if s.1 { f64::NAN } else { s.0 }),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(trials);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn aggregate(scores: &[TrialScore], snr_db: Option<f64>, delta_tau: Option<f64>, model_id: &str) -> Vec<NmseCell> {
    let mut cells = Vec::new();
    let cell = |target: Target, vals: Vec<f64>| {
        let failures = vals.iter().filter(|v| v.is_nan()).count();
        let sum: f64 = vals.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).sum();
        NmseCell {
            snr_db,
            delta_tau,
            target,
            nmse_db: sum / vals.len().max(1) as f64,
            trials: vals.len(),
            model_id: model_id.to_string(),
            failures,
        }
    };
    cells.push(cell(Target::Delays, scores.iter().map(|s| s.delays).collect()));
    if scores.first().is_some_and(|s| s.ls.is_some()) {
        cells.push(cell(Target::AmplitudesLs, scores.iter().map(|s| s.ls.unwrap()).collect()));
    }
    if scores.first().is_some_and(|s| s.gd.is_some()) {
        cells.push(cell(Target::AmplitudesGd, scores.iter().map(|s| s.gd.unwrap()).collect()));
    }
    cells
}

fn snr_policy(snr: Option<f64>) -> SnrPolicy {
    snr.map_or(SnrPolicy::Clean, SnrPolicy::fixed)
}

/// Mean NMSE per SNR on fresh, unconstrained test draws.
pub fn run_snr_sweep(bundle: &ModelBundle, snrs: &[Option<f64>], trials: usize, seed_value: u64, targets: Targets) -> Result<Vec<NmseCell>> {
    let mut cells = Vec::new();
    for (i, &snr) in snrs.iter().enumerate() {
        let spec = ExampleSpec {
            ranges: bundle.ranges.clone(),
            resolution_band: None,
            snr: snr_policy(snr),
            n: bundle.grid.n,
        };
        let scores = run_cell(bundle, &spec, trials, seed_value, i as u64, targets)?;
        cells.extend(aggregate(&scores, snr, None, &bundle.id));
    }
    Ok(cells)
}

/// Cells keyed by `(Δτ, SNR)`; each `Δτ` selects signals with resolution in `[Δτ, Δτ + width)`.
pub fn run_resolution_sweep(
    bundle: &ModelBundle,
    deltas: &[f64],
    width: f64,
    snrs: &[Option<f64>],
    trials: usize,
    seed_value: u64,
) -> Result<Vec<NmseCell>> {
    let mut cells = Vec::new();
    for (i, &dt) in deltas.iter().enumerate() {
        for (j, &snr) in snrs.iter().enumerate() {
            let spec = ExampleSpec {
                ranges: bundle.ranges.clone(),
                resolution_band: Some((dt, dt + width)),
                snr: snr_policy(snr),
                n: bundle.grid.n,
            };
            let cell = 1_000 + (i * snrs.len() + j) as u64;
            let scores = run_cell(bundle, &spec, trials, seed_value, cell, Targets::DELAYS)?;
            cells.extend(aggregate(&scores, snr, Some(dt), &bundle.id));
        }
    }
    Ok(cells)
}

/// SNR sweep over several model orders; one bundle per `(L, N)` configuration.
pub fn run_model_order_sweep(bundles: &[ModelBundle], snrs: &[Option<f64>], trials: usize, seed_value: u64) -> Result<Vec<NmseCell>> {
    let mut cells = Vec::new();
    for b in bundles {
        cells.extend(run_snr_sweep(b, snrs, trials, seed_value, Targets::DELAYS)?);
    }
    Ok(cells)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// Long-format CSV: `snr_db,delta_tau,target,nmse_db,trials,model_id`.
pub fn cells_csv(cells: &[NmseCell]) -> String {
    let mut s = String::from("snr_db,delta_tau,target,nmse_db,trials,model_id\n");
    for c in cells {
        let snr = c.snr_db.map_or_else(|| "inf".to_string(), |x| format!("{x}"));
        let _ = writeln!(s, "{snr},{},{},{:.4},{},{}", fmt_opt(c.delta_tau), c.target.name(), c.nmse_db, c.trials, c.model_id);
    }
    s
}

/// One `(x, y)` series per model and target; `x` is `Δτ` for resolution cells, SNR otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub x_name: &'static str,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn plot_series(cells: &[NmseCell]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for c in cells {
        let (label, x_name, x) = match c.delta_tau {
            Some(dt) => (
                format!("{}/{}/snr={}", c.model_id, c.target.name(), c.snr_db.map_or("inf".into(), |v| v.to_string())),
                "delta_tau",
                dt,
            ),
            None => (format!("{}/{}", c.model_id, c.target.name()), "snr_db", c.snr_db.unwrap_or(f64::INFINITY)),
        };
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => {
                s.x.push(x);
                s.y.push(c.nmse_db);
            }
            None => out.push(Series {
                label,
                x_name,
                x: vec![x],
                y: vec![c.nmse_db],
            }),
        }
    }
    out
}

#[derive(Debug, Clone, Deserialize)]
pub struct ReferenceSuite {
    pub description: String,
    pub target: String,
    pub snr_db: Vec<f64>,
    pub columns: std::collections::BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ReferenceFile {
    pub source: String,
    pub suites: std::collections::BTreeMap<String, ReferenceSuite>,
}

pub fn reference_values() -> ReferenceFile {
    serde_json::from_str(REFERENCE_JSON).expect("bundled reference file parses")
}

/// Wide table, one row per SNR: measured columns `<model>:<target>` then `ref:<column>`.
pub fn summary_csv(cells: &[NmseCell], reference: Option<&ReferenceSuite>) -> String {
    let mut snrs: Vec<Option<f64>> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    for c in cells.iter().filter(|c| c.delta_tau.is_none()) {
        if !snrs.contains(&c.snr_db) {
            snrs.push(c.snr_db);
        }
        let name = format!("{}:{}", c.model_id, c.target.name());
        if !cols.contains(&name) {
            cols.push(name);
        }
    }
    let mut s = String::from("snr_db");
    for c in &cols {
        let _ = write!(s, ",{c}");
    }
    if let Some(r) = reference {
        for name in r.columns.keys() {
            let _ = write!(s, ",ref:{name}");
        }
    }
    s.push('\n');
    for snr in snrs {
        s.push_str(&snr.map_or("inf".into(), |v| v.to_string()));
        for col in &cols {
            let v = cells
                .iter()
                .find(|c| c.delta_tau.is_none() && c.snr_db == snr && format!("{}:{}", c.model_id, c.target.name()) == *col);
            let _ = write!(s, ",{}", v.map_or(String::new(), |c| format!("{:.4}", c.nmse_db)));
        }
        if let Some(r) = reference {
            let idx = snr.and_then(|v| r.snr_db.iter().position(|x| *x == v));
            for vals in r.columns.values() {
                let _ = write!(s, ",{}", idx.map_or(String::new(), |i| vals[i].to_string()));
            }
        }
        s.push('\n');
    }
    s
}

/// Writes `cells.csv`, `cells.json`, `summary.csv` and `plotdata.json` under `dir`.
pub fn write_results(dir: &Path, cells: &[NmseCell], reference: Option<&ReferenceSuite>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("cells.csv"), cells_csv(cells))?;
    fs::write(dir.join("cells.json"), serde_json::to_string_pretty(cells)? + "\n")?;
    fs::write(dir.join("summary.csv"), summary_csv(cells, reference))?;
    fs::write(dir.join("plotdata.json"), serde_json::to_string_pretty(&plot_series(cells))? + "\n")?;
    Ok(())
}

/// Training and evaluation scale for suites that train their own models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Seconds: a smoke test of the whole pipeline.
    Tiny,
    /// 10⁵ examples per epoch, 50 epochs.
    Desk,
    /// 10⁶ examples per epoch, 2000 epochs.
    Full,
}

impl std::str::FromStr for Budget {
    type Err = FriError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Budget::Tiny),
            "desk" => Ok(Budget::Desk),
            "full" => Ok(Budget::Full),
            _ => Err(FriError::config(format!("unknown budget `{s}`; expected tiny, desk or full"))),
        }
    }
}

impl Budget {
    pub fn trials(self) -> usize {
        match self {
            Budget::Tiny => 50,
            Budget::Desk | Budget::Full => 1000,
        }
    }

    /// Applies the budget's epoch, batch and data sizes.
    pub fn apply(self, cfg: &mut TrainConfig) {
        match self {
            Budget::Tiny => {
                cfg.epochs = 3;
                cfg.examples_per_epoch = 2048;
                cfg.batch_size = 256;
                cfg.heldout_examples = 200;
            }
            Budget::Desk => {
                cfg.epochs = 50;
                cfg.examples_per_epoch = 100_000;
                cfg.batch_size = 8192;
            }
            Budget::Full => {
                cfg.epochs = 2000;
                cfg.examples_per_epoch = 1_000_000;
                cfg.batch_size = 8192;
            }
        }
    }
}

/// Kernel starting points used by the suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Gaussian,
    GaussianPair,
    LearnableSmooth,
    LearnableGaussian,
}

impl KernelChoice {
    pub fn id(self) -> &'static str {
        match self {
            KernelChoice::Gaussian => "gaussian",
            KernelChoice::GaussianPair => "gaussian_pair",
            KernelChoice::LearnableSmooth => "learnable_smooth",
            KernelChoice::LearnableGaussian => "learnable_gaussian",
        }
    }

    /// Initial kernel and training mode.
    pub fn build(self, seed_value: u64) -> Result<(Kernel, TrainMode)> {
        Ok(match self {
            KernelChoice::Gaussian => (Kernel::standard_gaussian(), TrainMode::EncoderOnly),
            KernelChoice::GaussianPair => (Kernel::standard_gaussian_pair(), TrainMode::EncoderOnly),
            KernelChoice::LearnableSmooth => (BSplineKernel::smooth_init(52, 0.3, seed_value)?.into(), TrainMode::Joint),
            KernelChoice::LearnableGaussian => (BSplineKernel::gaussian_init(52, 0.3, 0.038)?.into(), TrainMode::Joint),
        })
    }
}

/// Trains one suite model (`L` pulses, `N` samples on the full-support grid) and
/// returns it as a bundle, writing the run directory to `out`.
pub fn train_suite_model(choice: KernelChoice, order: usize, n: usize, budget: Budget, seed_value: u64, out: &Path) -> Result<ModelBundle> {
    let (kernel, mode) = choice.build(seed_value)?;
    let grid = build_grid(standard_support(), -0.48, 0.52, n)?;
    let mut cfg = TrainConfig::desk(mode, grid, order);
    cfg.seed = seed_value;
    budget.apply(&mut cfg);
    let encoder = Encoder::new(EncoderConfig::standard(n, order), seed_value)?;
    train(&cfg, kernel, encoder, Some(out))?;
    let mut bundle = ModelBundle::load(out)?;
    bundle.id = format!("{}_l{order}_n{n}", choice.id());
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_examples() {
        assert!((nmse_db(&[0.2, 0.5], &[0.202, 0.498]).unwrap() - (-45.593)).abs() < 1e-3);
        assert_eq!(nmse_db(&[0.2, 0.5], &[0.2, 0.5]).unwrap(), NMSE_FLOOR_DB);
        assert!(nmse_db(&[0.2, 0.5], &[0.4, 1.0]).unwrap().abs() < 1e-12);
        assert!(nmse_db(&[0.0, 0.0], &[0.1, 0.0]).is_err());
        assert_eq!(nmse_db(&[0.5, 0.2], &[0.202, 0.498]).unwrap(), nmse_db(&[0.2, 0.5], &[0.202, 0.498]).unwrap());
    }

    #[test]
    fn reference_file_is_consistent() {
        let r = reference_values();
        for suite in r.suites.values() {
            for col in suite.columns.values() {
                assert_eq!(col.len(), suite.snr_db.len());
            }
        }
        assert_eq!(r.suites["table1"].columns["learnable_gaussian"][3], -60.5);
    }

    #[test]
    fn csv_schema() {
        let cells = vec![NmseCell {
            snr_db: Some(40.0),
            delta_tau: Some(0.05),
            target: Target::Delays,
            nmse_db: -30.0,
            trials: 10,
            model_id: "m".into(),
            failures: 0,
        }];
        assert_eq!(cells_csv(&cells), "snr_db,delta_tau,target,nmse_db,trials,model_id\n40,0.05,delays,-30.0000,10,m\n");
        assert!(run_resolution_sweep_empty());
    }

    fn run_resolution_sweep_empty() -> bool {
        let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
        let bundle = ModelBundle {
            id: "m".into(),
            encoder: Encoder::new(EncoderConfig::standard(21, 2), 0).unwrap(),
            kernel: Kernel::standard_gaussian(),
            grid,
            pulse: PulseShape::Dirac,
            ranges: GenerationRanges::standard(2),
        };
        run_resolution_sweep(&bundle, &[], 0.01, &[Some(40.0)], 10, 1).unwrap().is_empty()
    }
}
