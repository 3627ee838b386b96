//! Command-line front end. Every subcommand reads JSON configs, accepts flag
//! overrides and writes its primary artifact to `--out` or stdout.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::amplitude::{estimate_amplitudes_gd, estimate_amplitudes_ls, AmplitudeProblem, GdOptions};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{FriError, Result};
use crate::eval::{
    reference_values, run_model_order_sweep, run_resolution_sweep, run_snr_sweep, train_suite_model, write_results, Budget,
    KernelChoice, ModelBundle, NmseCell, Targets,
};
use crate::hardware::{
    poles_to_rc, realization_report, realize, series_realization, simulate_bench, BenchScenario, ESeries, EncoderCheck,
    DEFAULT_CAPACITANCE,
};
use crate::kernels::{Kernel, SamplingKernel};
use crate::oracle::grid_search;
use crate::sampler::{build_grid, read_ndjson, write_ndjson, ExampleDraw, ExampleRecord, ExampleSpec, SampleGrid, SnrPolicy};
use crate::seed::stream;
use crate::signal::{GenerationRanges, PulseShape};
use crate::trainer::{train, TrainConfig, TrainMode};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "FRI_FORGE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "fri-forge", version, about = "Learnable-kernel FRI sampling: data, training, evaluation and analog mapping")]
pub struct Cli {
    /// Worker threads (default: FRI_FORGE_THREADS, else all cores). Use 1 for bit-reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate labelled examples as NDJSON.
    Generate(GenerateArgs),
    /// Train an encoder, optionally jointly with a learnable kernel.
    Train(TrainArgs),
    /// Run an evaluation suite and write tables and plot data.
    Eval(EvalArgs),
    /// Exhaustive grid-search delay estimation over NDJSON examples.
    Oracle(OracleArgs),
    /// Estimate amplitudes for NDJSON examples with predicted delays.
    Amplitudes(AmplitudeArgs),
    /// Analog (Sallen-Key) realisation of two-pole kernels.
    #[command(subcommand)]
    Hw(HwCommand),
    /// Kernel utilities.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Encoder utilities.
    #[command(subcommand)]
    Encoder(EncoderCommand),
}

#[derive(Subcommand, Debug)]
enum HwCommand {
    /// Map poles to resistor values for given capacitors.
    Map(HwMapArgs),
    /// Simulate the two-pulse bench test through a realised circuit and a trained encoder.
    SimulateBench(BenchArgs),
}

#[derive(Subcommand, Debug)]
enum KernelCommand {
    /// Write `t,g(t)` samples of a kernel as CSV.
    Dump(KernelDumpArgs),
}

#[derive(Subcommand, Debug)]
enum EncoderCommand {
    /// Print the layer table and parameter count.
    Info(EncoderInfoArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    /// Cover the whole filtered-signal support, `T_s = (span of delays + kernel support)/N`.
    Full,
    /// Cover only the delay interval, `T_s = (τ_max − τ_min)/N` (shifted one period for causal kernels).
    Window,
}

fn make_grid(choice: GridChoice, kernel: &Kernel, ranges: &GenerationRanges, n: usize) -> Result<SampleGrid> {
    match choice {
        GridChoice::Full => build_grid(kernel.support(), ranges.tau_min, ranges.tau_max, n),
        GridChoice::Window => SampleGrid::window_for(&kernel.support(), ranges.tau_min, ranges.tau_max, n),
    }
}

/// Window for causal (two-exponential) kernels, whose full support runs to
/// many time constants; full support otherwise.
fn default_grid(kernel: &Kernel) -> GridChoice {
    if kernel.support().t_min >= 0.0 {
        GridChoice::Window
    } else {
        GridChoice::Full
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FriError::config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_kernel(path: Option<&Path>) -> Result<Kernel> {
    match path {
        Some(p) => Kernel::from_json(&read_json::<Value>(p)?),
        None => Ok(Kernel::standard_gaussian()),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, bytes)?;
        }
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn pretty(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateConfig {
    ranges: GenerationRanges,
    n: usize,
    grid: Option<GridChoice>,
    kernel: Option<Value>,
    snr: SnrPolicy,
    count: usize,
    pulse: PulseShape,
    resolution_band: Option<(f64, f64)>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            ranges: GenerationRanges::standard(2),
            n: 21,
            grid: None,
            kernel: None,
            snr: SnrPolicy::Clean,
            count: 100,
            pulse: PulseShape::Dirac,
            resolution_band: None,
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kernel JSON (default: truncated Gaussian).
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Number of examples.
    #[arg(long)]
    count: Option<usize>,
    /// Pulses per signal (L).
    #[arg(long)]
    order: Option<usize>,
    /// Samples per example (N).
    #[arg(long)]
    n: Option<usize>,
    /// Sampling grid convention (default: window for causal kernels, else full).
    #[arg(long, value_enum)]
    grid: Option<GridChoice>,
    /// Fixed SNR in dB (default: noiseless).
    #[arg(long)]
    snr: Option<f64>,
    /// Rectangle pulse width in seconds (default: Dirac pulses).
    #[arg(long)]
    pulse_width: Option<f64>,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output NDJSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut cfg: GenerateConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GenerateConfig::default(),
    };
    if let Some(k) = &a.kernel {
        cfg.kernel = Some(read_json(k)?);
    }
    if let Some(v) = a.count {
        cfg.count = v;
    }
    if let Some(v) = a.order {
        cfg.ranges.order = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if a.grid.is_some() {
        cfg.grid = a.grid;
    }
    if let Some(v) = a.snr {
        cfg.snr = SnrPolicy::fixed(v);
    }
    if let Some(w) = a.pulse_width {
        cfg.pulse = PulseShape::rectangle(w)?;
    }
    let kernel = match &cfg.kernel {
        Some(v) => Kernel::from_json(v)?,
        None => Kernel::standard_gaussian(),
    };
    cfg.ranges.validate()?;
    cfg.snr.validate()?;
    cfg.pulse.validate()?;
    let grid = make_grid(cfg.grid.unwrap_or(default_grid(&kernel)), &kernel, &cfg.ranges, cfg.n)?;
    let spec = ExampleSpec {
        ranges: cfg.ranges.clone(),
        resolution_band: cfg.resolution_band,
        snr: cfg.snr,
        n: grid.n,
    };
    let records = (0..cfg.count as u64)
        .map(|i| {
            let d = ExampleDraw::generate(&spec, a.seed, stream::DATASET, i)?;
            let s = d.samples(cfg.pulse, &kernel, &grid)?;
            Ok(ExampleRecord::new(&s, &d.signal))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut buf = Vec::new();
    write_ndjson(&mut buf, &records)?;
    emit(a.out.as_deref(), &buf)
}

// ---------------------------------------------------------------- train

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    EncoderOnly,
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BudgetArg {
    Tiny,
    Desk,
    Full,
}

impl From<BudgetArg> for Budget {
    fn from(b: BudgetArg) -> Self {
        match b {
            BudgetArg::Tiny => Budget::Tiny,
            BudgetArg::Desk => Budget::Desk,
            BudgetArg::Full => Budget::Full,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Full training config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training problem.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Kernel JSON (initial kernel in joint mode).
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Encoder architecture JSON (default: standard encoder for N and L).
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Budget preset for epochs, batch size and examples per epoch.
    #[arg(long, value_enum)]
    budget: Option<BudgetArg>,
    /// Passes over freshly drawn data.
    #[arg(long)]
    epochs: Option<usize>,
    /// Examples per optimiser step.
    #[arg(long)]
    batch: Option<usize>,
    /// Fresh examples per epoch.
    #[arg(long)]
    examples: Option<usize>,
    /// Peak encoder learning rate (cosine schedule).
    #[arg(long)]
    lr_encoder: Option<f64>,
    /// Peak kernel learning rate (joint mode).
    #[arg(long)]
    lr_kernel: Option<f64>,
    /// Pulses per signal (L).
    #[arg(long)]
    order: Option<usize>,
    /// Samples per example (N).
    #[arg(long)]
    n: Option<usize>,
    /// Sampling grid convention (default: window for causal kernels, else full).
    #[arg(long, value_enum)]
    grid: Option<GridChoice>,
    /// Write extra checkpoints every this many epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let kernel = load_kernel(a.kernel.as_deref())?;
    let mut cfg = match &a.config {
        Some(p) => read_json::<TrainConfig>(p)?,
        None => {
            let mode = match a.mode.unwrap_or(if kernel.is_learnable() { ModeArg::Joint } else { ModeArg::EncoderOnly }) {
                ModeArg::Joint => TrainMode::Joint,
                ModeArg::EncoderOnly => TrainMode::EncoderOnly,
            };
            let ranges = GenerationRanges::standard(a.order.unwrap_or(2));
            let grid = make_grid(a.grid.unwrap_or(default_grid(&kernel)), &kernel, &ranges, a.n.unwrap_or(21))?;
            TrainConfig::desk(mode, grid, ranges.order)
        }
    };
    if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Joint => TrainMode::Joint,
            ModeArg::EncoderOnly => TrainMode::EncoderOnly,
        };
    }
    if a.config.is_some() && (a.order.is_some() || a.n.is_some() || a.grid.is_some()) {
        if let Some(l) = a.order {
            cfg.ranges.order = l;
        }
        cfg.grid = make_grid(a.grid.unwrap_or(default_grid(&kernel)), &kernel, &cfg.ranges, a.n.unwrap_or(cfg.grid.n))?;
    }
    if let Some(b) = a.budget {
        Budget::from(b).apply(&mut cfg);
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = a.$flag { cfg.$field = v; })*};
    }
    set!(epochs => epochs, batch => batch_size, examples => examples_per_epoch, lr_encoder => lr_encoder,
         lr_kernel => lr_kernel, checkpoint_every => checkpoint_every, seed => seed);
    let enc_cfg = match &a.encoder {
        Some(p) => read_json::<EncoderConfig>(p)?,
        None => EncoderConfig::standard(cfg.grid.n, cfg.ranges.order),
    };
    let encoder = Encoder::new(enc_cfg, cfg.seed)?;
    let outcome = train(&cfg, kernel, encoder, Some(&a.out))?;
    let summary = json!({
        "run_dir": a.out,
        "best_epoch": outcome.report.best_epoch,
        "best_heldout_nmse_db": outcome.report.best_heldout_nmse_db,
        "encoder_params": outcome.report.encoder_params,
    });
    emit(None, &pretty(&summary)?)
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Table1,
    Table2,
    Table3,
    Resolution,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Experiment suite.
    #[arg(long, value_enum)]
    suite: Suite,
    /// Trained run directories; when absent the suite trains its own models at the budget.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Budget for self-trained models and default trial count.
    #[arg(long, value_enum, default_value = "desk")]
    budget: BudgetArg,
    /// Test examples per cell (default: from the budget).
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Results directory.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let budget = Budget::from(a.budget);
    let trials = a.trials.unwrap_or_else(|| budget.trials());
    let plan: Vec<(KernelChoice, usize, usize)> = match a.suite {
        Suite::Table1 => vec![
            (KernelChoice::Gaussian, 2, 21),
            (KernelChoice::GaussianPair, 2, 21),
            (KernelChoice::LearnableSmooth, 2, 21),
            (KernelChoice::LearnableGaussian, 2, 21),
        ],
        Suite::Table2 => vec![(KernelChoice::LearnableGaussian, 2, 21), (KernelChoice::LearnableGaussian, 2, 11)],
        Suite::Table3 => vec![(KernelChoice::LearnableGaussian, 5, 42), (KernelChoice::LearnableGaussian, 10, 84)],
        Suite::Resolution => vec![(KernelChoice::LearnableSmooth, 2, 21), (KernelChoice::LearnableGaussian, 2, 21)],
    };
    let bundles = if a.models.is_empty() {
        plan.iter()
            .map(|&(choice, l, n)| {
                let dir = a.out.join("models").join(format!("{}_l{l}_n{n}", choice.id()));
                train_suite_model(choice, l, n, budget, a.seed, &dir)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        a.models.iter().map(|p| ModelBundle::load(p)).collect::<Result<Vec<_>>>()?
    };
    let snrs = |v: &[f64]| v.iter().map(|x| Some(*x)).collect::<Vec<_>>();
    let standard = snrs(&[5.0, 15.0, 25.0, 40.0]);
    let (cells, key): (Vec<NmseCell>, &str) = match a.suite {
        Suite::Table1 => (collect_snr(&bundles, &standard, trials, a.seed, Targets::DELAYS)?, "table1"),
        Suite::Table2 => (
            collect_snr(
                &bundles,
                &standard,
                trials,
                a.seed,
                Targets {
                    amplitudes_ls: true,
                    amplitudes_gd: true,
                },
            )?,
            "table2",
        ),
        Suite::Table3 => (run_model_order_sweep(&bundles, &snrs(&[10.0, 40.0]), trials, a.seed)?, "table3"),
        Suite::Resolution => {
            let deltas: Vec<f64> = (0..6).map(|i| 0.05 + 0.01 * i as f64).collect();
            let mut cells = Vec::new();
            for b in &bundles {
                cells.extend(run_resolution_sweep(b, &deltas, 0.01, &standard, trials, a.seed)?);
            }
            (cells, "resolution")
        }
    };
    let reference = reference_values();
    write_results(&a.out, &cells, reference.suites.get(key))?;
    emit(None, crate::eval::cells_csv(&cells).as_bytes())
}

fn collect_snr(bundles: &[ModelBundle], snrs: &[Option<f64>], trials: usize, seed: u64, targets: Targets) -> Result<Vec<NmseCell>> {
    let mut cells = Vec::new();
    for b in bundles {
        cells.extend(run_snr_sweep(b, snrs, trials, seed, targets)?);
    }
    Ok(cells)
}

// ---------------------------------------------------------------- oracle / amplitudes

#[derive(Args, Debug)]
struct OracleArgs {
    /// NDJSON examples.
    #[arg(long)]
    input: PathBuf,
    /// Kernel JSON the examples were sampled with (default: truncated Gaussian).
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Candidate delay spacing in seconds (default: T_s/32).
    #[arg(long)]
    step: Option<f64>,
    /// Lower end of the candidate delay interval.
    #[arg(long, default_value_t = -0.48, allow_hyphen_values = true)]
    tau_min: f64,
    /// Upper end of the candidate delay interval.
    #[arg(long, default_value_t = 0.52, allow_hyphen_values = true)]
    tau_max: f64,
    /// Rectangle pulse width (default: Dirac pulses).
    #[arg(long)]
    pulse_width: Option<f64>,
    /// Output NDJSON with estimates filled in (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_records(path: &Path) -> Result<Vec<ExampleRecord>> {
    let f = fs::File::open(path).map_err(|e| FriError::config(format!("{}: {e}", path.display())))?;
    read_ndjson(BufReader::new(f))
}

fn pulse_of(width: Option<f64>) -> Result<PulseShape> {
    width.map_or(Ok(PulseShape::Dirac), PulseShape::rectangle)
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let kernel = load_kernel(a.kernel.as_deref())?;
    let pulse = pulse_of(a.pulse_width)?;
    let mut records = read_records(&a.input)?;
    for r in records.iter_mut() {
        let step = a.step.unwrap_or(r.grid.t_s / 32.0);
        let res = grid_search(&r.y, &kernel, pulse, &r.grid, r.tau.len(), a.tau_min, a.tau_max, step)?;
        r.tau_hat = Some(res.delays);
        r.a_hat = Some(res.amplitudes);
        r.residual = Some(res.residual);
    }
    let mut buf = Vec::new();
    write_ndjson(&mut buf, &records)?;
    emit(a.out.as_deref(), &buf)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AmpMethod {
    Ls,
    Gd,
}

#[derive(Args, Debug)]
struct AmplitudeArgs {
    /// NDJSON examples carrying `tau_hat`.
    #[arg(long)]
    input: PathBuf,
    /// Estimator.
    #[arg(long, value_enum, default_value = "ls")]
    method: AmpMethod,
    /// Kernel JSON the examples were sampled with (default: truncated Gaussian).
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Rectangle pulse width (default: Dirac pulses).
    #[arg(long)]
    pulse_width: Option<f64>,
    /// Gradient-descent step size (default: 1/λ_max).
    #[arg(long)]
    eta: Option<f64>,
    /// Gradient-descent iteration cap.
    #[arg(long, default_value_t = 200_000)]
    steps: usize,
    /// Seed for the gradient-descent initialisation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output NDJSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_amplitudes(a: AmplitudeArgs) -> Result<()> {
    let kernel = load_kernel(a.kernel.as_deref())?;
    let pulse = pulse_of(a.pulse_width)?;
    let mut records = read_records(&a.input)?;
    for (i, r) in records.iter_mut().enumerate() {
        let delays = r
            .tau_hat
            .clone()
            .ok_or_else(|| FriError::config(format!("record {i} has no tau_hat")))?;
        let p = AmplitudeProblem {
            samples: &r.y,
            delays: &delays,
            kernel: &kernel,
            pulse,
            grid: &r.grid,
        };
        r.a_hat = Some(match a.method {
            AmpMethod::Ls => estimate_amplitudes_ls(&p)?,
            AmpMethod::Gd => {
                let opts = GdOptions {
                    max_steps: a.steps,
                    eta: a.eta,
                    ..Default::default()
                };
                estimate_amplitudes_gd(&p, opts, a.seed.wrapping_add(i as u64))?.amplitudes
            }
        });
    }
    let mut buf = Vec::new();
    write_ndjson(&mut buf, &records)?;
    emit(a.out.as_deref(), &buf)
}

// ---------------------------------------------------------------- hw

#[derive(Args, Debug)]
struct HwMapArgs {
    /// Slower pole (1/s).
    #[arg(long)]
    alpha1: f64,
    /// Faster pole (1/s).
    #[arg(long)]
    alpha2: f64,
    /// Both capacitors (F).
    #[arg(long, default_value_t = DEFAULT_CAPACITANCE)]
    c: f64,
    /// C1 override (F).
    #[arg(long)]
    c1: Option<f64>,
    /// C2 override (F).
    #[arg(long)]
    c2: Option<f64>,
    /// Standard series for rounding: E12, E24 or E96.
    #[arg(long, default_value = "E24")]
    series: String,
    /// Also report these chosen components (R1, ohms).
    #[arg(long, requires = "r2")]
    r1: Option<f64>,
    /// Also report these chosen components (R2, ohms).
    #[arg(long, requires = "r1")]
    r2: Option<f64>,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_hw_map(a: HwMapArgs) -> Result<()> {
    let (c1, c2) = (a.c1.unwrap_or(a.c), a.c2.unwrap_or(a.c));
    let series: ESeries = a.series.parse()?;
    let ideal = poles_to_rc(a.alpha1, a.alpha2, c1, c2)?;
    let rounded = series_realization((a.alpha1, a.alpha2), c1, c2, series)?;
    let learned = crate::kernels::TwoExpKernel::new(a.alpha1, a.alpha2)?;
    let mut out = json!({
        "ideal": ideal,
        "series": { "name": a.series.to_ascii_uppercase(), "realization": rounded,
                     "response": realization_report(&learned, &rounded, None)?.response },
    });
    if let (Some(r1), Some(r2)) = (a.r1, a.r2) {
        let given = realize(r1, r2, c1, c2, (a.alpha1, a.alpha2))?;
        out["chosen"] = json!({ "realization": given, "response": realization_report(&learned, &given, None)?.response });
    }
    emit(a.out.as_deref(), &pretty(&out)?)
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Run directory of a jointly trained two-exponential model.
    #[arg(long)]
    model: PathBuf,
    /// R1 in ohms (default: nearest E24 value for the learned poles).
    #[arg(long, requires = "r2")]
    r1: Option<f64>,
    /// R2 in ohms.
    #[arg(long, requires = "r1")]
    r2: Option<f64>,
    /// Both capacitors (F).
    #[arg(long, default_value_t = DEFAULT_CAPACITANCE)]
    c: f64,
    /// Capture SNR in dB (default: clean capture).
    #[arg(long)]
    snr: Option<f64>,
    /// Capture rate in Hz.
    #[arg(long, default_value_t = 200.0)]
    rate: f64,
    /// Test signals for the drift NMSE check.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Seed for the drift check and capture noise.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let bundle = ModelBundle::load(&a.model)?;
    let Kernel::TwoExp(learned) = &bundle.kernel else {
        return Err(FriError::config(format!(
            "bench simulation needs a two_exp model, got {}",
            bundle.kernel.type_name()
        )));
    };
    let poles = learned.alphas();
    let realization = match (a.r1, a.r2) {
        (Some(r1), Some(r2)) => realize(r1, r2, a.c, a.c, poles)?,
        _ => series_realization(poles, a.c, a.c, ESeries::E24)?,
    };
    let report = realization_report(
        learned,
        &realization,
        Some(EncoderCheck {
            encoder: &bundle.encoder,
            grid: &bundle.grid,
            ranges: &bundle.ranges,
            trials: a.trials,
            seed: a.seed,
        }),
    )?;
    let scenario = BenchScenario {
        capture_rate_hz: a.rate,
        snr_db: a.snr,
        ..BenchScenario::default()
    };
    let bench = simulate_bench(&realization.kernel()?, &bundle.encoder, &bundle.grid, &scenario, a.seed)?;
    emit(a.out.as_deref(), &pretty(&json!({ "report": report, "scenario": scenario, "bench": bench }))?)
}

// ---------------------------------------------------------------- kernel / encoder

#[derive(Args, Debug)]
struct KernelDumpArgs {
    /// Kernel JSON (default: truncated Gaussian).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of evenly spaced points over the support.
    #[arg(long, default_value_t = 601)]
    points: usize,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_kernel_dump(a: KernelDumpArgs) -> Result<()> {
    let kernel = load_kernel(a.config.as_deref())?;
    let mut s = String::from("t,g\n");
    for (t, g) in kernel.dump(a.points) {
        s.push_str(&format!("{t},{g}\n"));
    }
    emit(a.out.as_deref(), s.as_bytes())
}

#[derive(Args, Debug)]
struct EncoderInfoArgs {
    /// Encoder architecture JSON (default: standard encoder for --n and --order).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Samples per example (N).
    #[arg(long, default_value_t = 21)]
    n: usize,
    /// Pulses per signal (L).
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Print JSON instead of a text table.
    #[arg(long)]
    json: bool,
}

fn cmd_encoder_info(a: EncoderInfoArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => read_json::<EncoderConfig>(p)?,
        None => EncoderConfig::standard(a.n, a.order),
    };
    let enc = Encoder::new(cfg.clone(), 0)?;
    let table = enc.layer_table();
    if a.json {
        return emit(None, &pretty(&json!({ "config": cfg, "layers": table, "parameters": enc.param_count() }))?);
    }
    let mut s = format!("{:<8} {:<12} {:<12} {:>10}\n", "layer", "kind", "output", "params");
    for row in &table {
        s.push_str(&format!(
            "{:<8} {:<12} {:<12} {:>10}\n",
            row.name,
            row.kind,
            format!("{:?}", row.output_shape),
            row.params
        ));
    }
    s.push_str(&format!("total parameters: {}\n", enc.param_count()));
    emit(None, s.as_bytes())
}

// ---------------------------------------------------------------- dispatch

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| FriError::config(format!("{THREADS_ENV}={v} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = thread_count(cli.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(FriError::config("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| FriError::config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Amplitudes(a) => cmd_amplitudes(a),
        Command::Hw(HwCommand::Map(a)) => cmd_hw_map(a),
        Command::Hw(HwCommand::SimulateBench(a)) => cmd_bench(a),
        Command::Kernel(KernelCommand::Dump(a)) => cmd_kernel_dump(a),
        Command::Encoder(EncoderCommand::Info(a)) => cmd_encoder_info(a),
    })
}

fn report_error(kind: &str, message: &str, code: i32) {
    let line = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{line}");
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            report_error("usage", e.to_string().trim(), 2);
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            report_error(e.kind(), &e.to_string(), code);
            code
        }
    }
}

/// The clap command tree, for help rendering in tests and docs.
pub fn command() -> clap::Command {
    <Cli as clap::CommandFactory>::command()
}
