//! Training loops for the encoder alone and for kernel + encoder jointly.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autodiff::{checkpoint, cosine_lr, AdamW, Graph, ParamSet, Tensor, Var};
use crate::encoder::Encoder;
use crate::error::{FriError, Result};
use crate::eval::nmse_db;
use crate::kernels::Kernel;
use crate::sampler::{forward_into, ExampleDraw, ExampleSpec, SampleGrid, SnrPolicy};
use crate::seed::stream;
use crate::signal::{GenerationRanges, PulseShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    EncoderOnly,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub examples_per_epoch: usize,
    pub lr_encoder: f64,
    pub lr_kernel: f64,
    /// Final learning rate as a fraction of the initial one (cosine schedule).
    pub lr_floor: f64,
    pub weight_decay: f64,
    pub snr: SnrPolicy,
    pub seed: u64,
    pub ranges: GenerationRanges,
    pub pulse: PulseShape,
    pub grid: SampleGrid,
    pub heldout_examples: usize,
    pub heldout_snr_db: f64,
    /// Write an extra checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Examples per gradient work item. Affects speed only, not results.
    pub chunk_size: usize,
}

impl TrainConfig {
    /// Desk-scale defaults: 10⁵ fresh examples per epoch, batch 8192, SNR uniform in 5–40 dB.
    pub fn desk(mode: TrainMode, grid: SampleGrid, order: usize) -> Self {
        Self {
            mode,
            epochs: 50,
            batch_size: 8192,
            examples_per_epoch: 100_000,
            lr_encoder: 3e-3,
            lr_kernel: 3e-3,
            lr_floor: 0.05,
            weight_decay: 1e-2,
            snr: SnrPolicy::Uniform { lo_db: 5.0, hi_db: 40.0 },
            seed: 7,
            ranges: GenerationRanges::standard(order),
            pulse: PulseShape::Dirac,
            grid,
            heldout_examples: 1000,
            heldout_snr_db: 40.0,
            checkpoint_every: 0,
            chunk_size: 512,
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.examples_per_epoch.div_ceil(self.batch_size)
    }

    pub fn validate(&self, kernel: &Kernel, encoder: &Encoder) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.examples_per_epoch == 0 || self.chunk_size == 0 {
            return Err(FriError::config("epochs, batch size, examples per epoch and chunk size must be positive"));
        }
        if self.mode == TrainMode::Joint && !kernel.is_learnable() {
            return Err(FriError::config(format!(
                "joint training needs a learnable kernel (bspline or two_exp), got {}",
                kernel.type_name()
            )));
        }
        let lrs = [self.lr_encoder, self.lr_kernel, self.lr_floor, self.weight_decay];
        if lrs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FriError::config("learning rates and weight decay must be finite and non-negative"));
        }
        self.ranges.validate()?;
        self.snr.validate()?;
        self.pulse.validate()?;
        let cfg = encoder.config();
        if cfg.input_len != self.grid.n || cfg.output_len != self.ranges.order {
            return Err(FriError::Shape {
                op: "train",
                left: vec![self.grid.n, self.ranges.order],
                right: vec![cfg.input_len, cfg.output_len],
            });
        }
        Ok(())
    }

    fn spec(&self, snr: SnrPolicy) -> ExampleSpec {
        ExampleSpec {
            ranges: self.ranges.clone(),
            resolution_band: None,
            snr,
            n: self.grid.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_nmse_db: f64,
    pub lr_encoder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_heldout_nmse_db: f64,
    pub encoder_params: usize,
    /// Kernel at the selected epoch, in kernel JSON form.
    pub kernel: Value,
    /// Trainable kernel parameters at the selected epoch.
    pub kernel_params: Vec<f64>,
    /// Kept out of `report.json` so run directories stay byte-reproducible.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl TrainReport {
    pub fn loss_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn heldout_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.heldout_nmse_db).collect()
    }
}

/// Result of [`train`]: report plus the encoder and kernel at the best epoch.
pub struct TrainOutcome {
    pub report: TrainReport,
    pub encoder: Encoder,
    pub kernel: Kernel,
}

/// `Σ_b Σ_ℓ |pred − target| / B` for `(B, L)` tensors.
pub fn loss_l1(graph: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let b = graph.shape(pred).first().copied().unwrap_or(1).max(1);
    let d = graph.sub(pred, target)?;
    let a = graph.abs(d);
    let s = graph.reduce_sum(a);
    Ok(graph.scale(s, 1.0 / b as f64))
}

/// Records `y_θ` for a batch of draws as a differentiable function of the
/// kernel's trainable parameters `theta` (a vector leaf). Noise is added as a
/// constant with `σ` taken from the clean samples.
pub fn regenerate_batch_with_gradient(
    graph: &mut Graph,
    theta: Var,
    kernel: &Kernel,
    draws: &[ExampleDraw],
    pulse: PulseShape,
    grid: &SampleGrid,
) -> Result<Var> {
    let p = kernel.trainable_len();
    if graph.shape(theta) != [p] {
        return Err(FriError::Shape {
            op: "regenerate_batch_with_gradient",
            left: graph.shape(theta).to_vec(),
            right: vec![p],
        });
    }
    let n = grid.n;
    let mut values = vec![0.0; draws.len() * n];
    let mut jac = vec![0.0; draws.len() * n * p];
    let ctx = kernel.trainable_gradient_context();
    for (i, d) in draws.iter().enumerate() {
        let row = &mut values[i * n..(i + 1) * n];
        forward_into(&d.signal, pulse, kernel, grid, row);
        d.apply_noise(row)?;
        for j in 0..n {
            let t = grid.instant(j);
            let out = &mut jac[(i * n + j) * p..(i * n + j + 1) * p];
            for (a, tau) in d.signal.amplitudes().iter().zip(d.signal.delays()) {
                ctx.accumulate(pulse, t - tau, *a, out);
            }
        }
    }
    let value = Tensor::new(vec![draws.len(), n], values)?;
    let jac = Tensor::new(vec![draws.len() * n, p], jac)?;
    graph.linearized(theta, value, jac)
}

/// Noisy samples of `draws` through `kernel` as a `(B, N)` tensor.
pub fn batch_samples(kernel: &Kernel, draws: &[ExampleDraw], pulse: PulseShape, grid: &SampleGrid) -> Result<Tensor> {
    let n = grid.n;
    let mut values = vec![0.0; draws.len() * n];
    for (d, row) in draws.iter().zip(values.chunks_mut(n)) {
        forward_into(&d.signal, pulse, kernel, grid, row);
        d.apply_noise(row)?;
    }
    Tensor::new(vec![draws.len(), n], values)
}

fn sorted_targets(draws: &[ExampleDraw]) -> Result<Tensor> {
    let l = draws.first().map_or(0, |d| d.signal.order());
    let data: Vec<f64> = draws.iter().flat_map(|d| d.signal.delays().iter().copied()).collect();
    Tensor::new(vec![draws.len(), l], data)
}

/// Loss and gradients of one batch.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    /// Per-example-summed L1 loss times `scale`.
    pub loss: f64,
    /// One flat gradient per encoder parameter, in parameter order.
    pub encoder: Vec<Vec<f64>>,
    /// Gradient with respect to the kernel's trainable parameters (joint mode only).
    pub kernel: Vec<f64>,
}

/// Objective `scale · Σ_b ‖τ_b − E_φ(y_θ,b)‖₁` on `draws` and its gradients.
/// With `joint` the kernel parameters receive gradients through the forward model.
pub fn batch_gradients(
    encoder: &Encoder,
    kernel: &Kernel,
    draws: &[ExampleDraw],
    pulse: PulseShape,
    grid: &SampleGrid,
    joint: bool,
    scale: f64,
) -> Result<BatchGradients> {
    let mut g = Graph::new();
    let (y, theta) = if joint {
        let theta = g.variable(Tensor::vector(kernel.trainable_params()));
        (regenerate_batch_with_gradient(&mut g, theta, kernel, draws, pulse, grid)?, Some(theta))
    } else {
        (g.constant(batch_samples(kernel, draws, pulse, grid)?), None)
    };
    let pass = encoder.forward(&mut g, y)?;
    let target = g.constant(sorted_targets(draws)?);
    let d = g.sub(pass.output, target)?;
    let a = g.abs(d);
    let s = g.reduce_sum(a);
    let loss = g.scale(s, scale);
    let grads = g.backward(loss)?;
    let mut enc = vec![Vec::new(); encoder.params().len()];
    for (id, var) in &pass.bound {
        enc[id.index()] = grads
            .get(*var)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; encoder.params().get(*id).value.len()]);
    }
    let kern = theta
        .and_then(|t| grads.get(t).map(|t| t.data().to_vec()))
        .unwrap_or_else(|| vec![0.0; if joint { kernel.trainable_len() } else { 0 }]);
    Ok(BatchGradients {
        loss: g.value(loss).item(),
        encoder: enc,
        kernel: kern,
    })
}

/// Gradient of one full batch, split into chunks evaluated in parallel and
/// summed in chunk order, so the result does not depend on the thread count.
fn step_gradients(
    encoder: &Encoder,
    kernel: &Kernel,
    draws: &[ExampleDraw],
    cfg: &TrainConfig,
) -> Result<BatchGradients> {
    let joint = cfg.mode == TrainMode::Joint;
    let scale = 1.0 / draws.len() as f64;
    let parts: Vec<Result<BatchGradients>> = draws
        .par_chunks(cfg.chunk_size)
        .map(|chunk| batch_gradients(encoder, kernel, chunk, cfg.pulse, &cfg.grid, joint, scale))
        .collect();
    let mut total: Option<BatchGradients> = None;
    for part in parts {
        let part = part?;
        match &mut total {
            None => total = Some(part),
            Some(t) => {
                t.loss += part.loss;
                for (acc, g) in t.encoder.iter_mut().zip(&part.encoder) {
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                t.kernel.iter_mut().zip(&part.kernel).for_each(|(a, b)| *a += b);
            }
        }
    }
    total.ok_or_else(|| FriError::config("empty batch"))
}

fn generate_draws(spec: &ExampleSpec, seed: u64, tag: u64, start: u64, count: usize) -> Result<Vec<ExampleDraw>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| ExampleDraw::generate(spec, seed, tag, start + i))
        .collect()
}

/// Mean per-example delay NMSE (dB) of `encoder` on `draws` filtered through `kernel`.
pub fn mean_nmse_db(encoder: &Encoder, kernel: &Kernel, draws: &[ExampleDraw], pulse: PulseShape, grid: &SampleGrid) -> Result<f64> {
    let per: Vec<Result<Vec<f64>>> = draws
        .par_chunks(512)
        .map(|chunk| {
            let y = batch_samples(kernel, chunk, pulse, grid)?;
            let pred = encoder.predict_delays(&y, true)?;
            let l = encoder.config().output_len;
            chunk
                .iter()
                .zip(pred.data().chunks(l))
                .map(|(d, p)| nmse_db(d.signal.delays(), p))
                .collect()
        })
        .collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in per {
        for v in chunk? {
            sum += v;
            count += 1;
        }
    }
    Ok(sum / count.max(1) as f64)
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.root.join(name), text)?;
        Ok(())
    }
}

fn kernel_param_set(kernel: &Kernel) -> ParamSet {
    let mut ps = ParamSet::new();
    ps.push("kernel.theta", Tensor::vector(kernel.trainable_params()), false);
    ps
}

#[derive(Serialize)]
struct OptimizerSidecar {
    encoder: AdamW,
    kernel: Option<AdamW>,
    lr_encoder: f64,
    lr_kernel: f64,
    lr_floor: f64,
    epoch: usize,
}

/// Runs (P_Encoder) or (P_Joint) as configured. When `out` is given the run
/// directory receives `config.json`, `encoder.json`, `kernel_init.json`,
/// `loss.csv`, `encoder.ckpt`, `kernel.json`, `optimizer.json`, `report.json`
/// and `timing.json`.
pub fn train(cfg: &TrainConfig, kernel: Kernel, encoder: Encoder, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate(&kernel, &encoder)?;
    let started = Instant::now();
    let run = out.map(RunDir::create).transpose()?;
    if let Some(run) = &run {
        run.json("config.json", cfg)?;
        run.json("encoder.json", encoder.config())?;
        run.json("kernel_init.json", &kernel.to_json())?;
    }
    let mut encoder = encoder;
    let mut kernel = kernel;
    let joint = cfg.mode == TrainMode::Joint;
    let mut kparams = kernel_param_set(&kernel);
    let mut opt_enc = AdamW::with_weight_decay(cfg.weight_decay);
    let mut opt_kern = AdamW::with_weight_decay(0.0);

    let heldout = generate_draws(&cfg.spec(SnrPolicy::fixed(cfg.heldout_snr_db)), cfg.seed, stream::HELDOUT, 0, cfg.heldout_examples.max(1))?;
    let train_spec = cfg.spec(cfg.snr);
    let steps_per_epoch = cfg.steps_per_epoch();
    let total_steps = steps_per_epoch * cfg.epochs;

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Encoder, Kernel)> = None;
    let mut csv = String::from("epoch,train_loss,heldout_nmse_db,lr_encoder\n");
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut lr_now = cfg.lr_encoder;
        for s in 0..steps_per_epoch {
            let start = epoch * cfg.examples_per_epoch + s * cfg.batch_size;
            let count = cfg.batch_size.min(cfg.examples_per_epoch - s * cfg.batch_size);
            let draws = generate_draws(&train_spec, cfg.seed, stream::TRAIN, start as u64, count)?;
            let grads = step_gradients(&encoder, &kernel, &draws, cfg)?;
            if !grads.loss.is_finite() {
                return Err(FriError::numeric(format!(
                    "non-finite training loss at epoch {epoch}, step {s}; the best checkpoint so far is kept"
                )));
            }
            loss_sum += grads.loss * count as f64;

            let frac = cosine_lr(step, total_steps, 1.0, cfg.lr_floor);
            lr_now = cfg.lr_encoder * frac;
            let params = encoder.params_mut();
            params.zero_grads();
            for (i, g) in grads.encoder.into_iter().enumerate() {
                let p = params.get_mut(crate::autodiff::ParamId::from_index(i));
                p.grad.data_mut().copy_from_slice(&g);
            }
            opt_enc.step(params, lr_now)?;
            if joint {
                let id = crate::autodiff::ParamId::from_index(0);
                kparams.get_mut(id).grad.data_mut().copy_from_slice(&grads.kernel);
                opt_kern.step(&mut kparams, cfg.lr_kernel * frac)?;
                kernel.set_trainable_params(kparams.get(id).value.data())?;
            }
            step += 1;
        }
        let train_loss = loss_sum / cfg.examples_per_epoch as f64;
        let heldout_nmse = mean_nmse_db(&encoder, &kernel, &heldout, cfg.pulse, &cfg.grid)?;
        csv.push_str(&format!("{epoch},{train_loss},{heldout_nmse},{lr_now}\n"));
        epochs.push(EpochStats {
            epoch,
            train_loss,
            heldout_nmse_db: heldout_nmse,
            lr_encoder: lr_now,
        });
        if best.as_ref().is_none_or(|b| heldout_nmse < b.1) {
            best = Some((epoch, heldout_nmse, encoder.clone(), kernel.clone()));
            if let Some(run) = &run {
                best.as_ref().unwrap().2.save(&run.root.join("encoder.ckpt"))?;
                run.json("kernel.json", &kernel.to_json())?;
            }
        }
        if let Some(run) = &run {
            fs::write(run.root.join("loss.csv"), &csv)?;
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                let dir = run.root.join("checkpoints");
                fs::create_dir_all(&dir)?;
                encoder.save(&dir.join(format!("encoder_epoch{:04}.ckpt", epoch + 1)))?;
                checkpoint::save_params(&dir.join(format!("kernel_epoch{:04}.ckpt", epoch + 1)), &kparams)?;
            }
            run.json(
                "optimizer.json",
                &OptimizerSidecar {
                    encoder: opt_enc,
                    kernel: joint.then_some(opt_kern),
                    lr_encoder: cfg.lr_encoder,
                    lr_kernel: cfg.lr_kernel,
                    lr_floor: cfg.lr_floor,
                    epoch: epoch + 1,
                },
            )?;
        }
    }

    let (best_epoch, best_nmse, best_encoder, best_kernel) = best.expect("at least one epoch");
    let report = TrainReport {
        mode: cfg.mode,
        epochs,
        best_epoch,
        best_heldout_nmse_db: best_nmse,
        encoder_params: best_encoder.param_count(),
        kernel: best_kernel.to_json(),
        kernel_params: best_kernel.trainable_params(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    if let Some(run) = &run {
        run.json("report.json", &report)?;
        run.json("timing.json", &serde_json::json!({ "wall_clock_s": report.wall_clock_s }))?;
    }
    Ok(TrainOutcome {
        report,
        encoder: best_encoder,
        kernel: best_kernel,
    })
}

/// Five-epoch trailing moving average.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    values.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}
