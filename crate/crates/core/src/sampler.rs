//! Forward measurement model: sample grid, noiseless samples, noise injection and
//! seed-indexed dataset streams.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FriError, Result};
use crate::kernels::{Kernel, KernelSupport, SamplingKernel};
use crate::seed;
use crate::signal::{draw_signal, draw_signal_in_resolution_band, FriSignal, GenerationRanges, PulseShape};

/// Uniform instants `t_n = t_start + n·T_s`, `n = 0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub n: usize,
    pub t_start: f64,
    pub t_s: f64,
}

impl SampleGrid {
    pub fn new(t_start: f64, t_s: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(FriError::config(format!("a grid needs at least 2 samples, got {n}")));
        }
        if !(t_s > 0.0 && t_s.is_finite() && t_start.is_finite()) {
            return Err(FriError::config(format!("invalid sampling period {t_s}")));
        }
        Ok(Self { n, t_start, t_s })
    }

    /// `N` samples over the delay interval alone, `T_s = (τ_max − τ_min)/N`.
    pub fn observation_window(tau_min: f64, tau_max: f64, n: usize) -> Result<Self> {
        let span = tau_max - tau_min;
        if !(span > 0.0) {
            return Err(FriError::config(format!("non-positive observation span {span}")));
        }
        Self::new(tau_min, span / n as f64, n)
    }

    /// Same period as [`SampleGrid::observation_window`] but with right-edge
    /// instants covering `(τ_min, τ_max]`, so a causal kernel sees pulses near `τ_max`.
    pub fn causal_window(tau_min: f64, tau_max: f64, n: usize) -> Result<Self> {
        let w = Self::observation_window(tau_min, tau_max, n)?;
        Self::new(tau_min + w.t_s, w.t_s, n)
    }

    /// Observation window suited to `support`: right-edge instants for causal
    /// kernels (`t_min ≥ 0`), left-edge otherwise.
    pub fn window_for(support: &KernelSupport, tau_min: f64, tau_max: f64, n: usize) -> Result<Self> {
        if support.t_min >= 0.0 {
            Self::causal_window(tau_min, tau_max, n)
        } else {
            Self::observation_window(tau_min, tau_max, n)
        }
    }

    pub fn instant(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.t_s
    }

    pub fn instants(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.instant(i))
    }

    /// Checks `T_s` against the kernel support length.
    pub fn check_kernel(&self, support: &KernelSupport) -> Result<()> {
        if self.t_s >= support.len() {
            return Err(FriError::config(format!(
                "sampling period {} is not shorter than the kernel support {}",
                self.t_s,
                support.len()
            )));
        }
        Ok(())
    }
}

/// Grid spanning the full support of the filtered signal,
/// `[t_min + τ_min, t_max + τ_max]`, with left-edge instants and `T_s = span/N`.
pub fn build_grid(support: KernelSupport, tau_min: f64, tau_max: f64, n: usize) -> Result<SampleGrid> {
    if n < 2 {
        return Err(FriError::config(format!("a grid needs at least 2 samples, got {n}")));
    }
    let start = support.t_min + tau_min;
    let span = (support.t_max + tau_max) - start;
    if !(span > 0.0) {
        return Err(FriError::config(format!("non-positive sampling span {span}")));
    }
    let grid = SampleGrid::new(start, span / n as f64, n)?;
    grid.check_kernel(&support)?;
    Ok(grid)
}

/// Samples `y_θ[n]` on a grid. `snr_db` is `None` for noiseless samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    pub values: Vec<f64>,
    pub grid: SampleGrid,
    pub snr_db: Option<f64>,
}

impl SampleVector {
    pub fn new(values: Vec<f64>, grid: SampleGrid, snr_db: Option<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(FriError::Shape {
                op: "sample_vector",
                left: vec![grid.n],
                right: vec![values.len()],
            });
        }
        Ok(Self { values, grid, snr_db })
    }

    pub fn power(&self) -> f64 {
        mean_square(&self.values)
    }
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

/// `y[n] = Σ_ℓ a_ℓ (h ∗ g)(t_n − τ_ℓ)`.
pub fn forward_samples<K: SamplingKernel + ?Sized>(
    signal: &FriSignal,
    pulse: PulseShape,
    kernel: &K,
    grid: &SampleGrid,
) -> SampleVector {
    let mut values = vec![0.0; grid.n];
    forward_into(signal, pulse, kernel, grid, &mut values);
    SampleVector {
        values,
        grid: *grid,
        snr_db: None,
    }
}

pub(crate) fn forward_into<K: SamplingKernel + ?Sized>(
    signal: &FriSignal,
    pulse: PulseShape,
    kernel: &K,
    grid: &SampleGrid,
    out: &mut [f64],
) {
    for (i, y) in out.iter_mut().enumerate() {
        let t = grid.instant(i);
        *y = signal
            .amplitudes()
            .iter()
            .zip(signal.delays())
            .map(|(a, tau)| a * kernel.pulse_response(pulse, t - tau))
            .sum();
    }
}

/// Standard deviation giving `snr_db` against the mean squared sample value.
pub fn noise_sigma(values: &[f64], snr_db: f64) -> Result<f64> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(FriError::config(format!("invalid snr {snr_db}")));
    }
    let power = mean_square(values);
    if power == 0.0 {
        return Err(FriError::numeric("snr is undefined for an all-zero sample vector"));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok((power / 10f64.powf(snr_db / 10.0)).sqrt())
}

/// Adds white Gaussian noise at `snr_db`; `+∞` leaves the samples unchanged.
pub fn add_noise<R: Rng + ?Sized>(samples: &SampleVector, snr_db: f64, rng: &mut R) -> Result<SampleVector> {
    let sigma = noise_sigma(&samples.values, snr_db)?;
    if snr_db == f64::INFINITY {
        return Ok(SampleVector {
            snr_db: None,
            ..samples.clone()
        });
    }
    let values = samples
        .values
        .iter()
        .map(|y| y + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(SampleVector {
        values,
        grid: samples.grid,
        snr_db: Some(snr_db),
    })
}

/// Per-example noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrPolicy {
    Clean,
    Fixed { snr_db: f64 },
    Uniform { lo_db: f64, hi_db: f64 },
}

impl SnrPolicy {
    pub fn fixed(snr_db: f64) -> Self {
        SnrPolicy::Fixed { snr_db }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        match *self {
            SnrPolicy::Clean => None,
            SnrPolicy::Fixed { snr_db } => Some(snr_db),
            SnrPolicy::Uniform { lo_db, hi_db } => Some(if lo_db == hi_db { lo_db } else { rng.gen_range(lo_db..=hi_db) }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SnrPolicy::Clean => Ok(()),
            SnrPolicy::Fixed { snr_db } if !snr_db.is_nan() => Ok(()),
            SnrPolicy::Uniform { lo_db, hi_db } if lo_db.is_finite() && hi_db.is_finite() && lo_db <= hi_db => Ok(()),
            _ => Err(FriError::config(format!("invalid snr policy {self:?}"))),
        }
    }
}

/// How signals are drawn for a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSpec {
    pub ranges: GenerationRanges,
    /// Restricts the resolution to `[lo, hi)` when set.
    pub resolution_band: Option<(f64, f64)>,
    pub snr: SnrPolicy,
    pub n: usize,
}

/// Everything random about one example: the signal, its SNR and unit-variance
/// noise. The actual noise is `σ·noise_unit` with `σ` set by the clean samples,
/// so the same draw can be re-filtered through any kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleDraw {
    pub signal: FriSignal,
    pub snr_db: Option<f64>,
    pub noise_unit: Vec<f64>,
}

impl ExampleDraw {
    /// Element `index` of stream `tag` under `seed`.
    pub fn generate(spec: &ExampleSpec, seed_value: u64, tag: u64, index: u64) -> Result<Self> {
        let mut rng = seed::rng_for(seed_value, tag, index);
        let signal = match spec.resolution_band {
            Some((lo, hi)) => draw_signal_in_resolution_band(&spec.ranges, lo, hi, &mut rng)?,
            None => draw_signal(&spec.ranges, &mut rng)?,
        };
        let snr_db = spec.snr.draw(&mut rng);
        let noise_unit = (0..spec.n).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self {
            signal,
            snr_db,
            noise_unit,
        })
    }

    /// Noisy samples of this draw through `kernel`.
    pub fn samples<K: SamplingKernel + ?Sized>(&self, pulse: PulseShape, kernel: &K, grid: &SampleGrid) -> Result<SampleVector> {
        let mut s = forward_samples(&self.signal, pulse, kernel, grid);
        self.apply_noise(&mut s.values)?;
        s.snr_db = self.snr_db;
        Ok(s)
    }

    /// Adds the scaled noise to clean samples in place and returns `σ`.
    pub fn apply_noise(&self, values: &mut [f64]) -> Result<f64> {
        let Some(snr) = self.snr_db else {
            return Ok(0.0);
        };
        let sigma = noise_sigma(values, snr)?;
        for (y, z) in values.iter_mut().zip(&self.noise_unit) {
            *y += sigma * z;
        }
        Ok(sigma)
    }
}

/// Lazy, deterministic stream of labelled examples.
pub struct DatasetStream<'a> {
    spec: ExampleSpec,
    pulse: PulseShape,
    kernel: &'a Kernel,
    grid: SampleGrid,
    seed: u64,
    next: u64,
    count: u64,
}

impl Iterator for DatasetStream<'_> {
    type Item = Result<(SampleVector, FriSignal)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let i = self.next;
        self.next += 1;
        Some(
            ExampleDraw::generate(&self.spec, self.seed, seed::stream::DATASET, i).and_then(|d| {
                let s = d.samples(self.pulse, self.kernel, &self.grid)?;
                Ok((s, d.signal))
            }),
        )
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.count - self.next) as usize;
        (left, Some(left))
    }
}

/// Seed-indexed stream of `count` labelled examples. Example `i` depends only on
/// `(seed, i)`, so streams can be partitioned across workers.
pub fn stream_dataset<'a>(
    ranges: &GenerationRanges,
    pulse: PulseShape,
    kernel: &'a Kernel,
    grid: &SampleGrid,
    snr: SnrPolicy,
    count: usize,
    seed_value: u64,
) -> Result<DatasetStream<'a>> {
    if count == 0 {
        return Err(FriError::config("dataset count must be at least 1"));
    }
    ranges.validate()?;
    snr.validate()?;
    Ok(DatasetStream {
        spec: ExampleSpec {
            ranges: ranges.clone(),
            resolution_band: None,
            snr,
            n: grid.n,
        },
        pulse,
        kernel,
        grid: *grid,
        seed: seed_value,
        next: 0,
        count: count as u64,
    })
}

/// One NDJSON line: samples, ground truth and optional estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub y: Vec<f64>,
    pub tau: Vec<f64>,
    pub a: Vec<f64>,
    /// `null` for noiseless samples.
    pub snr_db: Option<f64>,
    pub grid: SampleGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_hat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

impl ExampleRecord {
    pub fn new(samples: &SampleVector, signal: &FriSignal) -> Self {
        Self {
            y: samples.values.clone(),
            tau: signal.delays().to_vec(),
            a: signal.amplitudes().to_vec(),
            snr_db: samples.snr_db,
            grid: samples.grid,
            tau_hat: None,
            a_hat: None,
            residual: None,
        }
    }

    pub fn samples(&self) -> Result<SampleVector> {
        SampleVector::new(self.y.clone(), self.grid, self.snr_db)
    }

    pub fn signal(&self) -> Result<FriSignal> {
        FriSignal::new(self.a.clone(), self.tau.clone())
    }
}

pub fn write_ndjson<W: Write>(out: &mut W, records: &[ExampleRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<ExampleRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::standard_support;

    #[test]
    fn standard_grid_period() {
        let g = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
        assert!((g.t_s - 1.6 / 21.0).abs() < 1e-15);
        assert!((g.t_start + 0.78).abs() < 1e-15);
        let g = build_grid(standard_support(), -0.48, 0.52, 11).unwrap();
        assert!((g.t_s - 0.145_454_545).abs() < 1e-8);
    }

    #[test]
    fn unit_grid() {
        let s = KernelSupport::new(0.0, 1.0).unwrap();
        let g = build_grid(s, 0.0, 0.0, 2).unwrap();
        assert_eq!(g.t_s, 0.5);
        assert_eq!(g.instants().collect::<Vec<_>>(), vec![0.0, 0.5]);
    }

    #[test]
    fn grid_errors() {
        let s = KernelSupport::new(0.0, 1.0).unwrap();
        assert!(build_grid(s, 0.0, 0.0, 1).is_err());
        assert!(build_grid(s, 0.5, -1.0, 4).is_err());
    }

    #[test]
    fn single_spike_at_centre() {
        let k = Kernel::standard_gaussian();
        let grid = SampleGrid::new(-0.1, 0.05, 5).unwrap();
        let s = FriSignal::new(vec![1.0], vec![0.0]).unwrap();
        let y = forward_samples(&s, PulseShape::Dirac, &k, &grid);
        assert_eq!(y.values[2], 1.0);
    }

    #[test]
    fn scaled_shifted_spike() {
        let k = Kernel::standard_gaussian_pair();
        let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
        let s = FriSignal::new(vec![2.0], vec![0.1]).unwrap();
        let y = forward_samples(&s, PulseShape::Dirac, &k, &grid);
        for (i, t) in grid.instants().enumerate() {
            assert_eq!(y.values[i], 2.0 * k.evaluate(t - 0.1));
        }
    }

    #[test]
    fn infinite_snr_is_identity_and_zero_power_errors() {
        let grid = SampleGrid::new(0.0, 0.1, 3).unwrap();
        let s = SampleVector::new(vec![1.0, -2.0, 0.5], grid, None).unwrap();
        let mut rng = seed::rng_for(0, 0, 0);
        assert_eq!(add_noise(&s, f64::INFINITY, &mut rng).unwrap().values, s.values);
        let z = SampleVector::new(vec![0.0; 3], grid, None).unwrap();
        assert!(add_noise(&z, 10.0, &mut rng).is_err());
    }

    #[test]
    fn zero_db_noise_variance_is_signal_power() {
        let v = [1.0, -2.0, 0.5];
        let sigma = noise_sigma(&v, 0.0).unwrap();
        assert!((sigma * sigma - (1.0 + 4.0 + 0.25) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn streams_are_deterministic() {
        let k = Kernel::standard_gaussian();
        let grid = build_grid(k.support(), -0.48, 0.52, 21).unwrap();
        let ranges = GenerationRanges::standard(2);
        let run = || -> Vec<(SampleVector, FriSignal)> {
            stream_dataset(&ranges, PulseShape::Dirac, &k, &grid, SnrPolicy::fixed(15.0), 3, 11)
                .unwrap()
                .collect::<Result<_>>()
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.iter().all(|(s, _)| s.snr_db == Some(15.0)));
    }

    #[test]
    fn ndjson_round_trip() {
        let k = Kernel::standard_gaussian();
        let grid = build_grid(k.support(), -0.48, 0.52, 21).unwrap();
        let ranges = GenerationRanges::standard(2);
        let records: Vec<_> = stream_dataset(&ranges, PulseShape::Dirac, &k, &grid, SnrPolicy::Clean, 4, 1)
            .unwrap()
            .map(|r| r.map(|(s, sig)| ExampleRecord::new(&s, &sig)))
            .collect::<Result<_>>()
            .unwrap();
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"snr_db\":null"));
        assert_eq!(read_ndjson(&buf[..]).unwrap(), records);
    }
}
