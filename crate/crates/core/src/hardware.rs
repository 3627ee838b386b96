//! Unity-gain Sallen–Key realisation of two-pole kernels.
//!
//! The circuit's impulse response is the two-exponential kernel with
//! `1/α₁ + 1/α₂ = C₂(R₁ + R₂)` and `1/(α₁α₂) = C₁C₂R₁R₂`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::amplitude::{estimate_amplitudes_ls, AmplitudeProblem};
use crate::encoder::Encoder;
use crate::error::{FriError, Result};
use crate::eval::nmse_db;
use crate::kernels::{Kernel, SamplingKernel, TwoExpKernel};
use crate::sampler::{noise_sigma, ExampleDraw, ExampleSpec, SampleGrid, SnrPolicy};
use crate::seed::{self, stream};
use crate::signal::{GenerationRanges, PulseShape};
use crate::trainer::mean_nmse_db;

/// Default capacitors, 1 µF.
pub const DEFAULT_CAPACITANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcRealization {
    pub r1: f64,
    pub r2: f64,
    pub c1: f64,
    pub c2: f64,
    /// Poles implied by the components, `α₁ < α₂`.
    pub alpha1: f64,
    pub alpha2: f64,
    /// `(α′ − α)/α` per pole against the reference poles.
    pub drift: [f64; 2],
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(FriError::config(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Component values for poles `α₁ < α₂` and capacitors `C₁, C₂`; `R₁` takes the larger root.
pub fn poles_to_rc(alpha1: f64, alpha2: f64, c1: f64, c2: f64) -> Result<RcRealization> {
    for (n, v) in [("alpha1", alpha1), ("alpha2", alpha2), ("C1", c1), ("C2", c2)] {
        positive(n, v)?;
    }
    if alpha1 >= alpha2 {
        return Err(FriError::config(format!("need α₁ < α₂, got {alpha1} and {alpha2}")));
    }
    let s = (1.0 / alpha1 + 1.0 / alpha2) / c2;
    let p = 1.0 / (alpha1 * alpha2 * c1 * c2);
    let disc = s * s - 4.0 * p;
    if disc < 0.0 {
        let need = 4.0 * alpha1 * alpha2 / ((alpha1 + alpha2) * (alpha1 + alpha2));
        return Err(FriError::Infeasible(format!(
            "no real resistor pair for these capacitors: C1/C2 = {} but at least {need} is required",
            c1 / c2
        )));
    }
    let q = -0.5 * (-s - disc.sqrt());
    let (r1, r2) = (q, p / q);
    Ok(RcRealization {
        r1,
        r2,
        c1,
        c2,
        alpha1,
        alpha2,
        drift: [0.0, 0.0],
    })
}

/// Poles `α₁ < α₂` of a component set.
pub fn rc_to_poles(r1: f64, r2: f64, c1: f64, c2: f64) -> Result<(f64, f64)> {
    for (n, v) in [("R1", r1), ("R2", r2), ("C1", c1), ("C2", c2)] {
        positive(n, v)?;
    }
    // Time constants u = 1/α solve u² − C₂(R₁+R₂)u + C₁C₂R₁R₂ = 0.
    let s = c2 * (r1 + r2);
    let p = c1 * c2 * r1 * r2;
    let disc = s * s - 4.0 * p;
    if disc < 0.0 {
        return Err(FriError::Infeasible(format!(
            "components give complex poles (underdamped), outside the two-real-pole family: R1={r1}, R2={r2}, C1={c1}, C2={c2}"
        )));
    }
    let u_big = 0.5 * (s + disc.sqrt());
    let u_small = p / u_big;
    Ok((1.0 / u_big, 1.0 / u_small))
}

/// Realisation of concrete components, with drift against `reference` poles.
pub fn realize(r1: f64, r2: f64, c1: f64, c2: f64, reference: (f64, f64)) -> Result<RcRealization> {
    let (a1, a2) = rc_to_poles(r1, r2, c1, c2)?;
    Ok(RcRealization {
        r1,
        r2,
        c1,
        c2,
        alpha1: a1,
        alpha2: a2,
        drift: [(a1 - reference.0) / reference.0, (a2 - reference.1) / reference.1],
    })
}

impl RcRealization {
    pub fn kernel(&self) -> Result<TwoExpKernel> {
        TwoExpKernel::new(self.alpha1, self.alpha2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ESeries {
    E12,
    E24,
    E96,
}

const E12: &[u32] = &[10, 12, 15, 18, 22, 27, 33, 39, 47, 56, 68, 82];
const E24: &[u32] = &[10, 11, 12, 13, 15, 16, 18, 20, 22, 24, 27, 30, 33, 36, 39, 43, 47, 51, 56, 62, 68, 75, 82, 91];
const E96: &[u32] = &[
    100, 102, 105, 107, 110, 113, 115, 118, 121, 124, 127, 130, 133, 137, 140, 143, 147, 150, 154, 158, 162, 165, 169,
    174, 178, 182, 187, 191, 196, 200, 205, 210, 215, 221, 226, 232, 237, 243, 249, 255, 261, 267, 274, 280, 287, 294,
    301, 309, 316, 324, 332, 340, 348, 357, 365, 374, 383, 392, 402, 412, 422, 432, 442, 453, 464, 475, 487, 499, 511,
    523, 536, 549, 562, 576, 590, 604, 619, 634, 649, 665, 681, 698, 715, 732, 750, 768, 787, 806, 825, 845, 866, 887,
    909, 931, 953, 976,
];

impl ESeries {
    fn table(self) -> (&'static [u32], i32) {
        match self {
            ESeries::E12 => (E12, 2),
            ESeries::E24 => (E24, 2),
            ESeries::E96 => (E96, 3),
        }
    }

    /// Largest ratio between neighbouring members, a bound on any rounding step.
    pub fn max_step_ratio(self) -> f64 {
        let (t, digits) = self.table();
        let mut worst: f64 = 1.0;
        for w in t.windows(2) {
            worst = worst.max(w[1] as f64 / w[0] as f64);
        }
        worst.max(10f64.powi(digits - 1) * 10.0 / *t.last().unwrap() as f64)
    }
}

impl std::str::FromStr for ESeries {
    type Err = FriError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "E12" => Ok(ESeries::E12),
            "E24" => Ok(ESeries::E24),
            "E96" => Ok(ESeries::E96),
            _ => Err(FriError::config(format!("unknown series `{s}`; expected E12, E24 or E96"))),
        }
    }
}

/// Nearest series member on a logarithmic scale.
pub fn round_to_series(value: f64, series: ESeries) -> Result<f64> {
    positive("value", value)?;
    let (table, digits) = series.table();
    let decade = value.log10().floor() as i32;
    let mut best = (f64::INFINITY, value);
    for d in decade - 1..=decade + 1 {
        let scale = 10f64.powi(d - (digits - 1));
        for &m in table {
            let cand = m as f64 * scale;
            let dist = (cand.ln() - value.ln()).abs();
            if dist < best.0 {
                best = (dist, cand);
            }
        }
    }
    Ok(best.1)
}

/// Nearest-series resistors for `poles` with fixed capacitors.
pub fn series_realization(poles: (f64, f64), c1: f64, c2: f64, series: ESeries) -> Result<RcRealization> {
    let ideal = poles_to_rc(poles.0, poles.1, c1, c2)?;
    realize(round_to_series(ideal.r1, series)?, round_to_series(ideal.r2, series)?, c1, c2, poles)
}

/// Impulse-response difference over `[0, horizon]` of the reference kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseDeviation {
    pub max_abs: f64,
    /// `(∫ (h − h′)² dt)^{1/2}` by the trapezoid rule.
    pub l2: f64,
}

pub fn response_deviation(reference: &TwoExpKernel, other: &TwoExpKernel, points: usize) -> ResponseDeviation {
    let horizon = reference.horizon();
    let points = points.max(2);
    let dt = horizon / (points - 1) as f64;
    let mut max_abs: f64 = 0.0;
    let mut sq = 0.0;
    for i in 0..points {
        let t = i as f64 * dt;
        let d = reference.evaluate(t) - other.evaluate(t);
        max_abs = max_abs.max(d.abs());
        let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        sq += w * d * d * dt;
    }
    ResponseDeviation { max_abs, l2: sq.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationReport {
    pub learned_alpha: [f64; 2],
    pub realization: RcRealization,
    pub response: ResponseDeviation,
    /// Mean delay NMSE of the frozen encoder on noiseless samples through the realised kernel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder_nmse_db: Option<f64>,
    /// The same with the learned kernel, for comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder_nmse_db_learned: Option<f64>,
}

/// Settings for the encoder part of [`realization_report`].
pub struct EncoderCheck<'a> {
    pub encoder: &'a Encoder,
    pub grid: &'a SampleGrid,
    pub ranges: &'a GenerationRanges,
    pub trials: usize,
    pub seed: u64,
}

pub fn realization_report(learned: &TwoExpKernel, realized: &RcRealization, check: Option<EncoderCheck<'_>>) -> Result<RealizationReport> {
    let realized_kernel = realized.kernel()?;
    let response = response_deviation(learned, &realized_kernel, 4001);
    let (a1, a2) = learned.alphas();
    let (mut drifted, mut base) = (None, None);
    if let Some(c) = check {
        let spec = ExampleSpec {
            ranges: c.ranges.clone(),
            resolution_band: None,
            snr: SnrPolicy::Clean,
            n: c.grid.n,
        };
        let draws = (0..c.trials.max(1) as u64)
            .map(|i| ExampleDraw::generate(&spec, c.seed, stream::TEST, i))
            .collect::<Result<Vec<_>>>()?;
        let rk: Kernel = realized_kernel.into();
        let lk: Kernel = learned.clone().into();
        drifted = Some(mean_nmse_db(c.encoder, &rk, &draws, PulseShape::Dirac, c.grid)?);
        base = Some(mean_nmse_db(c.encoder, &lk, &draws, PulseShape::Dirac, c.grid)?);
    }
    Ok(RealizationReport {
        learned_alpha: [a1, a2],
        realization: *realized,
        response,
        encoder_nmse_db: drifted,
        encoder_nmse_db_learned: base,
    })
}

/// Two-pulse bench test: rectangles through the circuit, captured at a fixed
/// rate and linearly interpolated onto the encoder grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchScenario {
    pub delays: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub pulse_width: f64,
    pub capture_rate_hz: f64,
    /// Capture noise; `None` for a clean capture.
    pub snr_db: Option<f64>,
}

impl Default for BenchScenario {
    fn default() -> Self {
        Self {
            delays: vec![0.2, 0.5],
            amplitudes: vec![1.0, 1.0],
            pulse_width: 0.002,
            capture_rate_hz: 200.0,
            snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub nmse_db: f64,
    /// Least-squares rectangle heights at the estimated delays.
    pub amplitudes: Vec<f64>,
    /// Captured `(t, v)` pairs.
    pub capture: Vec<[f64; 2]>,
    /// Encoder input after interpolation.
    pub samples: Vec<f64>,
}

fn interpolate(capture: &[[f64; 2]], t: f64) -> f64 {
    let i = capture.partition_point(|p| p[0] <= t);
    if i == 0 {
        return capture[0][1];
    }
    if i == capture.len() {
        return capture[capture.len() - 1][1];
    }
    let ([t0, v0], [t1, v1]) = (capture[i - 1], capture[i]);
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

pub fn simulate_bench(kernel: &TwoExpKernel, encoder: &Encoder, grid: &SampleGrid, scenario: &BenchScenario, seed_value: u64) -> Result<BenchResult> {
    if scenario.delays.len() != scenario.amplitudes.len() || scenario.delays.len() != encoder.config().output_len {
        return Err(FriError::Shape {
            op: "simulate_bench",
            left: vec![scenario.delays.len(), scenario.amplitudes.len()],
            right: vec![encoder.config().output_len],
        });
    }
    positive("capture rate", scenario.capture_rate_hz)?;
    let pulse = PulseShape::rectangle(scenario.pulse_width)?;
    let dt = 1.0 / scenario.capture_rate_hz;
    let t_end = grid.instant(grid.n - 1);
    let count = ((t_end - grid.t_start) / dt).ceil() as usize + 2;
    let mut capture: Vec<[f64; 2]> = (0..count)
        .map(|k| {
            let t = grid.t_start + k as f64 * dt;
            let v = scenario
                .amplitudes
                .iter()
                .zip(&scenario.delays)
                .map(|(a, tau)| a * kernel.pulse_response(pulse, t - tau))
                .sum();
            [t, v]
        })
        .collect();
    if let Some(snr) = scenario.snr_db {
        let values: Vec<f64> = capture.iter().map(|p| p[1]).collect();
        let sigma = noise_sigma(&values, snr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, stream::TEST, u64::MAX));
        for p in capture.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            p[1] += sigma * z;
        }
    }
    let samples: Vec<f64> = grid.instants().map(|t| interpolate(&capture, t)).collect();
    let estimate = encoder.predict_one(&samples, true)?;
    let mut truth = scenario.delays.clone();
    truth.sort_by(f64::total_cmp);
    let nmse = nmse_db(&truth, &estimate)?;
    let amplitudes = estimate_amplitudes_ls(&AmplitudeProblem {
        samples: &samples,
        delays: &estimate,
        kernel,
        pulse,
        grid,
    })
    .unwrap_or_else(|_| vec![f64::NAN; estimate.len()]);
    Ok(BenchResult {
        truth,
        estimate,
        nmse_db: nmse,
        amplitudes,
        capture,
        samples,
    })
}
