//! FRI signal instances and the random generation protocol.
//!
//! A signal is a stream of `L` pulses `f(t) = Σ a_ℓ h(t − τ_ℓ)` with known pulse
//! shape `h`. Delays are always stored in strictly increasing order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FriError, Result};

/// Rejection attempts allowed before a separation-constrained draw gives up.
pub const MAX_REJECTION_ATTEMPTS: usize = 10_000;

/// Amplitudes and ordered delays of one signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalRecord")]
pub struct FriSignal {
    #[serde(rename = "a")]
    amplitudes: Vec<f64>,
    #[serde(rename = "tau")]
    delays: Vec<f64>,
}

impl FriSignal {
    pub fn new(amplitudes: Vec<f64>, delays: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != delays.len() {
            return Err(FriError::config(format!(
                "{} amplitudes but {} delays",
                amplitudes.len(),
                delays.len()
            )));
        }
        if delays.is_empty() {
            return Err(FriError::config("a signal needs at least one pulse"));
        }
        if amplitudes.iter().chain(&delays).any(|v| !v.is_finite()) {
            return Err(FriError::config("non-finite amplitude or delay"));
        }
        if delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FriError::config(format!(
                "delays must be strictly increasing, got {delays:?}"
            )));
        }
        Ok(Self { amplitudes, delays })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// Model order `L`.
    pub fn order(&self) -> usize {
        self.delays.len()
    }

    /// Minimum adjacent delay gap. A single pulse has no gap and reports `+∞`.
    pub fn resolution(&self) -> f64 {
        resolution(&self.delays)
    }

    /// Checks the amplitude and delay range assumptions.
    pub fn check_within(&self, ranges: &GenerationRanges) -> Result<()> {
        if self.order() != ranges.order {
            return Err(FriError::config(format!(
                "signal has order {} but ranges expect {}",
                self.order(),
                ranges.order
            )));
        }
        for &a in &self.amplitudes {
            if a < ranges.a_min || a > ranges.a_max {
                return Err(FriError::config(format!("amplitude {a} outside range")));
            }
        }
        for &t in &self.delays {
            if t < ranges.tau_min || t > ranges.tau_max {
                return Err(FriError::config(format!("delay {t} outside range")));
            }
        }
        Ok(())
    }

    /// Scales every amplitude by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * c).collect(),
            delays: self.delays.clone(),
        }
    }

    /// Shifts every delay by `dt`.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.clone(),
            delays: self.delays.iter().map(|t| t + dt).collect(),
        }
    }
}

#[derive(Deserialize)]
struct SignalRecord {
    a: Vec<f64>,
    tau: Vec<f64>,
}

impl TryFrom<SignalRecord> for FriSignal {
    type Error = FriError;

    fn try_from(r: SignalRecord) -> Result<Self> {
        FriSignal::new(r.a, r.tau)
    }
}

/// Minimum adjacent gap of an ordered delay vector (`+∞` for fewer than two delays).
pub fn resolution(delays: &[f64]) -> f64 {
    delays
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Pulse shape `h(t)` placed at each delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PulseShape {
    Dirac,
    /// Unit-height rectangle occupying `[τ, τ + width]`.
    Rectangle { width: f64 },
}

impl PulseShape {
    pub fn rectangle(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(FriError::config(format!("rectangle width must be positive, got {width}")));
        }
        Ok(PulseShape::Rectangle { width })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PulseShape::Dirac => Ok(()),
            PulseShape::Rectangle { width } => Self::rectangle(width).map(|_| ()),
        }
    }
}

/// Parameter ranges for random signal generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRanges {
    pub a_min: f64,
    pub a_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub order: usize,
    /// Resolution floor; draws are rejected until every adjacent gap reaches it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<f64>,
}

impl GenerationRanges {
    /// Amplitudes in `[0.5, 10]`, delays in `[−0.48, 0.52]`.
    pub fn standard(order: usize) -> Self {
        Self {
            a_min: 0.5,
            a_max: 10.0,
            tau_min: -0.48,
            tau_max: 0.52,
            order,
            min_separation: None,
        }
    }

    pub fn with_min_separation(mut self, sep: f64) -> Self {
        self.min_separation = Some(sep);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(FriError::config("model order must be positive"));
        }
        let finite = [self.a_min, self.a_max, self.tau_min, self.tau_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(FriError::config("ranges must be finite"));
        }
        if self.a_min > self.a_max {
            return Err(FriError::config("a_min exceeds a_max"));
        }
        if self.tau_min > self.tau_max {
            return Err(FriError::config("tau_min exceeds tau_max"));
        }
        if self.order > 1 && self.tau_min == self.tau_max {
            return Err(FriError::config("a degenerate delay interval only admits one pulse"));
        }
        if let Some(sep) = self.min_separation {
            if !(sep >= 0.0) {
                return Err(FriError::config("min_separation must be non-negative"));
            }
            if sep * (self.order as f64 - 1.0) > self.tau_max - self.tau_min {
                return Err(FriError::Infeasible(format!(
                    "{} pulses separated by {sep} do not fit in [{}, {}]",
                    self.order, self.tau_min, self.tau_max
                )));
            }
        }
        Ok(())
    }

    pub fn tau_span(&self) -> f64 {
        self.tau_max - self.tau_min
    }
}

/// Draws one signal: i.i.d. uniform amplitudes, uniform delays sorted ascending,
/// rejection-sampled against the separation floor when one is set.
pub fn draw_signal<R: Rng + ?Sized>(ranges: &GenerationRanges, rng: &mut R) -> Result<FriSignal> {
    draw_signal_with_gap(ranges, ranges.min_separation.unwrap_or(0.0), f64::INFINITY, rng)
}

/// Draws a signal whose resolution lies in `[lo, hi)`, by rejection.
pub fn draw_signal_in_resolution_band<R: Rng + ?Sized>(
    ranges: &GenerationRanges,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<FriSignal> {
    if ranges.order < 2 {
        return Err(FriError::config("resolution bands need at least two pulses"));
    }
    if !(hi > lo) {
        return Err(FriError::config(format!("empty resolution band [{lo}, {hi})")));
    }
    draw_signal_with_gap(ranges, lo, hi, rng)
}

fn draw_signal_with_gap<R: Rng + ?Sized>(
    ranges: &GenerationRanges,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<FriSignal> {
    ranges.validate()?;
    let l = ranges.order;
    let mut delays = vec![0.0; l];
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        for d in delays.iter_mut() {
            *d = uniform(rng, ranges.tau_min, ranges.tau_max);
        }
        delays.sort_by(f64::total_cmp);
        let res = resolution(&delays);
        let distinct = l == 1 || res > 0.0;
        if distinct && res >= lo && (res < hi || hi == f64::INFINITY) {
            let amplitudes = (0..l).map(|_| uniform(rng, ranges.a_min, ranges.a_max)).collect();
            return FriSignal::new(amplitudes, delays);
        }
    }
    Err(FriError::Infeasible(format!(
        "no delay draw with resolution in [{lo}, {hi}) after {MAX_REJECTION_ATTEMPTS} attempts"
    )))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}
