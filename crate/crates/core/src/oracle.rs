//! Exhaustive grid search over delay tuples: a learning-free reference estimator.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FriError, Result};
use crate::kernels::SamplingKernel;
use crate::sampler::SampleGrid;
use crate::signal::PulseShape;

pub const MAX_ORDER: usize = 3;
pub const MAX_TUPLES: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub delays: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Mean squared sample-domain residual.
    pub residual: f64,
}

/// Candidate delays `τ_min + k·step` inside `[τ_min, τ_max]`.
pub fn candidate_delays(tau_min: f64, tau_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(FriError::config(format!("grid step must be positive, got {step}")));
    }
    if !(tau_max >= tau_min) {
        return Err(FriError::config("empty delay interval"));
    }
    let m = ((tau_max - tau_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..m).map(|k| tau_min + k as f64 * step).collect())
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

struct Candidates {
    delays: Vec<f64>,
    columns: Vec<Vec<f64>>,
}

fn solve_tuple(c: &Candidates, idx: &[usize], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let l = idx.len();
    let mut gram = DMatrix::from_fn(l, l, |i, j| dot(&c.columns[idx[i]], &c.columns[idx[j]]));
    // Ridge relative to the largest diagonal entry, as in the LS estimator.
    let ridge = crate::amplitude::RIDGE * gram.diagonal().max();
    for i in 0..l {
        gram[(i, i)] += ridge;
    }
    let rhs = DVector::from_fn(l, |i, _| dot(&c.columns[idx[i]], y));
    let a = gram.cholesky()?.solve(&rhs);
    let n = y.len();
    let mut r = 0.0;
    for (t, yt) in y.iter().enumerate() {
        let pred: f64 = idx.iter().zip(a.iter()).map(|(&k, ak)| ak * c.columns[k][t]).sum();
        r += (pred - yt) * (pred - yt);
    }
    Some((a.iter().copied().collect(), r / n as f64))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn better(a: &(Vec<usize>, Vec<f64>, f64), b: &(Vec<usize>, Vec<f64>, f64)) -> bool {
    a.2 < b.2 || (a.2 == b.2 && a.0 < b.0)
}

/// Best ordered `L`-tuple of candidate delays on `[τ_min, τ_max]` with spacing `step`,
/// amplitudes by least squares for each tuple.
#[allow(clippy::too_many_arguments)]
pub fn grid_search<K: SamplingKernel + Sync + ?Sized>(
    samples: &[f64],
    kernel: &K,
    pulse: PulseShape,
    grid: &SampleGrid,
    order: usize,
    tau_min: f64,
    tau_max: f64,
    step: f64,
) -> Result<OracleResult> {
    if order == 0 || order > MAX_ORDER {
        return Err(FriError::config(format!("grid search supports 1 ≤ L ≤ {MAX_ORDER}, got {order}")));
    }
    if samples.len() != grid.n {
        return Err(FriError::Shape {
            op: "grid_search",
            left: vec![samples.len()],
            right: vec![grid.n],
        });
    }
    let delays = candidate_delays(tau_min, tau_max, step)?;
    let m = delays.len();
    let tuples = binomial(m, order);
    if tuples > MAX_TUPLES {
        return Err(FriError::config(format!(
            "{tuples} candidate tuples exceed the limit of {MAX_TUPLES}; use a coarser step"
        )));
    }
    if tuples == 0 {
        return Err(FriError::config(format!("only {m} candidate delays for L = {order}")));
    }
    let columns = delays
        .iter()
        .map(|tau| grid.instants().map(|t| kernel.pulse_response(pulse, t - tau)).collect())
        .collect();
    let cands = Candidates { delays, columns };

    let best = (0..m)
        .into_par_iter()
        .filter_map(|first| {
            let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
            let mut consider = |idx: Vec<usize>| {
                if let Some((a, r)) = solve_tuple(&cands, &idx, samples) {
                    let cand = (idx, a, r);
                    if best.as_ref().is_none_or(|b| better(&cand, b)) {
                        best = Some(cand);
                    }
                }
            };
            match order {
                1 => consider(vec![first]),
                2 => (first + 1..m).for_each(|j| consider(vec![first, j])),
                _ => {
                    for j in first + 1..m {
                        for k in j + 1..m {
                            consider(vec![first, j, k]);
                        }
                    }
                }
            }
            best
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
        .ok_or_else(|| FriError::numeric("no candidate tuple gave a solvable least-squares problem"))?;

    Ok(OracleResult {
        delays: best.0.iter().map(|&k| cands.delays[k]).collect(),
        amplitudes: best.1,
        residual: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{standard_support, Kernel};
    use crate::sampler::{build_grid, forward_samples};
    use crate::signal::FriSignal;

    #[test]
    fn finds_on_grid_pair() {
        let k = Kernel::standard_gaussian_pair();
        let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
        let cands = candidate_delays(-0.48, 0.52, 0.01).unwrap();
        let s = FriSignal::new(vec![2.5, 6.0], vec![cands[68], cands[98]]).unwrap();
        let y = forward_samples(&s, PulseShape::Dirac, &k, &grid).values;
        let r = grid_search(&y, &k, PulseShape::Dirac, &grid, 2, -0.48, 0.52, 0.01).unwrap();
        assert_eq!(r.delays, s.delays());
        for (a, t) in r.amplitudes.iter().zip(s.amplitudes()) {
            assert!(((a - t) / t).abs() < 1e-8);
        }
    }

    #[test]
    fn single_spike() {
        let k = Kernel::standard_gaussian();
        let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
        let s = FriSignal::new(vec![1.0], vec![0.1]).unwrap();
        let y = forward_samples(&s, PulseShape::Dirac, &k, &grid).values;
        let r = grid_search(&y, &k, PulseShape::Dirac, &grid, 1, -0.5, 0.5, 0.05).unwrap();
        assert!((r.delays[0] - 0.1).abs() < 1e-12);
        assert!(r.residual < 1e-20);
    }

    #[test]
    fn guards() {
        let k = Kernel::standard_gaussian();
        let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
        let y = vec![0.0; 21];
        assert!(grid_search(&y, &k, PulseShape::Dirac, &grid, 4, -0.48, 0.52, 0.1).is_err());
        assert!(grid_search(&y, &k, PulseShape::Dirac, &grid, 3, -0.48, 0.52, 0.0001).is_err());
        assert!(grid_search(&y, &k, PulseShape::Dirac, &grid, 2, -0.48, 0.52, 0.0).is_err());
    }
}
