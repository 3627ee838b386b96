//! Amplitude recovery for known delays: closed-form least squares and the
//! gradient-descent refinement of the same quadratic objective.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{FriError, Result};
use crate::kernels::SamplingKernel;
use crate::sampler::SampleGrid;
use crate::seed::{self, stream};
use crate::signal::PulseShape;

/// Ridge added to the normal equations, relative to the largest Gram eigenvalue.
pub const RIDGE: f64 = 1e-10;

/// Columns whose Gram matrix has a reciprocal condition number below this are
/// treated as collinear.
const RANK_TOL: f64 = 1e-12;

/// Samples and estimated delays for one example. Samples must not be normalised.
pub struct AmplitudeProblem<'a, K: SamplingKernel + ?Sized> {
    pub samples: &'a [f64],
    pub delays: &'a [f64],
    pub kernel: &'a K,
    pub pulse: PulseShape,
    pub grid: &'a SampleGrid,
}

impl<K: SamplingKernel + ?Sized> AmplitudeProblem<'_, K> {
    /// `G[n, ℓ] = (h ∗ g)(t_n − τ̂_ℓ)`.
    pub fn design_matrix(&self) -> Result<DMatrix<f64>> {
        let (n, l) = (self.grid.n, self.delays.len());
        if self.samples.len() != n {
            return Err(FriError::Shape {
                op: "amplitude samples",
                left: vec![self.samples.len()],
                right: vec![n],
            });
        }
        if l == 0 || n < l {
            return Err(FriError::config(format!("need 1 ≤ L ≤ N, got L = {l}, N = {n}")));
        }
        Ok(DMatrix::from_fn(n, l, |i, j| {
            self.kernel.pulse_response(self.pulse, self.grid.instant(i) - self.delays[j])
        }))
    }

    fn target(&self) -> DVector<f64> {
        DVector::from_column_slice(self.samples)
    }
}

/// Most collinear column pair of `g`.
fn colliding_pair(g: &DMatrix<f64>, delays: &[f64]) -> FriError {
    let norms: Vec<f64> = (0..g.ncols()).map(|j| g.column(j).norm()).collect();
    let mut best = (0, 1.min(g.ncols() - 1), -1.0);
    for i in 0..g.ncols() {
        for j in i + 1..g.ncols() {
            let denom = norms[i] * norms[j];
            let c = if denom > 0.0 { (g.column(i).dot(&g.column(j)) / denom).abs() } else { 1.0 };
            if c > best.2 {
                best = (i, j, c);
            }
        }
    }
    // A single zero column collides with nothing; report it against itself.
    if g.ncols() == 1 {
        best = (0, 0, 1.0);
    }
    FriError::RankDeficient {
        i: best.0,
        j: best.1,
        first: delays[best.0],
        second: delays[best.1],
    }
}

/// Largest Gram eigenvalue, or a rank error.
fn check_rank(g: &DMatrix<f64>, gram: &DMatrix<f64>, delays: &[f64]) -> Result<f64> {
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= RANK_TOL * max {
        return Err(colliding_pair(g, delays));
    }
    Ok(max)
}

/// Minimiser of `(1/N)‖G a − y‖²` from the ridged normal equations.
pub fn estimate_amplitudes_ls<K: SamplingKernel + ?Sized>(p: &AmplitudeProblem<'_, K>) -> Result<Vec<f64>> {
    let g = p.design_matrix()?;
    let gram = g.transpose() * &g;
    let scale = check_rank(&g, &gram, p.delays)?;
    let rhs = g.transpose() * p.target();
    let reg = &gram + DMatrix::identity(gram.nrows(), gram.ncols()) * (RIDGE * scale);
    let chol = reg.cholesky().ok_or_else(|| colliding_pair(&g, p.delays))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    pub max_steps: usize,
    /// Step size; `None` uses `1/λ_max` of the objective's Hessian.
    pub eta: Option<f64>,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            max_steps: 200_000,
            eta: None,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdResult {
    pub amplitudes: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
    pub loss: f64,
}

/// Gradient descent on `(1/N)‖G a − y‖²` from a standard-normal start.
pub fn estimate_amplitudes_gd<K: SamplingKernel + ?Sized>(
    p: &AmplitudeProblem<'_, K>,
    opts: GdOptions,
    seed_value: u64,
) -> Result<GdResult> {
    let g = p.design_matrix()?;
    let n = g.nrows() as f64;
    let y = p.target();
    let mut rng = seed::rng_for(seed_value, stream::AMPLITUDE, 0);
    let mut a = DVector::from_fn(g.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let hessian = g.transpose() * &g * (2.0 / n);
    let eta = match opts.eta {
        Some(e) if e.is_finite() && e >= 0.0 => e,
        Some(e) => return Err(FriError::config(format!("invalid step size {e}"))),
        None => {
            let lmax = hessian.clone().symmetric_eigen().eigenvalues.max();
            if !(lmax > 0.0) {
                return Err(colliding_pair(&g, p.delays));
            }
            1.0 / lmax
        }
    };
    let loss_of = |a: &DVector<f64>| (&g * a - &y).norm_squared() / n;
    let mut loss = loss_of(&a);
    let mut rising = 0;
    let mut converged = false;
    let mut steps = 0;
    while steps < opts.max_steps {
        let grad = g.transpose() * (&g * &a - &y) * (2.0 / n);
        if grad.norm() <= opts.tolerance {
            converged = true;
            break;
        }
        if eta == 0.0 {
            break;
        }
        a -= grad * eta;
        steps += 1;
        let next = loss_of(&a);
        if !next.is_finite() {
            return Err(FriError::numeric(format!("gradient descent diverged at step {steps}; reduce the step size")));
        }
        if next > loss {
            rising += 1;
            if rising >= 10 {
                return Err(FriError::numeric(format!(
                    "loss increased for 10 consecutive steps with step size {eta}; reduce it"
                )));
            }
        } else {
            rising = 0;
        }
        loss = next;
    }
    Ok(GdResult {
        amplitudes: a.iter().copied().collect(),
        steps,
        converged,
        loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{standard_support, Kernel};
    use crate::sampler::{build_grid, forward_samples};
    use crate::signal::FriSignal;

    fn setup() -> (Kernel, SampleGrid) {
        (Kernel::standard_gaussian_pair(), build_grid(standard_support(), -0.48, 0.52, 21).unwrap())
    }

    #[test]
    fn ls_recovers_noiseless() {
        let (k, grid) = setup();
        let s = FriSignal::new(vec![3.0, 0.7], vec![-0.1, 0.27]).unwrap();
        let y = forward_samples(&s, PulseShape::Dirac, &k, &grid).values;
        let p = AmplitudeProblem {
            samples: &y,
            delays: s.delays(),
            kernel: &k,
            pulse: PulseShape::Dirac,
            grid: &grid,
        };
        let a = estimate_amplitudes_ls(&p).unwrap();
        for (x, t) in a.iter().zip(s.amplitudes()) {
            assert!(((x - t) / t).abs() < 1e-8);
        }
        let gd = estimate_amplitudes_gd(&p, GdOptions::default(), 1).unwrap();
        assert!(gd.converged);
        for (x, t) in gd.amplitudes.iter().zip(&a) {
            assert!((x - t).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_samples_zero_amplitudes() {
        let (k, grid) = setup();
        let y = vec![0.0; 21];
        let p = AmplitudeProblem {
            samples: &y,
            delays: &[0.0, 0.3],
            kernel: &k,
            pulse: PulseShape::Dirac,
            grid: &grid,
        };
        assert!(estimate_amplitudes_ls(&p).unwrap().iter().all(|a| a.abs() < 1e-300));
    }

    #[test]
    fn duplicate_delays_name_the_pair() {
        let (k, grid) = setup();
        let y = vec![1.0; 21];
        let p = AmplitudeProblem {
            samples: &y,
            delays: &[-0.2, 0.1, 0.1],
            kernel: &k,
            pulse: PulseShape::Dirac,
            grid: &grid,
        };
        match estimate_amplitudes_ls(&p) {
            Err(FriError::RankDeficient { i, j, .. }) => assert_eq!((i, j), (1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_step_and_zero_steps_return_init() {
        let (k, grid) = setup();
        let y = vec![1.0; 21];
        let p = AmplitudeProblem {
            samples: &y,
            delays: &[0.0, 0.3],
            kernel: &k,
            pulse: PulseShape::Dirac,
            grid: &grid,
        };
        let a = estimate_amplitudes_gd(&p, GdOptions { eta: Some(0.0), ..Default::default() }, 4).unwrap();
        let b = estimate_amplitudes_gd(&p, GdOptions { max_steps: 0, ..Default::default() }, 4).unwrap();
        assert_eq!(a.amplitudes, b.amplitudes);
        assert_eq!(a.steps, 0);
    }

    #[test]
    fn oversized_step_reports_divergence() {
        let (k, grid) = setup();
        let y = vec![1.0; 21];
        let p = AmplitudeProblem {
            samples: &y,
            delays: &[0.0, 0.3],
            kernel: &k,
            pulse: PulseShape::Dirac,
            grid: &grid,
        };
        let r = estimate_amplitudes_gd(&p, GdOptions { eta: Some(10.0), ..Default::default() }, 4);
        assert!(matches!(r, Err(FriError::Numeric(_))));
    }
}
