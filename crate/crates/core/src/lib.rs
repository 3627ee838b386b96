//! Learnable sampling kernels and CNN delay encoders for finite-rate-of-innovation
//! (FRI) signals.
//!
//! A stream of `L` weighted Diracs (or short pulses) passes through a sampling
//! kernel and is observed at `N` uniform instants. The crate trains a
//! convolutional encoder that maps the samples straight to the delays, optionally
//! learning the kernel at the same time, and recovers amplitudes by least squares.
//!
//! Modules, roughly in pipeline order:
//!
//! - [`signal`]: drawing stream parameters and pulse shapes.
//! - [`kernels`]: Gaussian, B-spline and two-pole exponential kernels, with
//!   parameter gradients for the trainable ones.
//! - [`sampler`]: sampling grids, noise at a target SNR, dataset streams.
//! - [`autodiff`]: a small reverse-mode tape, AdamW and checkpoints.
//! - [`encoder`]: the conv/linear delay encoder.
//! - [`trainer`]: encoder-only and joint training loops.
//! - [`amplitude`] and [`oracle`]: amplitude recovery and a grid-search delay
//!   oracle for reference.
//! - [`hardware`]: mapping two-exponential poles onto an RC circuit, standard
//!   resistor series and a simulated bench capture.
//! - [`eval`]: NMSE sweeps and summary tables.
//! - [`cli`]: the `fri-forge` command line.
//!
//! Every random draw is keyed by `(seed, stream, index)` through [`seed::rng_for`],
//! so results do not depend on the rayon thread count.

pub mod amplitude;
pub mod autodiff;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hardware;
pub mod kernels;
pub mod oracle;
pub mod sampler;
pub mod seed;
pub mod signal;
pub mod trainer;

pub use error::{FriError, Result};
