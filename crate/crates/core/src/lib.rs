//! Numerical laboratory for random block band matrices.
//!
//! The crate is organised around the pipeline an experiment runs through:
//!
//! * [`profile`]: variance profiles `S` (weighted graph Laplacians), `S̃ = I + S`
//!   and the flattened `N × N` variance matrix.
//! * [`ensembles`]: Gaussian and four-moment-matched block band samples with
//!   reproducible per-entry random streams.
//! * [`spectral`]: eigendecompositions, resolvent statistics on the spectral
//!   domain, the semicircle law and the stability operator.
//! * [`locallaw`] and [`deloc`]: Monte Carlo checks of the local law and of
//!   eigenvector delocalization.
//! * [`lindeberg`]: entry swapping, low-rank resolvent updates and resolvent
//!   expansions used by the Green's function comparison argument.
//! * [`grassmann`]: a finite Grassmann algebra with Berezin integration.
//! * [`saddle`]: saddle-point functionals and their lower bounds.

pub mod deloc;
pub mod ensembles;
pub mod error;
pub mod grassmann;
pub mod lindeberg;
pub mod linalg;
pub mod locallaw;
pub mod profile;
pub mod rng;
pub mod saddle;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};

/// Complex double used throughout; identical to `num_complex::Complex64`.
pub type C64 = faer::c64;

/// Pins faer kernels to a single thread.
///
/// Trials are distributed over rayon workers instead; keeping the dense
/// kernels sequential makes every floating-point reduction order independent
/// of the worker count, which is what bit-identical reruns rely on.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Seed of trial `t` under master seed `seed`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    rng::derive_seed(seed, &[rng::tag::TRIAL, t as u64])
}

/// Evaluates `f(0), …, f(count − 1)` on a pool of `parallel` workers and
/// returns the results in index order.
pub fn par_map_trials<T, F>(count: usize, parallel: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    use_sequential_kernels();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .expect("failed to build worker pool");
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}
