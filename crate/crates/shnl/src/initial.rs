//! Initial states. Everything here is built from cosine modes (or loaded from
//! a field file), so the boundary conditions hold exactly at t = 0.

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{read_field, Domain, Field};
use crate::error::{Error, Result};
use crate::kernels::{sample_kernel, KernelRole, KernelSpec};
use crate::nonlocal::{ConvMethod, Convolution};
use crate::util::for_each_index;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Constant {
        value: f64,
    },
    /// Sum of amplitude · Π_a cos(π k_a x_a / L_a).
    CosineModes {
        modes: Vec<(Vec<usize>, f64)>,
    },
    /// Seeded cosine series with spectral weight exp(−2|k|²/cutoff²) on modes
    /// with every k_a ≤ cutoff, rescaled to the requested sup amplitude.
    RandomSmooth {
        seed: u64,
        cutoff: usize,
        amplitude: f64,
    },
    File {
        path: PathBuf,
    },
}

impl InitialCondition {
    pub fn build(&self, domain: &Arc<Domain>) -> Result<Field> {
        match self {
            InitialCondition::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidDomain(format!(
                        "constant initial value {value} must be finite"
                    )));
                }
                Ok(Field::constant(domain, *value))
            }
            InitialCondition::CosineModes { modes } => build_cosine_modes(domain, modes),
            InitialCondition::RandomSmooth {
                seed,
                cutoff,
                amplitude,
            } => build_random_smooth(domain, *seed, *cutoff, *amplitude),
            InitialCondition::File { path } => {
                let field = read_field(path)?;
                field.rebind(domain)
            }
        }
    }
}

fn build_cosine_modes(domain: &Arc<Domain>, modes: &[(Vec<usize>, f64)]) -> Result<Field> {
    let dim = domain.dim();
    for (k, amp) in modes {
        if k.len() != dim {
            return Err(Error::InvalidDomain(format!(
                "mode {k:?} has {} indices on a {dim}-d grid",
                k.len()
            )));
        }
        if k.iter().zip(domain.sizes()).any(|(&ka, &na)| ka >= na) {
            return Err(Error::InvalidDomain(format!(
                "mode {k:?} is not representable on {:?} cells",
                domain.sizes()
            )));
        }
        if !amp.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "mode {k:?} has non-finite amplitude {amp}"
            )));
        }
    }
    let lengths = domain.lengths().to_vec();
    Ok(Field::from_fn(domain, |x| {
        modes
            .iter()
            .map(|(k, amp)| {
                amp * k
                    .iter()
                    .zip(x)
                    .zip(&lengths)
                    .map(|((&ka, &xa), &la)| (ka as f64 * std::f64::consts::PI * xa / la).cos())
                    .product::<f64>()
            })
            .sum()
    }))
}

fn build_random_smooth(
    domain: &Arc<Domain>,
    seed: u64,
    cutoff: usize,
    amplitude: f64,
) -> Result<Field> {
    if cutoff == 0 {
        return Err(Error::InvalidDomain(
            "random-smooth cutoff must be at least 1".into(),
        ));
    }
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::InvalidDomain(format!(
            "random-smooth amplitude {amplitude} must be nonnegative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![0.0f64; domain.len()];
    let cut_sq = (cutoff * cutoff) as f64;
    for_each_index(domain.sizes(), |flat, idx| {
        if idx.iter().any(|&k| k > cutoff) {
            return;
        }
        let ksq: usize = idx.iter().map(|&k| k * k).sum();
        let draw: f64 = rng.gen_range(-1.0..1.0);
        coeffs[flat] = draw * (-2.0 * ksq as f64 / cut_sq).exp();
    });
    let mut spectral = domain.to_spectral(&Field::zeros(domain))?;
    spectral.coeffs_mut().copy_from_slice(&coeffs);
    let mut field = domain.from_spectral(&spectral)?;
    let sup = field.max_abs();
    if sup > 0.0 {
        let scale = amplitude / sup;
        for v in field.values_mut() {
            *v *= scale;
        }
    }
    Ok(field)
}

/// K_ε * u0 with the smoothing normalization, the standard way to prepare
/// ε-dependent initial data that converges to u0.
pub fn mollify(u0: &Field, kernel: &KernelSpec, eps: f64, method: ConvMethod) -> Result<Field> {
    let dk = sample_kernel(kernel, u0.domain(), eps, KernelRole::Smoothing)?;
    let op = Convolution::new(dk, u0.domain(), method)?;
    op.apply(u0)
}
