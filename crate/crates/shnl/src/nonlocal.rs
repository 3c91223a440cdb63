//! Domain-truncated convolution (K_eps * u)(x_i) = sum_j w K_eps(x_i - x_j) u_j,
//! summing over grid cells only: contributions from outside the box are zero
//! (zero extension, never periodic wrap, never reflection).
//!
//! Two evaluation paths give the same answer: a direct sum over the kernel
//! lattice, and a zero-padded FFT that realizes the same linear (non-circular)
//! convolution. The direct path is the oracle; the FFT path is the default on
//! larger grids.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::domain::{Domain, Field};
use crate::error::{Error, Result};
use crate::kernels::{DiscreteKernel, KernelRole};
use crate::util::{for_each_index, lp_norm, next_fast_len, strides};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvMethod {
    Direct,
    FftZeroPad,
    /// FFT when the largest axis has at least 64 cells, direct otherwise.
    Auto,
}

pub struct Convolution {
    domain: Arc<Domain>,
    kernel: DiscreteKernel,
    plan: Plan,
}

enum Plan {
    Direct,
    Fft {
        padded: Vec<usize>,
        padded_strides: Vec<usize>,
        forward: Vec<Arc<dyn Fft<f64>>>,
        inverse: Vec<Arc<dyn Fft<f64>>>,
        /// Spectrum of the quadrature-weighted kernel with the inverse-FFT
        /// normalization folded in.
        kernel_hat: Vec<Complex<f64>>,
    },
}

impl Convolution {
    pub fn new(kernel: DiscreteKernel, domain: &Arc<Domain>, method: ConvMethod) -> Result<Self> {
        if kernel.spacings() != domain.spacings() || kernel.radii().len() != domain.dim() {
            return Err(Error::DomainMismatch(
                "kernel was sampled on a different grid".into(),
            ));
        }
        let use_fft = match method {
            ConvMethod::Direct => false,
            ConvMethod::FftZeroPad => true,
            ConvMethod::Auto => domain.sizes().iter().copied().max().unwrap_or(0) >= 64,
        };
        let plan = if use_fft {
            build_fft_plan(&kernel, domain)
        } else {
            Plan::Direct
        };
        Ok(Convolution {
            domain: Arc::clone(domain),
            kernel,
            plan,
        })
    }

    pub fn kernel(&self) -> &DiscreteKernel {
        &self.kernel
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn method_name(&self) -> &'static str {
        match self.plan {
            Plan::Direct => "direct",
            Plan::Fft { .. } => "fft-zeropad",
        }
    }

    pub fn apply(&self, input: &Field) -> Result<Field> {
        if !input.domain().same_grid(&self.domain) {
            return Err(Error::DomainMismatch(
                "convolution input lives on a different grid".into(),
            ));
        }
        let out = self.apply_values(input.values());
        Field::from_values(&self.domain, out)
    }

    pub(crate) fn apply_values(&self, input: &[f64]) -> Vec<f64> {
        match &self.plan {
            Plan::Direct => self.apply_direct(input),
            Plan::Fft {
                padded,
                padded_strides,
                forward,
                inverse,
                kernel_hat,
            } => self.apply_fft(input, padded, padded_strides, forward, inverse, kernel_hat),
        }
    }

    fn apply_direct(&self, input: &[f64]) -> Vec<f64> {
        let sizes = self.domain.sizes();
        let dim = sizes.len();
        let grid_strides = strides(sizes);
        let radii = self.kernel.radii();
        let lattice = self.kernel.lattice();
        let samples = self.kernel.samples();
        let w = self.kernel.quad_weight();

        let mut out = vec![0.0f64; input.len()];
        let mut point = vec![0usize; dim];
        for_each_index(sizes, |flat, idx| {
            point.copy_from_slice(idx);
            let mut acc = 0.0f64;
            for_each_index(lattice, |kflat, kidx| {
                let mut j_flat = 0usize;
                for a in 0..dim {
                    let o = kidx[a] as i64 - radii[a] as i64;
                    let j = point[a] as i64 - o;
                    if j < 0 || j >= sizes[a] as i64 {
                        return;
                    }
                    j_flat += j as usize * grid_strides[a];
                }
                acc += samples[kflat] * input[j_flat];
            });
            out[flat] = acc * w;
        });
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_fft(
        &self,
        input: &[f64],
        padded: &[usize],
        padded_strides: &[usize],
        forward: &[Arc<dyn Fft<f64>>],
        inverse: &[Arc<dyn Fft<f64>>],
        kernel_hat: &[Complex<f64>],
    ) -> Vec<f64> {
        let sizes = self.domain.sizes();
        let total: usize = padded.iter().product();
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        for_each_index(sizes, |flat, idx| {
            let mut p = 0usize;
            for (a, &i) in idx.iter().enumerate() {
                p += i * padded_strides[a];
            }
            buf[p] = Complex::new(input[flat], 0.0);
        });

        fft_all_axes(&mut buf, padded, padded_strides, forward);
        for (b, k) in buf.iter_mut().zip(kernel_hat) {
            *b *= *k;
        }
        fft_all_axes(&mut buf, padded, padded_strides, inverse);

        let mut out = vec![0.0f64; input.len()];
        for_each_index(sizes, |flat, idx| {
            let mut p = 0usize;
            for (a, &i) in idx.iter().enumerate() {
                p += i * padded_strides[a];
            }
            out[flat] = buf[p].re;
        });
        out
    }
}

fn build_fft_plan(kernel: &DiscreteKernel, domain: &Arc<Domain>) -> Plan {
    let sizes = domain.sizes();
    let padded: Vec<usize> = sizes
        .iter()
        .zip(kernel.radii())
        .map(|(&n, &r)| next_fast_len(n + r))
        .collect();
    let padded_strides = strides(&padded);
    let total: usize = padded.iter().product();

    let mut planner = FftPlanner::<f64>::new();
    let forward: Vec<_> = padded.iter().map(|&p| planner.plan_fft_forward(p)).collect();
    let inverse: Vec<_> = padded.iter().map(|&p| planner.plan_fft_inverse(p)).collect();

    // Embed the weighted kernel with offsets wrapped modulo the padded shape,
    // transform it once, and fold in the inverse-transform normalization.
    let mut kernel_hat = vec![Complex::new(0.0, 0.0); total];
    let w = kernel.quad_weight();
    let radii = kernel.radii().to_vec();
    let samples = kernel.samples();
    for_each_index(kernel.lattice(), |kflat, kidx| {
        let mut p = 0usize;
        for a in 0..radii.len() {
            let o = kidx[a] as i64 - radii[a] as i64;
            let wrapped = o.rem_euclid(padded[a] as i64) as usize;
            p += wrapped * padded_strides[a];
        }
        kernel_hat[p] = Complex::new(samples[kflat] * w, 0.0);
    });
    fft_all_axes(&mut kernel_hat, &padded, &padded_strides, &forward);
    let norm = 1.0 / total as f64;
    for k in kernel_hat.iter_mut() {
        *k *= norm;
    }

    Plan::Fft {
        padded,
        padded_strides,
        forward,
        inverse,
        kernel_hat,
    }
}

fn fft_all_axes(
    buf: &mut [Complex<f64>],
    padded: &[usize],
    padded_strides: &[usize],
    plans: &[Arc<dyn Fft<f64>>],
) {
    let dim = padded.len();
    for axis in 0..dim {
        let n = padded[axis];
        let stride = padded_strides[axis];
        let plan = &plans[axis];
        let mut line = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut outer = padded.to_vec();
        outer[axis] = 1;
        for_each_index(&outer, |_, idx| {
            let mut base = 0usize;
            for (a, &i) in idx.iter().enumerate() {
                base += i * padded_strides[a];
            }
            for (m, slot) in line.iter_mut().enumerate() {
                *slot = buf[base + m * stride];
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            for (m, slot) in line.iter().enumerate() {
                buf[base + m * stride] = *slot;
            }
        });
    }
}

/// Difference of Lp norms, ||K_eps * u||_s - ||u||_s, for s in [1, inf].
/// Unit-mass nonnegative kernels contract every such norm, so the gap should
/// never exceed a few ulps above zero.
pub fn contraction_gap(op: &Convolution, field: &Field, s: f64) -> Result<f64> {
    if op.kernel.role() != KernelRole::Smoothing {
        return Err(Error::InvalidKernel(
            "contraction gap is defined for smoothing-role kernels only".into(),
        ));
    }
    check_lp_exponent(s, true)?;
    let out = op.apply(field)?;
    let w = op.domain.cell_volume();
    let a = lp_norm(out.values().iter().copied(), w, s);
    let b = lp_norm(field.values().iter().copied(), w, s);
    Ok(a - b)
}

/// ||K_eps * u - u||_s over the whole box, s in [1, inf).
pub fn approx_identity_error(op: &Convolution, field: &Field, s: f64) -> Result<f64> {
    check_lp_exponent(s, false)?;
    let out = op.apply(field)?;
    let w = op.domain.cell_volume();
    let diff = out
        .values()
        .iter()
        .zip(field.values())
        .map(|(a, b)| a - b);
    Ok(lp_norm(diff, w, s))
}

fn check_lp_exponent(s: f64, allow_inf: bool) -> Result<()> {
    if s.is_nan() || s < 1.0 || (s.is_infinite() && !allow_inf) {
        return Err(Error::InvalidNorm(format!("unsupported Lp exponent {s}")));
    }
    Ok(())
}
