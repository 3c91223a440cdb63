//! Right-hand sides and energies for the three equation variants.
//!
//! Every variant evolves under ∂_t u = −(I+Δ)²u + rhs(u); this module owns
//! rhs(u) and the energy bookkeeping, the stepper owns the stiff linear part.
//!
//!   local:      rhs = r u + N(u) − γ u³
//!   one-kernel: rhs = r u + N(u) − γ u (K_ε*u²)
//!   two-kernel: rhs = r u ± u (Q_ε*u^p) ∓ u (K_ε*u^q)
//!
//! The two-kernel signs are selectable because the two conventions disagree
//! about which limit they produce; `Dissipative` is the default and its ε → 0
//! limit is r u + m_Q u^{p+1} − u^{q+1}.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Field};
use crate::error::{Error, Result};
use crate::kernels::{sample_kernel, KernelRole, KernelSpec};
use crate::nonlocal::{ConvMethod, Convolution};
use crate::util::ksum;

pub const MAX_NONLINEARITY_DEGREE: usize = 7;
pub const MAX_TWO_KERNEL_Q: u32 = 6;

/// Polynomial reaction term N(u) = Σ a_j u^j with N(0) = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    coeffs: Vec<f64>,
}

impl Nonlinearity {
    pub fn zero() -> Nonlinearity {
        Nonlinearity { coeffs: vec![] }
    }

    /// N(u) = b u² − u³.
    pub fn quadratic_cubic(b: f64) -> Nonlinearity {
        Nonlinearity {
            coeffs: vec![0.0, 0.0, b, -1.0],
        }
    }

    /// N(u) = s u³ − u⁵.
    pub fn cubic_quintic(s: f64) -> Nonlinearity {
        Nonlinearity {
            coeffs: vec![0.0, 0.0, 0.0, s, 0.0, -1.0],
        }
    }

    /// Coefficients indexed by power: coeffs[j] multiplies u^j.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Nonlinearity> {
        if coeffs.len() > MAX_NONLINEARITY_DEGREE + 1 {
            return Err(Error::InvalidModel(format!(
                "polynomial degree {} exceeds the cap {}",
                coeffs.len().saturating_sub(1),
                MAX_NONLINEARITY_DEGREE
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel(
                "polynomial coefficients must be finite".into(),
            ));
        }
        if coeffs.first().is_some_and(|&c| c != 0.0) {
            return Err(Error::InvalidModel(
                "constant term must vanish so that u = 0 stays a fixed point".into(),
            ));
        }
        Ok(Nonlinearity { coeffs })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|&c| c != 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        poly_eval(&self.coeffs, x)
    }

    /// The potential N̂(x) = −∫₀ˣ N(s) ds, exact polynomial antiderivative.
    pub fn potential(&self, x: f64) -> f64 {
        poly_eval(&self.potential_coeffs(), x)
    }

    fn potential_coeffs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs.len() + 1];
        for (j, &a) in self.coeffs.iter().enumerate() {
            out[j + 1] = -a / (j as f64 + 1.0);
        }
        out
    }
}

/// Witnesses for the coercivity of the potential: the leading term of N̂ is
/// (c_n/p)·x^p, and N̂(x) ≥ (c_n/2)·x^p/p − big_c_n everywhere. (The halved
/// slope is what admits a finite offset; lower-order terms of either sign eat
/// into the full slope asymptotically.)
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthCertificate {
    pub c_n: f64,
    pub big_c_n: f64,
    pub p: usize,
}

/// Accepts N whose potential grows like a positive even power ≥ 4, and
/// computes the certificate constants exactly from the coefficients.
pub fn check_growth(n: &Nonlinearity) -> Result<GrowthCertificate> {
    let pot = n.potential_coeffs();
    let p = match pot.iter().rposition(|&c| c != 0.0) {
        Some(p) => p,
        None => {
            return Err(Error::InvalidModel(
                "zero nonlinearity has no coercive potential".into(),
            ))
        }
    };
    let lead = pot[p];
    if p % 2 != 0 || lead < 0.0 {
        return Err(Error::InvalidModel(format!(
            "potential is unbounded below: leading term {lead}·x^{p}"
        )));
    }
    if p < 4 {
        return Err(Error::InvalidModel(format!(
            "potential grows only like x^{p}; degree at least 4 is required"
        )));
    }
    let c_n = p as f64 * lead;

    // Minimize d(x) = N̂(x) − (lead/2)·x^p over the reals. d has positive even
    // leading term, so the minimum sits at a critical point.
    let mut d = pot;
    d[p] -= lead / 2.0;
    let mut candidates = real_roots(&poly_derivative(&d));
    candidates.push(0.0);
    let min_d = candidates
        .iter()
        .map(|&x| poly_eval(&d, x))
        .fold(f64::INFINITY, f64::min);
    let big_c_n = (-min_d).max(0.0).max(f64::MIN_POSITIVE);
    Ok(GrowthCertificate { c_n, big_c_n, p })
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &c)| j as f64 * c)
        .collect()
}

/// All real roots, found by recursing on the derivative: between consecutive
/// critical points the polynomial is monotone, so each sign change brackets
/// exactly one root for bisection. Multiple roots where the value touches
/// zero at a breakpoint are picked up by the exact-zero check.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let deg = match coeffs.iter().rposition(|&c| c != 0.0) {
        Some(d) => d,
        None => return vec![],
    };
    if deg == 0 {
        return vec![];
    }
    let poly = &coeffs[..=deg];
    if deg == 1 {
        return vec![-poly[0] / poly[1]];
    }

    let lead = poly[deg];
    let cauchy = 1.0
        + poly[..deg]
            .iter()
            .map(|c| (c / lead).abs())
            .fold(0.0f64, f64::max);

    let mut breaks = vec![-cauchy];
    for c in real_roots(&poly_derivative(poly)) {
        if c > -cauchy && c < cauchy {
            breaks.push(c);
        }
    }
    breaks.push(cauchy);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut roots = vec![];
    let vals: Vec<f64> = breaks.iter().map(|&x| poly_eval(poly, x)).collect();
    for (i, (&x, &fx)) in breaks.iter().zip(&vals).enumerate() {
        if fx == 0.0 {
            roots.push(x);
            continue;
        }
        if i + 1 < breaks.len() && fx * vals[i + 1] < 0.0 {
            roots.push(bisect(poly, x, breaks[i + 1]));
        }
    }
    roots
}

fn bisect(poly: &[f64], mut a: f64, mut b: f64) -> f64 {
    let mut fa = poly_eval(poly, a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = poly_eval(poly, mid);
        if fm == 0.0 {
            return mid;
        }
        if fa * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwoKernelConvention {
    /// r u + u(Q_ε*u^p) − u(K_ε*u^q); limit r u + m_Q u^{p+1} − u^{q+1}.
    Dissipative,
    /// r u − u(Q_ε*u^p) + u(K_ε*u^q); the limit has the opposite aggregate
    /// signs and is not bounded below, so runs may legitimately blow up.
    AsPrinted,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelVariant {
    Local {
        gamma: f64,
        nonlinearity: Nonlinearity,
    },
    OneKernel {
        gamma: f64,
        nonlinearity: Nonlinearity,
        kernel: KernelSpec,
    },
    TwoKernel {
        p: u32,
        q: u32,
        kernel_q: KernelSpec,
        kernel_k: KernelSpec,
        convention: TwoKernelConvention,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub r: f64,
    /// Kernel scale; required for the nonlocal variants, ignored by local.
    pub eps: Option<f64>,
    pub variant: ModelVariant,
    /// Downgrades growth-check violations (coercivity and the γ ≥ −c_N gate)
    /// from errors to warnings.
    pub growth_check_override: bool,
}

impl ModelSpec {
    pub fn local(r: f64, gamma: f64, nonlinearity: Nonlinearity) -> ModelSpec {
        ModelSpec {
            r,
            eps: None,
            variant: ModelVariant::Local {
                gamma,
                nonlinearity,
            },
            growth_check_override: false,
        }
    }

    pub fn one_kernel(
        r: f64,
        gamma: f64,
        nonlinearity: Nonlinearity,
        kernel: KernelSpec,
        eps: f64,
    ) -> ModelSpec {
        ModelSpec {
            r,
            eps: Some(eps),
            variant: ModelVariant::OneKernel {
                gamma,
                nonlinearity,
                kernel,
            },
            growth_check_override: false,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn two_kernel(
        r: f64,
        p: u32,
        q: u32,
        kernel_q: KernelSpec,
        kernel_k: KernelSpec,
        convention: TwoKernelConvention,
        eps: f64,
    ) -> ModelSpec {
        ModelSpec {
            r,
            eps: Some(eps),
            variant: ModelVariant::TwoKernel {
                p,
                q,
                kernel_q,
                kernel_k,
                convention,
            },
            growth_check_override: false,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> ModelSpec {
        self.eps = Some(eps);
        self
    }

    pub fn is_local(&self) -> bool {
        matches!(self.variant, ModelVariant::Local { .. })
    }

    pub fn smoothing_kernel_spec(&self) -> Option<&KernelSpec> {
        match &self.variant {
            ModelVariant::Local { .. } => None,
            ModelVariant::OneKernel { kernel, .. } => Some(kernel),
            ModelVariant::TwoKernel { kernel_k, .. } => Some(kernel_k),
        }
    }

    /// The local and one-kernel flows descend an energy; the two-kernel
    /// variants do not (the coupling is not a symmetric pairing).
    pub fn is_gradient_flow(&self) -> bool {
        matches!(
            self.variant,
            ModelVariant::Local { .. } | ModelVariant::OneKernel { .. }
        )
    }

    /// Errors on structural violations; returns warnings for gates that were
    /// overridden instead of enforced.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = vec![];
        if !self.r.is_finite() {
            return Err(Error::InvalidModel(format!("r = {} must be finite", self.r)));
        }
        if let Some(eps) = self.eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidModel(format!("eps = {eps} must be positive")));
            }
        }
        if !self.is_local() && self.eps.is_none() {
            return Err(Error::InvalidModel(
                "nonlocal variants need an eps value".into(),
            ));
        }
        match &self.variant {
            ModelVariant::Local {
                gamma,
                nonlinearity,
            }
            | ModelVariant::OneKernel {
                gamma,
                nonlinearity,
                ..
            } => {
                if !gamma.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "gamma = {gamma} must be finite"
                    )));
                }
                if nonlinearity.is_zero() {
                    // The linear equation is a legitimate target (dispersion
                    // measurements); no coercivity to certify.
                    return Ok(warnings);
                }
                match check_growth(nonlinearity) {
                    Ok(cert) => {
                        if cert.p == 4 && *gamma < -cert.c_n {
                            let msg = format!(
                                "gamma = {gamma} violates gamma >= -c_N = {} required when \
                                 the growth exponent is p = 4",
                                -cert.c_n
                            );
                            if self.growth_check_override {
                                warnings.push(format!("{msg} (override in effect)"));
                            } else {
                                return Err(Error::InvalidModel(msg));
                            }
                        }
                    }
                    Err(e) => {
                        if self.growth_check_override {
                            warnings.push(format!("growth check failed: {e} (override in effect)"));
                        } else {
                            return Err(e);
                        }
                    }
                }
            }
            ModelVariant::TwoKernel { p, q, .. } => {
                if *p < 1 {
                    return Err(Error::InvalidModel("p must be at least 1".into()));
                }
                if p >= q {
                    return Err(Error::InvalidModel(format!(
                        "p = {p} must be smaller than q = {q}"
                    )));
                }
                if q % 2 != 0 {
                    return Err(Error::InvalidModel(format!(
                        "q = {q} is not allowed: q even is required"
                    )));
                }
                if *q > MAX_TWO_KERNEL_Q {
                    return Err(Error::InvalidModel(format!(
                        "q = {q} exceeds the supported cap {MAX_TWO_KERNEL_Q}"
                    )));
                }
            }
        }
        Ok(warnings)
    }

    /// The ε → 0 target equation: local with the same reaction terms the
    /// nonlocal couplings converge to.
    pub fn limit_spec(&self, dim: usize) -> Result<ModelSpec> {
        let spec = match &self.variant {
            ModelVariant::Local { .. } => ModelSpec {
                eps: None,
                ..self.clone()
            },
            ModelVariant::OneKernel {
                gamma,
                nonlinearity,
                ..
            } => ModelSpec {
                r: self.r,
                eps: None,
                variant: ModelVariant::Local {
                    gamma: *gamma,
                    nonlinearity: nonlinearity.clone(),
                },
                growth_check_override: self.growth_check_override,
            },
            ModelVariant::TwoKernel {
                p,
                q,
                kernel_q,
                convention,
                ..
            } => {
                // Q keeps its raw mass in the limit; K is renormalized to
                // mass one when sampled, so its limit factor is exactly 1.
                let m_q = kernel_q.continuum_mass(dim)?;
                let (sq, sk) = match convention {
                    TwoKernelConvention::Dissipative => (m_q, -1.0),
                    TwoKernelConvention::AsPrinted => (-m_q, 1.0),
                };
                let mut coeffs = vec![0.0; *q as usize + 2];
                coeffs[*p as usize + 1] += sq;
                coeffs[*q as usize + 1] += sk;
                ModelSpec {
                    r: self.r,
                    eps: None,
                    variant: ModelVariant::Local {
                        gamma: 0.0,
                        nonlinearity: Nonlinearity::polynomial(coeffs)?,
                    },
                    growth_check_override: self.growth_check_override
                        || matches!(convention, TwoKernelConvention::AsPrinted),
                }
            }
        };
        Ok(spec)
    }
}

/// Precomputed convolutions of powers of the current iterate, shared between
/// the rhs and the energy so each step pays for every kernel exactly once.
pub struct ConvData {
    k_conv: Option<Vec<f64>>,
    q_conv: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    /// ∫ ½(Δu)² − |∇u|² + (1−r)/2 u² + N̂(u), derivatives taken spectrally.
    pub local_part: f64,
    /// Signed kernel contribution entering `total`.
    pub nonlocal_part: f64,
    pub total: f64,
    /// (|γ|/4)‖u‖⁴_{L⁴}; dominates |nonlocal_part| for local and one-kernel.
    pub l4_bound: f64,
    /// ¼∫u²(K_ε*u^q) and ¼∫u²(Q_ε*u^p), two-kernel only.
    pub e_k: Option<f64>,
    pub e_q: Option<f64>,
    /// C(1 + E^K) + c‖u‖² at the default constants C = 1, c = ¼.
    pub eq_bound_rhs: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EqBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

pub const EQ_BOUND_DEFAULT_C: f64 = 1.0;
pub const EQ_BOUND_DEFAULT_SMALL_C: f64 = 0.25;

/// A model bound to a grid, with its kernels sampled and convolution plans
/// built for one fixed ε.
pub struct ModelOps {
    spec: ModelSpec,
    domain: Arc<Domain>,
    conv_k: Option<Convolution>,
    conv_q: Option<Convolution>,
    warnings: Vec<String>,
}

impl ModelOps {
    pub fn new(spec: &ModelSpec, domain: &Arc<Domain>, method: ConvMethod) -> Result<ModelOps> {
        let warnings = spec.validate()?;
        let (conv_k, conv_q) = match &spec.variant {
            ModelVariant::Local { .. } => (None, None),
            ModelVariant::OneKernel { kernel, .. } => {
                let eps = spec.eps.expect("validated");
                let dk = sample_kernel(kernel, domain, eps, KernelRole::Smoothing)?;
                (Some(Convolution::new(dk, domain, method)?), None)
            }
            ModelVariant::TwoKernel {
                kernel_q, kernel_k, ..
            } => {
                let eps = spec.eps.expect("validated");
                let dk = sample_kernel(kernel_k, domain, eps, KernelRole::Smoothing)?;
                let dq = sample_kernel(kernel_q, domain, eps, KernelRole::Companion)?;
                (
                    Some(Convolution::new(dk, domain, method)?),
                    Some(Convolution::new(dq, domain, method)?),
                )
            }
        };
        Ok(ModelOps {
            spec: spec.clone(),
            domain: Arc::clone(domain),
            conv_k,
            conv_q,
            warnings,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn conv_k(&self) -> Option<&Convolution> {
        self.conv_k.as_ref()
    }

    pub fn conv_q(&self) -> Option<&Convolution> {
        self.conv_q.as_ref()
    }

    pub fn is_gradient_flow(&self) -> bool {
        self.spec.is_gradient_flow()
    }

    fn check_field(&self, u: &Field) -> Result<()> {
        if !u.domain().same_grid(&self.domain) {
            return Err(Error::DomainMismatch(
                "field does not live on the model's grid".into(),
            ));
        }
        Ok(())
    }

    pub fn conv_data(&self, u: &Field) -> Result<ConvData> {
        self.check_field(u)?;
        let v = u.values();
        let data = match &self.spec.variant {
            ModelVariant::Local { .. } => ConvData {
                k_conv: None,
                q_conv: None,
            },
            ModelVariant::OneKernel { .. } => {
                let sq: Vec<f64> = v.iter().map(|&x| x * x).collect();
                ConvData {
                    k_conv: Some(self.conv_k.as_ref().expect("built").apply_values(&sq)),
                    q_conv: None,
                }
            }
            ModelVariant::TwoKernel { p, q, .. } => {
                let up: Vec<f64> = v.iter().map(|&x| x.powi(*p as i32)).collect();
                let uq: Vec<f64> = v.iter().map(|&x| x.powi(*q as i32)).collect();
                ConvData {
                    k_conv: Some(self.conv_k.as_ref().expect("built").apply_values(&uq)),
                    q_conv: Some(self.conv_q.as_ref().expect("built").apply_values(&up)),
                }
            }
        };
        Ok(data)
    }

    /// Everything except the stiff −(I+Δ)²u term.
    pub fn rhs_with(&self, u: &Field, data: &ConvData) -> Result<Field> {
        self.check_field(u)?;
        let r = self.spec.r;
        let v = u.values();
        let out: Vec<f64> = match &self.spec.variant {
            ModelVariant::Local {
                gamma,
                nonlinearity,
            } => v
                .iter()
                .map(|&x| r * x + nonlinearity.eval(x) - gamma * x * x * x)
                .collect(),
            ModelVariant::OneKernel {
                gamma,
                nonlinearity,
                ..
            } => {
                let k = data.k_conv.as_deref().ok_or_else(missing_conv_data)?;
                v.iter()
                    .zip(k)
                    .map(|(&x, &kx)| r * x + nonlinearity.eval(x) - gamma * x * kx)
                    .collect()
            }
            ModelVariant::TwoKernel { convention, .. } => {
                let k = data.k_conv.as_deref().ok_or_else(missing_conv_data)?;
                let q = data.q_conv.as_deref().ok_or_else(missing_conv_data)?;
                let s = match convention {
                    TwoKernelConvention::Dissipative => 1.0,
                    TwoKernelConvention::AsPrinted => -1.0,
                };
                v.iter()
                    .zip(q.iter().zip(k))
                    .map(|(&x, (&qx, &kx))| r * x + s * (x * qx - x * kx))
                    .collect()
            }
        };
        Field::from_values(&self.domain, out)
    }

    pub fn rhs(&self, u: &Field) -> Result<Field> {
        let data = self.conv_data(u)?;
        self.rhs_with(u, &data)
    }

    pub fn energy_with(&self, u: &Field, t: f64, data: &ConvData) -> Result<EnergyReport> {
        self.check_field(u)?;
        let w = self.domain.cell_volume();
        let v = u.values();
        let r = self.spec.r;

        let spectral = self.domain.to_spectral(u)?;
        let quad = ksum(
            spectral
                .coeffs()
                .iter()
                .zip(self.domain.laplacian_symbol())
                .map(|(&c, &lam)| {
                    let a = 1.0 + lam;
                    (a * a - r) * c * c
                }),
        );
        let potential_sum = match &self.spec.variant {
            ModelVariant::Local { nonlinearity, .. }
            | ModelVariant::OneKernel { nonlinearity, .. } => {
                if nonlinearity.is_zero() {
                    0.0
                } else {
                    w * ksum(v.iter().map(|&x| nonlinearity.potential(x)))
                }
            }
            ModelVariant::TwoKernel { .. } => 0.0,
        };
        let local_part = 0.5 * quad + potential_sum;

        let report = match &self.spec.variant {
            ModelVariant::Local { gamma, .. } => {
                let l4 = w * ksum(v.iter().map(|&x| x * x * x * x));
                let nonlocal_part = 0.25 * gamma * l4;
                EnergyReport {
                    t,
                    local_part,
                    nonlocal_part,
                    total: local_part + nonlocal_part,
                    l4_bound: 0.25 * gamma.abs() * l4,
                    e_k: None,
                    e_q: None,
                    eq_bound_rhs: None,
                }
            }
            ModelVariant::OneKernel { gamma, .. } => {
                let k = data.k_conv.as_deref().ok_or_else(missing_conv_data)?;
                let pairing = w * ksum(v.iter().zip(k).map(|(&x, &kx)| x * x * kx));
                let l4 = w * ksum(v.iter().map(|&x| x * x * x * x));
                let nonlocal_part = 0.25 * gamma * pairing;
                EnergyReport {
                    t,
                    local_part,
                    nonlocal_part,
                    total: local_part + nonlocal_part,
                    l4_bound: 0.25 * gamma.abs() * l4,
                    e_k: None,
                    e_q: None,
                    eq_bound_rhs: None,
                }
            }
            ModelVariant::TwoKernel { convention, .. } => {
                let k = data.k_conv.as_deref().ok_or_else(missing_conv_data)?;
                let q = data.q_conv.as_deref().ok_or_else(missing_conv_data)?;
                let e_k = 0.25 * w * ksum(v.iter().zip(k).map(|(&x, &kx)| x * x * kx));
                let e_q = 0.25 * w * ksum(v.iter().zip(q).map(|(&x, &qx)| x * x * qx));
                let l2_sq = w * ksum(v.iter().map(|&x| x * x));
                let nonlocal_part = match convention {
                    TwoKernelConvention::Dissipative => e_k - e_q,
                    TwoKernelConvention::AsPrinted => e_q - e_k,
                };
                EnergyReport {
                    t,
                    local_part,
                    nonlocal_part,
                    total: local_part + nonlocal_part,
                    l4_bound: 0.0,
                    e_k: Some(e_k),
                    e_q: Some(e_q),
                    eq_bound_rhs: Some(
                        EQ_BOUND_DEFAULT_C * (1.0 + e_k) + EQ_BOUND_DEFAULT_SMALL_C * l2_sq,
                    ),
                }
            }
        };
        Ok(report)
    }

    pub fn energy(&self, u: &Field, t: f64) -> Result<EnergyReport> {
        let data = self.conv_data(u)?;
        self.energy_with(u, t, &data)
    }

    /// Sup of the coupling term without its coefficient: |u³|, |u(K_ε*u²)|,
    /// or the larger of the two-kernel couplings.
    pub fn coupling_sup(&self, u: &Field, data: &ConvData) -> Result<f64> {
        self.check_field(u)?;
        let v = u.values();
        let sup = match &self.spec.variant {
            ModelVariant::Local { .. } => v.iter().fold(0.0f64, |m, &x| m.max((x * x * x).abs())),
            ModelVariant::OneKernel { .. } => {
                let k = data.k_conv.as_deref().ok_or_else(missing_conv_data)?;
                v.iter()
                    .zip(k)
                    .fold(0.0f64, |m, (&x, &kx)| m.max((x * kx).abs()))
            }
            ModelVariant::TwoKernel { .. } => {
                let k = data.k_conv.as_deref().ok_or_else(missing_conv_data)?;
                let q = data.q_conv.as_deref().ok_or_else(missing_conv_data)?;
                v.iter()
                    .zip(q.iter().zip(k))
                    .fold(0.0f64, |m, (&x, (&qx, &kx))| {
                        m.max((x * kx).abs()).max((x * qx).abs())
                    })
            }
        };
        Ok(sup)
    }

    /// Tests |E^Q| ≤ C(1+E^K) + c‖u‖² on a concrete field. A failed bound is
    /// reported, not an error; only malformed constants are errors.
    pub fn check_q_energy_bound(&self, u: &Field, big_c: f64, small_c: f64) -> Result<EqBoundReport> {
        if !matches!(self.spec.variant, ModelVariant::TwoKernel { .. }) {
            return Err(Error::InvalidModel(
                "the companion energy bound applies to the two-kernel variant only".into(),
            ));
        }
        if !(big_c.is_finite() && big_c > 0.0) {
            return Err(Error::InvalidModel(format!(
                "bound constant C = {big_c} must be positive"
            )));
        }
        if !(small_c > 0.0 && small_c < 0.5) {
            return Err(Error::InvalidModel(format!(
                "bound constant c = {small_c} must lie in (0, 1/2)"
            )));
        }
        let data = self.conv_data(u)?;
        let w = self.domain.cell_volume();
        let v = u.values();
        let k = data.k_conv.as_deref().expect("two-kernel");
        let q = data.q_conv.as_deref().expect("two-kernel");
        let e_k = 0.25 * w * ksum(v.iter().zip(k).map(|(&x, &kx)| x * x * kx));
        let e_q = 0.25 * w * ksum(v.iter().zip(q).map(|(&x, &qx)| x * x * qx));
        let l2_sq = w * ksum(v.iter().map(|&x| x * x));
        let lhs = e_q.abs();
        let rhs = big_c * (1.0 + e_k) + small_c * l2_sq;
        Ok(EqBoundReport {
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs,
        })
    }
}

fn missing_conv_data() -> Error {
    Error::InvalidModel("convolution data does not match the model variant".into())
}
