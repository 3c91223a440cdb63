//! Interaction kernels sampled on the grid's offset lattice.
//!
//! A kernel is described by a radial base profile (unit mass, intrinsic width
//! `base_scale`) times a signed amplitude, then scaled by the interaction
//! radius eps as K_eps(x) = eps^-d K(x/eps). Sampling evaluates that at every
//! lattice offset within the truncated support. Two roles exist:
//!
//! * `Smoothing`: must be nonnegative; the samples are renormalized so the
//!   discrete mass (sum times cell volume) is exactly 1.0. This is the
//!   approximate-identity kernel.
//! * `Companion`: samples are kept as specified (signed, any mass).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::util::{for_each_index, ksum};

pub const SMOOTHING_NUDGE_CAP: usize = 64;

/// Truncation radius of the unbounded profiles, in units of base_scale.
const GAUSSIAN_CUTOFF: f64 = 8.0;
const EXPONENTIAL_CUTOFF: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelFamily {
    Gaussian,
    Tophat,
    Triangle,
    TruncatedExponential,
    Table(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Intrinsic width of the base profile before eps-scaling.
    pub base_scale: f64,
    /// Signed overall factor; the closed-form families have unit mass at
    /// amplitude 1, so amplitude doubles as the kernel's target mass.
    pub amplitude: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> KernelSpec {
        KernelSpec {
            family,
            base_scale: 1.0,
            amplitude: 1.0,
        }
    }

    pub fn gaussian() -> KernelSpec {
        KernelSpec::new(KernelFamily::Gaussian)
    }

    pub fn scaled(self, amplitude: f64) -> KernelSpec {
        KernelSpec { amplitude, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_scale.is_finite() && self.base_scale > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "base_scale {} must be positive",
                self.base_scale
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidKernel("amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Exact mass of the (truncated) base profile times the amplitude. This
    /// is the coefficient the nonlocal term converges to as eps -> 0, so the
    /// sweep harness uses it to build limit models.
    pub fn continuum_mass(&self, dim: usize) -> Result<f64> {
        self.validate()?;
        check_dim(dim)?;
        let profile = Profile::resolve(self, dim)?;
        Ok(self.amplitude * profile.truncated_mass(dim))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("unsupported dimension {dim}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelRole {
    Smoothing,
    Companion,
}

/// Radial profile with the dimension-dependent normalization baked in.
enum Profile {
    Gaussian { sigma: f64, norm: f64 },
    Tophat { sigma: f64, norm: f64 },
    Triangle { sigma: f64, norm: f64 },
    TruncatedExponential { sigma: f64, norm: f64 },
    Table { sigma: f64, dim: usize, radii: Vec<f64>, values: Vec<f64> },
}

impl Profile {
    fn resolve(spec: &KernelSpec, dim: usize) -> Result<Profile> {
        let sigma = spec.base_scale;
        let pi = std::f64::consts::PI;
        Ok(match &spec.family {
            KernelFamily::Gaussian => Profile::Gaussian {
                sigma,
                norm: (2.0 * pi * sigma * sigma).powf(-(dim as f64) / 2.0),
            },
            KernelFamily::Tophat => {
                let ball = match dim {
                    1 => 2.0 * sigma,
                    2 => pi * sigma * sigma,
                    _ => 4.0 * pi * sigma.powi(3) / 3.0,
                };
                Profile::Tophat { sigma, norm: 1.0 / ball }
            }
            KernelFamily::Triangle => {
                let norm = match dim {
                    1 => 1.0 / sigma,
                    2 => 3.0 / (pi * sigma * sigma),
                    _ => 3.0 / (pi * sigma.powi(3)),
                };
                Profile::Triangle { sigma, norm }
            }
            KernelFamily::TruncatedExponential => {
                // Normalize over the truncated support, not the full line, so
                // the family has unit mass like the others.
                let c = EXPONENTIAL_CUTOFF;
                let e = (-c).exp();
                let (full, kept) = match dim {
                    1 => (2.0 * sigma, 1.0 - e),
                    2 => (2.0 * pi * sigma * sigma, 1.0 - e * (1.0 + c)),
                    _ => (8.0 * pi * sigma.powi(3), 1.0 - e * (c * c + 2.0 * c + 2.0) / 2.0),
                };
                Profile::TruncatedExponential { sigma, norm: 1.0 / (full * kept) }
            }
            KernelFamily::Table(path) => {
                let (radii, values) = read_kernel_table(path)?;
                Profile::Table { sigma, dim, radii, values }
            }
        })
    }

    /// Support radius in physical units before eps-scaling.
    fn support_radius(&self) -> f64 {
        match self {
            Profile::Gaussian { sigma, .. } => GAUSSIAN_CUTOFF * sigma,
            Profile::Tophat { sigma, .. } | Profile::Triangle { sigma, .. } => *sigma,
            Profile::TruncatedExponential { sigma, .. } => EXPONENTIAL_CUTOFF * sigma,
            Profile::Table { sigma, radii, .. } => sigma * radii.last().copied().unwrap_or(0.0),
        }
    }

    fn value(&self, r: f64) -> f64 {
        match self {
            Profile::Gaussian { sigma, norm } => {
                if r > GAUSSIAN_CUTOFF * sigma {
                    0.0
                } else {
                    norm * (-r * r / (2.0 * sigma * sigma)).exp()
                }
            }
            Profile::Tophat { sigma, norm } => {
                if r <= *sigma {
                    *norm
                } else {
                    0.0
                }
            }
            Profile::Triangle { sigma, norm } => {
                if r <= *sigma {
                    norm * (1.0 - r / sigma)
                } else {
                    0.0
                }
            }
            Profile::TruncatedExponential { sigma, norm } => {
                if r > EXPONENTIAL_CUTOFF * sigma {
                    0.0
                } else {
                    norm * (-r / sigma).exp()
                }
            }
            Profile::Table { sigma, dim, radii, values } => {
                let t = r / sigma;
                let scale = sigma.powi(-(*dim as i32));
                if radii.is_empty() || t > *radii.last().unwrap() {
                    return 0.0;
                }
                if t <= radii[0] {
                    return scale * values[0];
                }
                let j = radii.partition_point(|&x| x < t).max(1);
                let (r0, r1) = (radii[j - 1], radii[j]);
                let (v0, v1) = (values[j - 1], values[j]);
                let w = (t - r0) / (r1 - r0);
                scale * (v0 + w * (v1 - v0))
            }
        }
    }

    /// True if the profile never takes a negative value.
    fn nonnegative(&self) -> bool {
        match self {
            Profile::Table { values, .. } => values.iter().all(|&v| v >= 0.0),
            _ => true,
        }
    }

    /// Mass of the truncated profile over R^dim, exact per family. Table
    /// profiles integrate their piecewise-linear interpolant segment by
    /// segment, which is also exact.
    fn truncated_mass(&self, dim: usize) -> f64 {
        match self {
            // The gaussian tail beyond 8 sigma is below 1e-14 of the total in
            // any dimension; the exponential profile is normalized over its
            // own support. Report unit mass for all closed-form families.
            Profile::Gaussian { .. }
            | Profile::Tophat { .. }
            | Profile::Triangle { .. }
            | Profile::TruncatedExponential { .. } => 1.0,
            Profile::Table { radii, values, .. } => {
                // Surface area of the unit sphere in `dim` dimensions.
                let surf = match dim {
                    1 => 2.0,
                    2 => 2.0 * std::f64::consts::PI,
                    _ => 4.0 * std::f64::consts::PI,
                };
                let d = dim as f64;
                let mut mass = 0.0;
                if !radii.is_empty() && radii[0] > 0.0 {
                    // flat extension from r = 0 to the first sample
                    mass += values[0] * radii[0].powi(dim as i32) / d;
                }
                for j in 1..radii.len() {
                    let (a, b) = (radii[j - 1], radii[j]);
                    let (va, vb) = (values[j - 1], values[j]);
                    // integral of r^(dim-1) times the linear interpolant
                    let slope = (vb - va) / (b - a);
                    let c0 = va - slope * a;
                    mass += c0 * (b.powf(d) - a.powf(d)) / d
                        + slope * (b.powf(d + 1.0) - a.powf(d + 1.0)) / (d + 1.0);
                }
                surf * mass
            }
        }
    }
}

/// Parse a two-column kernel table: `offset value` per line, `#` comments and
/// blank lines ignored, offsets strictly increasing. Offsets may span negative
/// values; the kernel is symmetrized by averaging the two sides.
pub fn read_kernel_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::BadKernelTable(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, msg: &str| {
        Error::BadKernelTable(format!("{}:{line}: {msg}", path.display()))
    };

    let mut offsets: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split([' ', '\t', ',']).filter(|s| !s.is_empty());
        let off: f64 = parts
            .next()
            .ok_or_else(|| bad(i + 1, "missing offset column"))?
            .parse()
            .map_err(|_| bad(i + 1, "offset is not a number"))?;
        let val: f64 = parts
            .next()
            .ok_or_else(|| bad(i + 1, "missing value column"))?
            .parse()
            .map_err(|_| bad(i + 1, "value is not a number"))?;
        if parts.next().is_some() {
            return Err(bad(i + 1, "more than two columns"));
        }
        if !off.is_finite() || !val.is_finite() {
            return Err(bad(i + 1, "non-finite entry"));
        }
        if let Some(&prev) = offsets.last() {
            if off <= prev {
                return Err(bad(i + 1, "offsets must be strictly increasing"));
            }
        }
        offsets.push(off);
        values.push(val);
    }
    if offsets.is_empty() {
        return Err(Error::BadKernelTable(format!("{}: empty table", path.display())));
    }

    // Fold onto radii >= 0, averaging mirrored entries.
    let mut folded: Vec<(f64, f64, usize)> = Vec::new();
    for (&off, &val) in offsets.iter().zip(&values) {
        let r = off.abs();
        match folded.iter_mut().find(|(fr, _, _)| *fr == r) {
            Some((_, sum, count)) => {
                *sum += val;
                *count += 1;
            }
            None => folded.push((r, val, 1)),
        }
    }
    folded.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let radii: Vec<f64> = folded.iter().map(|(r, _, _)| *r).collect();
    let vals: Vec<f64> = folded.iter().map(|(_, s, c)| s / *c as f64).collect();
    if radii.len() < 2 {
        return Err(Error::BadKernelTable(format!(
            "{}: need at least two distinct radii after symmetrization",
            path.display()
        )));
    }
    Ok((radii, vals))
}

/// Kernel samples on the offset lattice of a concrete grid, ready for the
/// truncated convolution sum_j w * K(x_i - x_j) * u_j.
#[derive(Clone, Debug)]
pub struct DiscreteKernel {
    eps: f64,
    role: KernelRole,
    /// Per-axis offset radius; the lattice spans -R..=R per axis.
    radii: Vec<usize>,
    /// Lattice shape, 2 R_a + 1 per axis.
    lattice: Vec<usize>,
    samples: Vec<f64>,
    /// Quadrature weight (cell volume of the grid it was sampled on).
    quad_weight: f64,
    /// Grid spacings, kept for second moments and lattice geometry checks.
    spacings: Vec<f64>,
    /// Physical support radius after eps-scaling.
    support_radius: f64,
    discrete_mass: f64,
}

impl DiscreteKernel {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn role(&self) -> KernelRole {
        self.role
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn lattice(&self) -> &[usize] {
        &self.lattice
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn quad_weight(&self) -> f64 {
        self.quad_weight
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Stored discrete mass: sum of samples times the cell volume. Exactly 1.0
    /// for smoothing-role kernels.
    pub fn discrete_mass(&self) -> f64 {
        self.discrete_mass
    }

    /// Recompute the mass from the samples in construction order.
    pub fn recompute_mass(&self) -> f64 {
        ksum(self.samples.iter().copied()) * self.quad_weight
    }

    /// Sum of samples * |offset|^2 * w; approaches eps^2 times the base
    /// profile's second moment once the lattice resolves the kernel.
    pub fn second_moment(&self) -> f64 {
        let mut terms = Vec::with_capacity(self.samples.len());
        for_each_index(&self.lattice, |flat, idx| {
            let mut r2 = 0.0;
            for (a, &i) in idx.iter().enumerate() {
                let o = i as i64 - self.radii[a] as i64;
                let x = o as f64 * self.spacings[a];
                r2 += x * x;
            }
            terms.push(self.samples[flat] * r2);
        });
        ksum(terms) * self.quad_weight
    }

    /// Sample at a signed multi-offset, zero outside the stored lattice.
    pub fn sample_at(&self, offset: &[i64]) -> f64 {
        let mut flat = 0usize;
        for (a, &o) in offset.iter().enumerate() {
            let r = self.radii[a] as i64;
            if o < -r || o > r {
                return 0.0;
            }
            flat = flat * self.lattice[a] + (o + r) as usize;
        }
        self.samples[flat]
    }

    /// Bitwise mirror symmetry of the stored samples.
    pub fn even_bitwise(&self) -> bool {
        let mut even = true;
        for_each_index(&self.lattice, |flat, idx| {
            let mirrored: Vec<i64> = idx
                .iter()
                .zip(&self.radii)
                .map(|(&i, &r)| -(i as i64 - r as i64))
                .collect();
            if self.sample_at(&mirrored).to_bits() != self.samples[flat].to_bits() {
                even = false;
            }
        });
        even
    }
}

/// Evaluate a kernel spec on a grid's offset lattice. For the smoothing role
/// the result is nonnegative and has discrete mass exactly 1.0; evenness holds
/// for every role because sampling sees only |offset|.
pub fn sample_kernel(
    spec: &KernelSpec,
    domain: &Arc<Domain>,
    eps: f64,
    role: KernelRole,
) -> Result<DiscreteKernel> {
    spec.validate()?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidKernel(format!("eps {eps} must be positive")));
    }
    let dim = domain.dim();
    let profile = Profile::resolve(spec, dim)?;
    let support = eps * profile.support_radius();
    let max_h = domain.spacings().iter().cloned().fold(0.0f64, f64::max);
    let min_support = 2.0 * max_h;
    if support < min_support {
        return Err(Error::UnderResolved { support, min_support });
    }

    let radii: Vec<usize> = domain
        .sizes()
        .iter()
        .zip(domain.spacings())
        .map(|(&n, &h)| {
            let r = (support / h + 1e-9).floor() as usize;
            r.min(n - 1)
        })
        .collect();
    let lattice: Vec<usize> = radii.iter().map(|&r| 2 * r + 1).collect();
    let count: usize = lattice.iter().product();

    let amp = spec.amplitude * eps.powi(-(dim as i32));
    let mut samples = vec![0.0f64; count];
    for_each_index(&lattice, |flat, idx| {
        let mut r2 = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            let o = i as i64 - radii[a] as i64;
            let x = o as f64 * domain.spacings()[a];
            r2 += x * x;
        }
        samples[flat] = amp * profile.value(r2.sqrt() / eps);
    });

    let quad_weight = domain.cell_volume();
    let mut kernel = DiscreteKernel {
        eps,
        role,
        radii,
        lattice,
        samples,
        quad_weight,
        spacings: domain.spacings().to_vec(),
        support_radius: support,
        discrete_mass: 0.0,
    };
    kernel.discrete_mass = kernel.recompute_mass();

    if role == KernelRole::Smoothing {
        if kernel.samples.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidKernel(
                "smoothing kernels must be nonnegative (check amplitude and table values)".into(),
            ));
        }
        if kernel.discrete_mass <= 0.0 {
            return Err(Error::InvalidKernel(
                "smoothing kernel has zero discrete mass on this grid".into(),
            ));
        }
        renormalize_to_unit_mass(&mut kernel)?;
    }
    Ok(kernel)
}

/// Scale so the discrete mass is exactly 1.0 (bit-exact). After the bulk
/// rescale the residual is a few ulps; fold it into the center sample until
/// the recomputed sum rounds to exactly 1.0.
fn renormalize_to_unit_mass(kernel: &mut DiscreteKernel) -> Result<()> {
    let m = kernel.recompute_mass();
    for v in kernel.samples.iter_mut() {
        *v /= m;
    }
    let center: usize = {
        let mut flat = 0usize;
        for (a, &r) in kernel.radii.iter().enumerate() {
            flat = flat * kernel.lattice[a] + r;
        }
        flat
    };
    for _ in 0..SMOOTHING_NUDGE_CAP {
        let m = kernel.recompute_mass();
        if m == 1.0 {
            kernel.discrete_mass = 1.0;
            return Ok(());
        }
        kernel.samples[center] += (1.0 - m) / kernel.quad_weight;
    }
    Err(Error::InvalidKernel(
        "unit-mass renormalization did not reach an exact fixed point".into(),
    ))
}

/// Admissibility report for a kernel intended for the smoothing role,
/// evaluated on the base profile (before any discrete renormalization).
#[derive(Clone, Debug, serde::Serialize)]
pub struct KernelAdmissibility {
    pub even: bool,
    pub nonnegative: bool,
    pub unit_mass: bool,
    pub continuum_mass: f64,
}

impl KernelAdmissibility {
    pub fn pass(&self) -> bool {
        self.even && self.nonnegative && self.unit_mass
    }
}

pub fn check_k_admissible(spec: &KernelSpec, dim: usize) -> Result<KernelAdmissibility> {
    spec.validate()?;
    check_dim(dim)?;
    let profile = Profile::resolve(spec, dim)?;
    let mass = spec.amplitude * profile.truncated_mass(dim);
    let nonnegative = if spec.amplitude >= 0.0 {
        profile.nonnegative()
    } else {
        // a flipped profile stays nonnegative only if it was nonpositive
        match &profile {
            Profile::Table { values, .. } => values.iter().all(|&v| v <= 0.0),
            _ => false,
        }
    };
    Ok(KernelAdmissibility {
        // sampling is radial, so the discrete kernel is even by construction
        even: true,
        nonnegative,
        unit_mass: (mass - 1.0).abs() <= 1e-8,
        continuum_mass: mass,
    })
}

/// Pointwise domination report: |Q_eps| <= K_eps at every offset of the union
/// lattice, with Q sampled raw and K as the renormalized smoothing kernel,
/// i.e. exactly the pair of kernels a two-kernel model would use.
#[derive(Clone, Debug, serde::Serialize)]
pub struct QDomination {
    pub pass: bool,
    pub violations: usize,
    pub max_excess: f64,
    pub worst_offset: Vec<i64>,
}

pub fn check_q_dominated(
    q_spec: &KernelSpec,
    k_spec: &KernelSpec,
    eps: f64,
    domain: &Arc<Domain>,
) -> Result<QDomination> {
    let q = sample_kernel(q_spec, domain, eps, KernelRole::Companion)?;
    let k = sample_kernel(k_spec, domain, eps, KernelRole::Smoothing)?;
    Ok(compare_domination(&q, &k))
}

pub(crate) fn compare_domination(q: &DiscreteKernel, k: &DiscreteKernel) -> QDomination {
    let dim = q.radii.len();
    let union: Vec<usize> = (0..dim).map(|a| q.radii[a].max(k.radii[a])).collect();
    let shape: Vec<usize> = union.iter().map(|&r| 2 * r + 1).collect();
    // K passes through unit-mass renormalization, so equality cases sit a few
    // ulps off; ignore excesses below rounding scale so Q = K reports a clean
    // pass with zero margin.
    let tol = 1e-12 * k.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut report = QDomination {
        pass: true,
        violations: 0,
        max_excess: 0.0,
        worst_offset: vec![0; dim],
    };
    for_each_index(&shape, |_, idx| {
        let offset: Vec<i64> = idx
            .iter()
            .zip(&union)
            .map(|(&i, &r)| i as i64 - r as i64)
            .collect();
        let excess = q.sample_at(&offset).abs() - k.sample_at(&offset);
        if excess > tol {
            report.pass = false;
            report.violations += 1;
            if excess > report.max_excess {
                report.max_excess = excess;
                report.worst_offset = offset;
            }
        }
    });
    report
}
