//! Rectangular box with homogeneous Neumann walls, discretized on the
//! cell-centered grid x_j = (j + 1/2) h per axis.
//!
//! The even extension of a field across a wall is smooth precisely on this
//! staggered grid, so tensor cosine modes cos(pi k x / L) form an orthogonal
//! basis that satisfies both boundary conditions (normal derivative of u and
//! of its Laplacian) exactly. The transform pair is an orthonormally scaled
//! DCT-II / DCT-III, which makes the discrete Parseval identity hold with
//! constant one: integrate(u^2) == sum of squared coefficients.

use std::path::Path;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};
use crate::util::{for_each_index, ksum};

pub const MAX_DIM: usize = 3;
pub const MIN_AXIS_SIZE: usize = 8;
pub const MAX_AXIS_SIZE: usize = 4096;

/// Grid geometry plus cached transform plans and the Laplacian multiplier
/// table. Shared behind an `Arc` by every field that lives on it.
pub struct Domain {
    sizes: Vec<usize>,
    lengths: Vec<f64>,
    spacings: Vec<f64>,
    cell_volume: f64,
    volume: f64,
    len: usize,
    /// Laplacian multiplier per flat coefficient index: -(sum_a (pi k_a / L_a)^2).
    lap: Vec<f64>,
    plans: Vec<Arc<dyn TransformType2And3<f64>>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Domain")
            .field("sizes", &self.sizes)
            .field("lengths", &self.lengths)
            .finish()
    }
}

impl Domain {
    pub fn new(sizes: &[usize], lengths: &[f64]) -> Result<Arc<Domain>> {
        if sizes.is_empty() || sizes.len() > MAX_DIM {
            return Err(Error::InvalidDomain(format!(
                "dimension must be 1..={MAX_DIM}, got {}",
                sizes.len()
            )));
        }
        if sizes.len() != lengths.len() {
            return Err(Error::InvalidDomain(format!(
                "{} sizes but {} lengths",
                sizes.len(),
                lengths.len()
            )));
        }
        for &n in sizes {
            if !(MIN_AXIS_SIZE..=MAX_AXIS_SIZE).contains(&n) {
                return Err(Error::InvalidDomain(format!(
                    "axis size {n} outside {MIN_AXIS_SIZE}..={MAX_AXIS_SIZE}"
                )));
            }
        }
        for &l in lengths {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidDomain(format!("axis length {l} must be positive")));
            }
        }

        let spacings: Vec<f64> = sizes
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| l / n as f64)
            .collect();
        let cell_volume = spacings.iter().product();
        let volume = lengths.iter().product();
        let len = sizes.iter().product();

        // Per-axis squared wavenumbers (pi k / L)^2, then the flat table.
        let axis_k2: Vec<Vec<f64>> = sizes
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| {
                (0..n)
                    .map(|k| {
                        let kappa = std::f64::consts::PI * k as f64 / l;
                        kappa * kappa
                    })
                    .collect()
            })
            .collect();
        let mut lap = vec![0.0f64; len];
        for_each_index(sizes, |flat, idx| {
            let mut s = 0.0;
            for (a, &k) in idx.iter().enumerate() {
                s += axis_k2[a][k];
            }
            lap[flat] = -s;
        });

        let mut planner = DctPlanner::<f64>::new();
        let plans: Vec<_> = sizes.iter().map(|&n| planner.plan_dct2(n)).collect();
        let scratch_len = plans.iter().map(|p| p.get_scratch_len()).max().unwrap_or(0);

        Ok(Arc::new(Domain {
            sizes: sizes.to_vec(),
            lengths: lengths.to_vec(),
            spacings,
            cell_volume,
            volume,
            len,
            lap,
            plans,
            scratch_len,
        }))
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    /// Quadrature weight of one cell (product of spacings).
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Measure of the whole box.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Total number of grid points (= number of spectral coefficients).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Node coordinates along one axis: (j + 1/2) h.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        let h = self.spacings[axis];
        (0..self.sizes[axis]).map(|j| (j as f64 + 0.5) * h).collect()
    }

    /// Laplacian multiplier table, one entry per flat coefficient index.
    pub fn laplacian_symbol(&self) -> &[f64] {
        &self.lap
    }

    /// Structural equality: same shape and same box, regardless of which
    /// `Domain` allocation a field happens to hold.
    pub fn same_grid(&self, other: &Domain) -> bool {
        self.sizes == other.sizes && self.lengths == other.lengths
    }

    fn check_field(&self, f: &Field) -> Result<()> {
        if !self.same_grid(&f.domain) {
            return Err(Error::DomainMismatch(format!(
                "field on {:?}/{:?}, domain is {:?}/{:?}",
                f.domain.sizes, f.domain.lengths, self.sizes, self.lengths
            )));
        }
        Ok(())
    }

    /// In-place separable DCT pass over every axis. `forward` selects the
    /// analysis direction (DCT-II) versus synthesis (DCT-III); scaling makes
    /// the pair orthonormal with respect to the midpoint quadrature.
    fn transform(&self, data: &mut [f64], forward: bool) {
        let mut scratch = vec![0.0f64; self.scratch_len];
        let max_n = *self.sizes.iter().max().unwrap();
        let mut line = vec![0.0f64; max_n];
        for axis in 0..self.dim() {
            let n = self.sizes[axis];
            let inner: usize = self.sizes[axis + 1..].iter().product();
            let outer = self.len / (n * inner);
            let plan = &self.plans[axis];
            let h = self.spacings[axis];
            let l = self.lengths[axis];
            // Basis along this axis: 1/sqrt(L) for k = 0, sqrt(2/L) cos(..) for k > 0.
            let (f0, fk) = (h / l.sqrt(), h * (2.0 / l).sqrt());
            let (g0, gk) = (2.0 / l.sqrt(), (2.0 / l).sqrt());
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    for j in 0..n {
                        line[j] = data[base + j * inner];
                    }
                    if forward {
                        plan.process_dct2_with_scratch(&mut line[..n], &mut scratch);
                        line[0] *= f0;
                        for v in line[1..n].iter_mut() {
                            *v *= fk;
                        }
                    } else {
                        line[0] *= g0;
                        for v in line[1..n].iter_mut() {
                            *v *= gk;
                        }
                        plan.process_dct3_with_scratch(&mut line[..n], &mut scratch);
                    }
                    for j in 0..n {
                        data[base + j * inner] = line[j];
                    }
                }
            }
        }
    }

    pub fn to_spectral(self: &Arc<Self>, field: &Field) -> Result<SpectralField> {
        self.check_field(field)?;
        let mut coeffs = field.values.clone();
        self.transform(&mut coeffs, true);
        Ok(SpectralField {
            domain: Arc::clone(self),
            coeffs,
        })
    }

    pub fn from_spectral(self: &Arc<Self>, spec: &SpectralField) -> Result<Field> {
        if !self.same_grid(&spec.domain) {
            return Err(Error::DomainMismatch("spectral field on a different grid".into()));
        }
        let mut values = spec.coeffs.clone();
        self.transform(&mut values, false);
        Ok(Field {
            domain: Arc::clone(self),
            values,
        })
    }

    fn apply_multiplier(self: &Arc<Self>, field: &Field, m: impl Fn(f64) -> f64) -> Result<Field> {
        let mut s = self.to_spectral(field)?;
        for (c, &lam) in s.coeffs.iter_mut().zip(&self.lap) {
            *c *= m(lam);
        }
        self.from_spectral(&s)
    }

    /// Laplacian of the cosine interpolant, exact for every represented mode.
    pub fn apply_laplacian(self: &Arc<Self>, field: &Field) -> Result<Field> {
        self.apply_multiplier(field, |lam| lam)
    }

    /// (I + Laplacian)^2, the stiff linear operator of the evolution.
    pub fn apply_biharmonic_op(self: &Arc<Self>, field: &Field) -> Result<Field> {
        self.apply_multiplier(field, |lam| {
            let a = 1.0 + lam;
            a * a
        })
    }

    /// Midpoint-rule integral over the box.
    pub fn integrate(&self, field: &Field) -> Result<f64> {
        self.check_field(field)?;
        Ok(self.cell_volume * ksum(field.values.iter().copied()))
    }

    /// Midpoint-rule L^2 inner product.
    pub fn inner(&self, a: &Field, b: &Field) -> Result<f64> {
        self.check_field(a)?;
        self.check_field(b)?;
        Ok(self.cell_volume * ksum(a.values.iter().zip(&b.values).map(|(x, y)| x * y)))
    }
}

/// Real scalar field sampled on the cell-centered grid, row-major.
#[derive(Clone, Debug)]
pub struct Field {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(domain: &Arc<Domain>, values: Vec<f64>) -> Result<Field> {
        if values.len() != domain.len() {
            return Err(Error::DomainMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                domain.len()
            )));
        }
        Ok(Field {
            domain: Arc::clone(domain),
            values,
        })
    }

    pub fn constant(domain: &Arc<Domain>, value: f64) -> Field {
        Field {
            domain: Arc::clone(domain),
            values: vec![value; domain.len()],
        }
    }

    pub fn zeros(domain: &Arc<Domain>) -> Field {
        Field::constant(domain, 0.0)
    }

    /// Build from node coordinates; `f` receives the coordinate vector of each
    /// cell center.
    pub fn from_fn(domain: &Arc<Domain>, mut f: impl FnMut(&[f64]) -> f64) -> Field {
        let axes: Vec<Vec<f64>> = (0..domain.dim()).map(|a| domain.axis_nodes(a)).collect();
        let mut values = vec![0.0f64; domain.len()];
        let mut coord = vec![0.0f64; domain.dim()];
        for_each_index(domain.sizes(), |flat, idx| {
            for (a, &j) in idx.iter().enumerate() {
                coord[a] = axes[a][j];
            }
            values[flat] = f(&coord);
        });
        Field {
            domain: Arc::clone(domain),
            values,
        }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Rebind to another allocation of the same grid (after a structural check).
    pub fn rebind(&self, domain: &Arc<Domain>) -> Result<Field> {
        if !domain.same_grid(&self.domain) {
            return Err(Error::DomainMismatch("cannot rebind across different grids".into()));
        }
        Field::from_values(domain, self.values.clone())
    }
}

/// Coefficients of the orthonormal cosine expansion, same row-major layout as
/// the grid (entry k holds the mode with per-axis indices k_a).
#[derive(Clone, Debug)]
pub struct SpectralField {
    domain: Arc<Domain>,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Mean of the field this expansion represents. The k = 0 coefficient is
    /// mean * sqrt(|box|) under the orthonormal scaling, so divide it back out.
    pub fn mean(&self) -> f64 {
        self.coeffs[0] / self.domain.volume().sqrt()
    }

    /// Sum of squared coefficients; equals integrate(u^2) by Parseval.
    pub fn energy_l2_sq(&self) -> f64 {
        ksum(self.coeffs.iter().map(|c| c * c))
    }
}

const FIELD_MAGIC: &[u8; 4] = b"SHNL";
const FIELD_VERSION: u32 = 1;

/// Write a field snapshot: magic "SHNL", version, dim, per-axis sizes (u32),
/// per-axis lengths (f64), then values row-major. Everything little-endian.
pub fn write_field(field: &Field, path: &Path) -> Result<()> {
    let d = field.domain();
    let mut buf: Vec<u8> = Vec::with_capacity(16 + 12 * d.dim() + 8 * d.len());
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(d.dim() as u32).to_le_bytes());
    for &n in d.sizes() {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for &l in d.lengths() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Read a field snapshot written by [`write_field`]. The field comes back on
/// a freshly built domain; use [`Field::rebind`] to attach it to an existing one.
pub fn read_field(path: &Path) -> Result<Field> {
    let bytes = std::fs::read(path)?;
    let bad = |msg: &str| Error::BadFieldFile(format!("{}: {msg}", path.display()));
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if at + n > bytes.len() {
            return Err(bad("truncated"));
        }
        let s = &bytes[at..at + n];
        at += n;
        Ok(s)
    };

    if take(4)? != FIELD_MAGIC {
        return Err(bad("magic mismatch"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != FIELD_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if dim == 0 || dim > MAX_DIM {
        return Err(bad(&format!("dimension {dim} out of range")));
    }
    let mut sizes = Vec::with_capacity(dim);
    for _ in 0..dim {
        sizes.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
    }
    let mut lengths = Vec::with_capacity(dim);
    for _ in 0..dim {
        lengths.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    let count: usize = sizes.iter().product();
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let domain = Domain::new(&sizes, &lengths)
        .map_err(|e| bad(&format!("header describes an unusable grid ({e})")))?;
    Field::from_values(&domain, values)
}
