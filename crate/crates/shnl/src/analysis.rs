//! Norms, trajectory comparison, the ε-sweep harness, and the linear
//! dispersion measurement.
//!
//! The sweep runs the local limit once, then each requested ε with the same
//! grid, initial state, and snapshot schedule, and reduces the differences to
//! one error per (ε, norm) pair plus per-run uniformity proxies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Field};
use crate::error::{Error, Result};
use crate::initial::mollify;
use crate::model::{ModelOps, ModelSpec};
use crate::nonlocal::ConvMethod;
use crate::stepper::{integrate, RunningBounds, StepperConfig, Trajectory};
use crate::util::{for_each_index, ksum, log_log_slope, lp_norm};

use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    /// Lebesgue norm with exponent s ≥ 1 (finite).
    Lp(f64),
    /// Spectral Sobolev norm, s ∈ [0, 2]; weights (1+|κ|²)^s.
    Hs(f64),
    Sup,
    /// Discrete Hölder seminorm, α ∈ (0, 1); all node pairs in 1-D,
    /// axis-aligned pairs in higher dimensions.
    Holder(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Restriction {
    Full,
    /// Keep nodes at distance ≥ margin from every wall.
    Interior { margin: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeReduction {
    MaxOverSnapshots,
    L2InTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub kind: NormKind,
    pub restriction: Restriction,
    pub time_reduction: TimeReduction,
}

impl NormSpec {
    pub fn new(kind: NormKind) -> NormSpec {
        NormSpec {
            kind,
            restriction: Restriction::Full,
            time_reduction: TimeReduction::MaxOverSnapshots,
        }
    }

    pub fn interior(mut self, margin: f64) -> NormSpec {
        self.restriction = Restriction::Interior { margin };
        self
    }

    pub fn l2_in_time(mut self) -> NormSpec {
        self.time_reduction = TimeReduction::L2InTime;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NormKind::Lp(s) => {
                if !(s.is_finite() && s >= 1.0) {
                    return Err(Error::InvalidNorm(format!(
                        "Lp exponent {s} must be finite and >= 1"
                    )));
                }
            }
            NormKind::Hs(s) => {
                if !(s.is_finite() && (0.0..=2.0).contains(&s)) {
                    return Err(Error::InvalidNorm(format!(
                        "Hs order {s} must lie in [0, 2]"
                    )));
                }
                if !matches!(self.restriction, Restriction::Full) {
                    return Err(Error::InvalidNorm(
                        "Hs is spectral and supports the full domain only".into(),
                    ));
                }
            }
            NormKind::Sup => {}
            NormKind::Holder(a) => {
                if !(a.is_finite() && 0.0 < a && a < 1.0) {
                    return Err(Error::InvalidNorm(format!(
                        "Holder exponent {a} must lie in (0, 1)"
                    )));
                }
            }
        }
        if let Restriction::Interior { margin } = self.restriction {
            if !(margin.is_finite() && margin >= 0.0) {
                return Err(Error::InvalidNorm(format!(
                    "interior margin {margin} must be nonnegative"
                )));
            }
        }
        Ok(())
    }

    pub fn kind_label(&self) -> &'static str {
        match self.kind {
            NormKind::Lp(_) => "lp",
            NormKind::Hs(_) => "hs",
            NormKind::Sup => "sup",
            NormKind::Holder(_) => "holder",
        }
    }

    pub fn s_or_alpha(&self) -> Option<f64> {
        match self.kind {
            NormKind::Lp(s) | NormKind::Hs(s) | NormKind::Holder(s) => Some(s),
            NormKind::Sup => None,
        }
    }

    pub fn restriction_label(&self) -> String {
        match self.restriction {
            Restriction::Full => "full".into(),
            Restriction::Interior { margin } => format!("interior({margin})"),
        }
    }
}

/// (Σ_k (1+|κ_k|²)^s û_k²)^{1/2} for any s ≥ 0; the H⁴ proxy calls this
/// beyond the NormSpec range.
pub fn spectral_sobolev_norm(field: &Field, s: f64) -> Result<f64> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::InvalidNorm(format!(
            "Sobolev order {s} must be nonnegative"
        )));
    }
    let spectral = field.domain().to_spectral(field)?;
    let total = ksum(
        spectral
            .coeffs()
            .iter()
            .zip(field.domain().laplacian_symbol())
            .map(|(&c, &lam)| (1.0 - lam).powf(s) * c * c),
    );
    Ok(total.sqrt())
}

fn interior_mask(domain: &Domain, restriction: Restriction) -> Result<Vec<bool>> {
    match restriction {
        Restriction::Full => Ok(vec![true; domain.len()]),
        Restriction::Interior { margin } => {
            let nodes: Vec<Vec<f64>> = (0..domain.dim()).map(|a| domain.axis_nodes(a)).collect();
            let mut mask = vec![false; domain.len()];
            let lengths = domain.lengths().to_vec();
            let mut any = false;
            for_each_index(domain.sizes(), |flat, idx| {
                let inside = idx.iter().enumerate().all(|(a, &i)| {
                    let x = nodes[a][i];
                    x >= margin && x <= lengths[a] - margin
                });
                mask[flat] = inside;
                any |= inside;
            });
            if !any {
                return Err(Error::InvalidNorm(format!(
                    "interior margin {margin} leaves no grid points"
                )));
            }
            Ok(mask)
        }
    }
}

pub fn field_norm(field: &Field, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let domain = field.domain();
    match spec.kind {
        NormKind::Hs(s) => spectral_sobolev_norm(field, s),
        NormKind::Lp(s) => {
            let mask = interior_mask(domain, spec.restriction)?;
            let vals = field
                .values()
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v);
            Ok(lp_norm(vals, domain.cell_volume(), s))
        }
        NormKind::Sup => {
            let mask = interior_mask(domain, spec.restriction)?;
            Ok(field
                .values()
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .fold(0.0f64, |m, (&v, _)| m.max(v.abs())))
        }
        NormKind::Holder(alpha) => {
            let mask = interior_mask(domain, spec.restriction)?;
            Ok(holder_seminorm(field, &mask, alpha))
        }
    }
}

fn holder_seminorm(field: &Field, mask: &[bool], alpha: f64) -> f64 {
    let domain = field.domain();
    let v = field.values();
    let mut best = 0.0f64;
    if domain.dim() == 1 {
        let nodes = domain.axis_nodes(0);
        let idx: Vec<usize> = (0..v.len()).filter(|&i| mask[i]).collect();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let gap = (nodes[j] - nodes[i]).abs();
                best = best.max((v[j] - v[i]).abs() / gap.powf(alpha));
            }
        }
        return best;
    }
    let sizes = domain.sizes().to_vec();
    let strides = crate::util::strides(&sizes);
    for axis in 0..sizes.len() {
        let nodes = domain.axis_nodes(axis);
        let mut outer = sizes.clone();
        outer[axis] = 1;
        for_each_index(&outer, |_, idx| {
            let mut base = 0usize;
            for (a, &i) in idx.iter().enumerate() {
                base += i * strides[a];
            }
            for i in 0..sizes[axis] {
                let fi = base + i * strides[axis];
                if !mask[fi] {
                    continue;
                }
                for j in i + 1..sizes[axis] {
                    let fj = base + j * strides[axis];
                    if !mask[fj] {
                        continue;
                    }
                    let gap = (nodes[j] - nodes[i]).abs();
                    best = best.max((v[fj] - v[fi]).abs() / gap.powf(alpha));
                }
            }
        });
    }
    best
}

fn reduce_in_time(times: &[f64], values: &[f64], reduction: TimeReduction) -> f64 {
    match reduction {
        TimeReduction::MaxOverSnapshots => values.iter().fold(0.0f64, |m, &v| m.max(v)),
        TimeReduction::L2InTime => {
            let mut acc = 0.0;
            for i in 1..times.len() {
                let dt = times[i] - times[i - 1];
                acc += dt * 0.5 * (values[i - 1] * values[i - 1] + values[i] * values[i]);
            }
            acc.sqrt()
        }
    }
}

pub fn trajectory_norm(traj: &Trajectory, spec: &NormSpec) -> Result<f64> {
    let vals: Vec<f64> = traj
        .fields
        .iter()
        .map(|f| field_norm(f, spec))
        .collect::<Result<_>>()?;
    Ok(reduce_in_time(&traj.times, &vals, spec.time_reduction))
}

/// Time-reduced norm of the snapshot-wise difference; the snapshot schedules
/// must agree.
pub fn trajectory_error(a: &Trajectory, b: &Trajectory, spec: &NormSpec) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(Error::Analysis(format!(
            "snapshot schedules differ: {} vs {} snapshots",
            a.times.len(),
            b.times.len()
        )));
    }
    for (&ta, &tb) in a.times.iter().zip(&b.times) {
        if (ta - tb).abs() > 1e-12 * (1.0 + ta.abs()) {
            return Err(Error::Analysis(format!(
                "snapshot schedules differ at t = {ta} vs {tb}"
            )));
        }
    }
    let mut vals = vec![];
    for (fa, fb) in a.fields.iter().zip(&b.fields) {
        if !fa.domain().same_grid(fb.domain()) {
            return Err(Error::DomainMismatch(
                "trajectories live on different grids".into(),
            ));
        }
        let diff: Vec<f64> = fa
            .values()
            .iter()
            .zip(fb.values())
            .map(|(&x, &y)| x - y)
            .collect();
        let diff_field = Field::from_values(fa.domain(), diff)?;
        vals.push(field_norm(&diff_field, spec)?);
    }
    Ok(reduce_in_time(&a.times, &vals, spec.time_reduction))
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    /// Nonlocal model; its eps is overridden per sweep point.
    pub model: ModelSpec,
    pub stepper: StepperConfig,
    pub u0: Field,
    /// Start each nonlocal run from K_ε*u0 instead of u0.
    pub mollify_initial: bool,
    pub eps_list: Vec<f64>,
    pub norm_specs: Vec<NormSpec>,
    pub method: ConvMethod,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// "ok" or the error tag of the failed run.
    pub status: String,
    /// One entry per norm spec; None when the run failed.
    pub errors: Vec<Option<f64>>,
    pub bounds: Option<RunningBounds>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub eps_list: Vec<f64>,
    pub norm_specs: Vec<NormSpec>,
    pub rows: Vec<SweepRow>,
    /// Log-log slope over the last three valid points, per norm spec.
    pub fitted_orders: Vec<Option<f64>>,
    pub limit_bounds: RunningBounds,
    pub limit_run_id: String,
}

pub fn epsilon_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.eps_list.is_empty() {
        return Err(Error::Analysis("eps list is empty".into()));
    }
    if !cfg.eps_list.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Analysis("eps list must be strictly decreasing".into()));
    }
    if cfg.model.is_local() {
        return Err(Error::Analysis(
            "the sweep varies eps; the base model must be nonlocal".into(),
        ));
    }
    for spec in &cfg.norm_specs {
        spec.validate()?;
    }
    let domain: &Arc<Domain> = cfg.u0.domain();

    let limit_spec = cfg.model.limit_spec(domain.dim())?;
    let limit_ops = ModelOps::new(&limit_spec, domain, cfg.method)?;
    let limit_traj = integrate(&limit_ops, &cfg.u0, &cfg.stepper)?;

    let rows: Vec<SweepRow> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| match sweep_point(cfg, domain, &limit_traj, eps) {
            Ok(row) => row,
            Err(e) => SweepRow {
                eps,
                status: e.tag().into(),
                errors: vec![None; cfg.norm_specs.len()],
                bounds: None,
            },
        })
        .collect();

    let fitted_orders = (0..cfg.norm_specs.len())
        .map(|j| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|row| row.errors[j].map(|e| (row.eps, e)))
                .collect();
            let tail = &pts[pts.len().saturating_sub(3)..];
            log_log_slope(tail)
        })
        .collect();

    Ok(SweepReport {
        eps_list: cfg.eps_list.clone(),
        norm_specs: cfg.norm_specs.clone(),
        rows,
        fitted_orders,
        limit_bounds: limit_traj.bounds,
        limit_run_id: format!(
            "local-limit[r={},dt={},T={}]",
            cfg.model.r, cfg.stepper.dt, cfg.stepper.t_final
        ),
    })
}

fn sweep_point(
    cfg: &SweepConfig,
    domain: &Arc<Domain>,
    limit_traj: &Trajectory,
    eps: f64,
) -> Result<SweepRow> {
    let spec = cfg.model.clone().with_eps(eps);
    let ops = ModelOps::new(&spec, domain, cfg.method)?;
    let u0 = if cfg.mollify_initial {
        let kernel = spec.smoothing_kernel_spec().ok_or_else(|| {
            Error::InvalidModel("no smoothing kernel to mollify the initial state with".into())
        })?;
        mollify(&cfg.u0, kernel, eps, cfg.method)?
    } else {
        cfg.u0.clone()
    };
    let traj = integrate(&ops, &u0, &cfg.stepper)?;
    let mut errors = vec![];
    for spec in &cfg.norm_specs {
        errors.push(Some(trajectory_error(&traj, limit_traj, spec)?));
    }
    Ok(SweepRow {
        eps,
        status: "ok".into(),
        errors,
        bounds: Some(traj.bounds),
    })
}

impl SweepReport {
    /// One row per (ε, norm) pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,norm_kind,s_or_alpha,restriction,error,status\n");
        for row in &self.rows {
            for (spec, err) in self.norm_specs.iter().zip(&row.errors) {
                let s = spec
                    .s_or_alpha()
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                let e = err.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.eps,
                    spec.kind_label(),
                    s,
                    spec.restriction_label(),
                    e,
                    row.status
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Analysis(format!("report serialization failed: {e}")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProxyRow {
    pub name: String,
    /// One entry per sweep row, in eps order; None for failed runs.
    pub per_eps: Vec<Option<f64>>,
    pub max_over_eps: f64,
    pub min_over_eps: f64,
    pub limit_value: f64,
    /// Raised when the max over ε exceeds 10× the limit run's value.
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformBoundReport {
    pub rows: Vec<ProxyRow>,
}

pub const UNIFORM_BOUND_FACTOR: f64 = 10.0;

/// The four uniformity proxies per ε against the limit run: max-in-time H²,
/// the H¹(0,T;L²) norm, the coupling sup, and the L²(0,T;H⁴) snapshot proxy.
pub fn uniform_bound_report(report: &SweepReport) -> UniformBoundReport {
    UniformBoundReport {
        rows: vec![
            proxy_row(report, "c0_h2", |b| b.max_h2),
            proxy_row(report, "h1_l2", |b| b.h1_l2_sq.sqrt()),
            proxy_row(report, "coupling_sup", |b| b.max_coupling_sup),
            proxy_row(report, "l2_h4", |b| b.h4_l2_sq.sqrt()),
        ],
    }
}

fn proxy_row(report: &SweepReport, name: &str, f: impl Fn(&RunningBounds) -> f64) -> ProxyRow {
    let per_eps: Vec<Option<f64>> = report
        .rows
        .iter()
        .map(|r| r.bounds.as_ref().map(&f))
        .collect();
    let valid: Vec<f64> = per_eps.iter().flatten().copied().collect();
    let max = valid.iter().cloned().fold(f64::NAN, f64::max);
    let min = valid.iter().cloned().fold(f64::NAN, f64::min);
    let limit_value = f(&report.limit_bounds);
    ProxyRow {
        name: name.into(),
        per_eps,
        max_over_eps: max,
        min_over_eps: min,
        limit_value,
        flagged: !valid.is_empty() && max > UNIFORM_BOUND_FACTOR * limit_value,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DispersionRow {
    pub mode: usize,
    pub r: f64,
    pub measured: f64,
    pub predicted: f64,
    pub rel_err: f64,
}

/// Runs the linear equation (N ≡ 0, γ = 0) from single-mode data and reads
/// the growth rate off the spectral coefficient: σ(k) = r − (1+λ_k)².
pub fn measure_growth_rates(
    domain: &Arc<Domain>,
    r: f64,
    modes: &[usize],
    stepper: &StepperConfig,
) -> Result<Vec<DispersionRow>> {
    use crate::model::Nonlinearity;
    if domain.dim() != 1 {
        return Err(Error::Analysis(
            "growth rates are measured on 1-D grids".into(),
        ));
    }
    let spec = ModelSpec::local(r, 0.0, Nonlinearity::zero());
    let ops = ModelOps::new(&spec, domain, ConvMethod::Auto)?;
    let length = domain.lengths()[0];
    let lam = domain.laplacian_symbol().to_vec();
    let mut out = vec![];
    for &k in modes {
        if k >= domain.sizes()[0] {
            return Err(Error::Analysis(format!(
                "mode {k} is not representable on {} cells",
                domain.sizes()[0]
            )));
        }
        let u0 = Field::from_fn(domain, |x| (k as f64 * std::f64::consts::PI * x[0] / length).cos());
        let traj = integrate(&ops, &u0, stepper)?;
        let t_final = traj.final_time();
        let c0 = domain.to_spectral(&u0)?.coeffs()[k];
        let c1 = domain.to_spectral(traj.final_field())?.coeffs()[k];
        let measured = (c1 / c0).ln() / t_final;
        let a = 1.0 + lam[k];
        let predicted = r - a * a;
        let rel_err = (measured - predicted).abs() / predicted.abs().max(1.0);
        out.push(DispersionRow {
            mode: k,
            r,
            measured,
            predicted,
            rel_err,
        });
    }
    Ok(out)
}
