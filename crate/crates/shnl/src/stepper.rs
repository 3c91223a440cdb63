//! Time integration of ∂_t u = −(I+Δ)²u + rhs(u).
//!
//! The stiff linear operator is diagonal in the cosine basis, so the implicit
//! schemes solve it pointwise in spectral space at no cost; only rhs(u) is
//! explicit. An optional energy guard watches the discrete energy and retries
//! a step at half the size when it increases, which keeps the gradient-flow
//! variants on their dissipative track even with an aggressive base dt.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::analysis::spectral_sobolev_norm;
use crate::domain::{write_field, Field};
use crate::error::{Error, Result};
use crate::model::{ConvData, EnergyReport, ModelOps};
use crate::util::ksum;

pub const SNAPSHOT_CAP: usize = 256;
pub const RK4_STIFFNESS_BOUND: f64 = 2.8;
pub const GUARD_TOLERANCE: f64 = 1e-10;
pub const GUARD_MAX_LEVELS: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    /// Backward Euler on the linear part, forward Euler on the rest.
    Imex1,
    /// Crank-Nicolson on the linear part, Adams-Bashforth 2 on the rest.
    Imex2,
    /// Fully explicit classical RK4; an oracle for the IMEX schemes, refuses
    /// stiff grids outright.
    Rk4Explicit,
}

#[derive(Clone, Copy, Debug)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    /// None resolves to the variant default: on for gradient flows, off for
    /// the two-kernel conventions.
    pub energy_guard: Option<bool>,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            scheme: Scheme::Imex2,
            dt: 1e-3,
            t_final: 1.0,
            snapshot_stride: 1,
            energy_guard: None,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidStepper(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return Err(Error::InvalidStepper(format!(
                "final time {} must be at least one dt",
                self.t_final
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidStepper("snapshot stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolved_energy_guard(&self, gradient_flow: bool) -> bool {
        self.energy_guard.unwrap_or(gradient_flow)
    }
}

/// Running maxima and time-integrated squares recorded during a run; these
/// are the uniformity proxies the sweep report compares across ε.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RunningBounds {
    /// max over steps of the spectral H² norm.
    pub max_h2: f64,
    /// ∫‖u‖² + ∫‖∂_t u‖² dt, trapezoid in the first term, one-sided
    /// differences in the second.
    pub h1_l2_sq: f64,
    /// max over steps of the coupling sup (|u³|, |u K_ε*u²|, or the larger
    /// two-kernel coupling).
    pub max_coupling_sup: f64,
    /// Trapezoid over snapshot times of the squared spectral H⁴ norm.
    pub h4_l2_sq: f64,
}

pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    /// One report per base step boundary, the initial state included.
    pub energy_series: Vec<EnergyReport>,
    /// Smallest sub-step actually taken within each base step.
    pub dt_history: Vec<f64>,
    /// |ΔE/Δt + ‖Δu/Δt‖²| per base step.
    pub dissipation_residual: Vec<f64>,
    /// ‖Δu/Δt‖² per base step, the scale the residual is judged against.
    pub udot_l2_sq: Vec<f64>,
    pub bounds: RunningBounds,
}

impl Trajectory {
    pub fn final_field(&self) -> &Field {
        self.fields.last().expect("a trajectory holds >= 1 snapshot")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("a trajectory holds >= 1 snapshot")
    }

    /// Snapshot files plus a JSON index with the scalar series.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut files = vec![];
        for (i, field) in self.fields.iter().enumerate() {
            let name = format!("snapshot_{i:04}.shnl");
            write_field(field, &dir.join(&name))?;
            files.push(name);
        }
        #[derive(Serialize)]
        struct Index<'a> {
            times: &'a [f64],
            snapshot_files: Vec<String>,
            energy_series: &'a [EnergyReport],
            dt_history: &'a [f64],
            dissipation_residual: &'a [f64],
            udot_l2_sq: &'a [f64],
            bounds: &'a RunningBounds,
        }
        let index = Index {
            times: &self.times,
            snapshot_files: files,
            energy_series: &self.energy_series,
            dt_history: &self.dt_history,
            dissipation_residual: &self.dissipation_residual,
            udot_l2_sq: &self.udot_l2_sq,
            bounds: &self.bounds,
        };
        let text = serde_json::to_string_pretty(&index)
            .map_err(|e| Error::Analysis(format!("index serialization failed: {e}")))?;
        fs::write(dir.join("index.json"), text)?;
        Ok(())
    }
}

/// One step of the requested scheme from a cold start (no multistep history).
pub fn step_once(ops: &ModelOps, u: &Field, dt: f64, scheme: Scheme) -> Result<Field> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidStepper(format!("dt = {dt} must be positive")));
    }
    let mut engine = Engine::new(ops, scheme, dt)?;
    let data = ops.conv_data(u)?;
    let (next, _) = engine.candidate_with(ops, u, &data, dt)?;
    if !next.is_finite() {
        return Err(Error::NonFinite { step: 0, time: dt });
    }
    Ok(next)
}

pub fn integrate(ops: &ModelOps, u0: &Field, config: &StepperConfig) -> Result<Trajectory> {
    config.validate()?;
    if !u0.is_finite() {
        return Err(Error::NonFinite { step: 0, time: 0.0 });
    }
    let guard = config.resolved_energy_guard(ops.is_gradient_flow());
    let mut engine = Engine::new(ops, config.scheme, config.dt)?;

    let n_steps = ((config.t_final / config.dt).round() as usize).max(1);
    let dt = config.dt;

    let mut u = u0.clone();
    let mut data = ops.conv_data(&u)?;
    let mut report = ops.energy_with(&u, 0.0, &data)?;

    let w = ops.domain().cell_volume();
    let mut recorder = Recorder::new(config.snapshot_stride);
    recorder.energy_series.push(report);
    recorder.take_snapshot(0.0, &u);
    let mut bounds = RunningBounds {
        max_h2: spectral_sobolev_norm(&u, 2.0)?,
        h1_l2_sq: 0.0,
        max_coupling_sup: ops.coupling_sup(&u, &data)?,
        h4_l2_sq: 0.0,
    };
    let mut l2_sq_prev = w * ksum(u.values().iter().map(|&x| x * x));

    for step in 1..=n_steps {
        let t0 = (step - 1) as f64 * dt;
        let outcome = engine.advance(ops, &u, &data, report, t0, dt, guard, 0, step)?;

        let diff_sq = w * ksum(
            outcome
                .u
                .values()
                .iter()
                .zip(u.values())
                .map(|(&a, &b)| (a - b) * (a - b)),
        );
        let udot_sq = diff_sq / (dt * dt);
        let l2_sq_new = w * ksum(outcome.u.values().iter().map(|&x| x * x));

        let new_report = match outcome.energy {
            Some(rep) => rep,
            None => ops.energy_with(&outcome.u, t0 + dt, &outcome.data)?,
        };
        recorder.dissipation_residual.push(
            ((new_report.total - report.total) / dt + udot_sq).abs(),
        );
        recorder.udot_l2_sq.push(udot_sq);
        recorder.dt_history.push(outcome.min_dt);
        recorder.energy_series.push(new_report);

        bounds.h1_l2_sq += dt * 0.5 * (l2_sq_prev + l2_sq_new) + diff_sq / dt;
        l2_sq_prev = l2_sq_new;

        u = outcome.u;
        data = outcome.data;
        report = new_report;

        bounds.max_h2 = bounds.max_h2.max(spectral_sobolev_norm(&u, 2.0)?);
        bounds.max_coupling_sup = bounds
            .max_coupling_sup
            .max(ops.coupling_sup(&u, &data)?);

        let is_last = step == n_steps;
        if step % recorder.stride == 0 || is_last {
            recorder.take_snapshot(step as f64 * dt, &u);
        }
    }

    bounds.h4_l2_sq = recorder.h4_time_integral();
    let (times, fields) = recorder.split_snapshots();
    Ok(Trajectory {
        times,
        fields,
        energy_series: recorder.energy_series,
        dt_history: recorder.dt_history,
        dissipation_residual: recorder.dissipation_residual,
        udot_l2_sq: recorder.udot_l2_sq,
        bounds,
    })
}

struct Snapshot {
    t: f64,
    field: Field,
    h4: f64,
}

struct Recorder {
    stride: usize,
    snapshots: Vec<Snapshot>,
    energy_series: Vec<EnergyReport>,
    dt_history: Vec<f64>,
    dissipation_residual: Vec<f64>,
    udot_l2_sq: Vec<f64>,
}

impl Recorder {
    fn new(stride: usize) -> Recorder {
        Recorder {
            stride,
            snapshots: vec![],
            energy_series: vec![],
            dt_history: vec![],
            dissipation_residual: vec![],
            udot_l2_sq: vec![],
        }
    }

    fn take_snapshot(&mut self, t: f64, u: &Field) {
        if self.snapshots.last().is_some_and(|s| s.t == t) {
            return;
        }
        let h4 = spectral_sobolev_norm(u, 4.0).expect("finite snapshot");
        self.snapshots.push(Snapshot {
            t,
            field: u.clone(),
            h4,
        });
        if self.snapshots.len() > SNAPSHOT_CAP {
            self.thin();
        }
    }

    /// Drop every other snapshot and double the stride so later steps land on
    /// the surviving schedule. Runs right after a push overflows the even cap,
    /// so the list has cap+1 entries and the newest sits at an even slot;
    /// both endpoints survive.
    fn thin(&mut self) {
        let mut i = 0;
        self.snapshots.retain(|_| {
            let keep = i % 2 == 0;
            i += 1;
            keep
        });
        self.stride *= 2;
    }

    fn h4_time_integral(&self) -> f64 {
        let mut acc = 0.0;
        for pair in self.snapshots.windows(2) {
            let dt = pair[1].t - pair[0].t;
            acc += dt * 0.5 * (pair[0].h4 * pair[0].h4 + pair[1].h4 * pair[1].h4);
        }
        acc
    }

    fn split_snapshots(&mut self) -> (Vec<f64>, Vec<Field>) {
        let mut times = vec![];
        let mut fields = vec![];
        for s in self.snapshots.drain(..) {
            times.push(s.t);
            fields.push(s.field);
        }
        (times, fields)
    }
}

struct StepOutcome {
    u: Field,
    data: ConvData,
    energy: Option<EnergyReport>,
    min_dt: f64,
}

struct Engine {
    scheme: Scheme,
    /// (1+λ)² per mode, the implicit multiplier.
    stiff: Vec<f64>,
    /// rhs spectrum of the previously accepted step together with the dt it
    /// was taken at; AB2 falls back to a one-step bootstrap on any mismatch.
    prev_rhs_hat: Option<(f64, Vec<f64>)>,
}

impl Engine {
    fn new(ops: &ModelOps, scheme: Scheme, dt: f64) -> Result<Engine> {
        let stiff: Vec<f64> = ops
            .domain()
            .laplacian_symbol()
            .iter()
            .map(|&lam| {
                let a = 1.0 + lam;
                a * a
            })
            .collect();
        if scheme == Scheme::Rk4Explicit {
            let worst = stiff.iter().cloned().fold(0.0f64, f64::max);
            let stiffness = dt * worst;
            if stiffness > RK4_STIFFNESS_BOUND {
                return Err(Error::ExplicitUnstable {
                    stiffness,
                    bound: RK4_STIFFNESS_BOUND,
                });
            }
        }
        Ok(Engine {
            scheme,
            stiff,
            prev_rhs_hat: None,
        })
    }

    /// One candidate step; returns the new field and the rhs spectrum to be
    /// recorded if the step is accepted.
    fn candidate_with(
        &mut self,
        ops: &ModelOps,
        u: &Field,
        data: &ConvData,
        dt: f64,
    ) -> Result<(Field, Option<Vec<f64>>)> {
        let domain = ops.domain();
        match self.scheme {
            Scheme::Imex1 => {
                let f = ops.rhs_with(u, data)?;
                let u_hat = domain.to_spectral(u)?;
                let f_hat = domain.to_spectral(&f)?;
                let mut out = u_hat;
                for ((c, &fk), &m) in out
                    .coeffs_mut()
                    .iter_mut()
                    .zip(f_hat.coeffs())
                    .zip(&self.stiff)
                {
                    *c = (*c + dt * fk) / (1.0 + dt * m);
                }
                Ok((domain.from_spectral(&out)?, None))
            }
            Scheme::Imex2 => {
                let f = ops.rhs_with(u, data)?;
                let u_hat = domain.to_spectral(u)?;
                let f_hat = domain.to_spectral(&f)?;
                let f_coeffs = f_hat.coeffs().to_vec();
                let prev = match &self.prev_rhs_hat {
                    Some((pdt, prev)) if *pdt == dt => prev.as_slice(),
                    _ => f_coeffs.as_slice(),
                };
                let mut out = u_hat;
                for (k, (c, &m)) in out.coeffs_mut().iter_mut().zip(&self.stiff).enumerate() {
                    let half = 0.5 * dt * m;
                    let explicit = dt * (1.5 * f_coeffs[k] - 0.5 * prev[k]);
                    *c = (*c * (1.0 - half) + explicit) / (1.0 + half);
                }
                Ok((domain.from_spectral(&out)?, Some(f_coeffs)))
            }
            Scheme::Rk4Explicit => {
                let g = |v: &Field, d: Option<&ConvData>| -> Result<Field> {
                    let owned;
                    let dref = match d {
                        Some(d) => d,
                        None => {
                            owned = ops.conv_data(v)?;
                            &owned
                        }
                    };
                    let mut f = ops.rhs_with(v, dref)?;
                    let stiff_part = domain.apply_biharmonic_op(v)?;
                    for (a, &b) in f.values_mut().iter_mut().zip(stiff_part.values()) {
                        *a -= b;
                    }
                    Ok(f)
                };
                let k1 = g(u, Some(data))?;
                let k2 = g(&axpy(u, 0.5 * dt, &k1), None)?;
                let k3 = g(&axpy(u, 0.5 * dt, &k2), None)?;
                let k4 = g(&axpy(u, dt, &k3), None)?;
                let mut out = u.clone();
                for ((((a, &b1), &b2), &b3), &b4) in out
                    .values_mut()
                    .iter_mut()
                    .zip(k1.values())
                    .zip(k2.values())
                    .zip(k3.values())
                    .zip(k4.values())
                {
                    *a += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
                }
                Ok((out, None))
            }
        }
    }

    fn accept(&mut self, dt: f64, rhs_hat: Option<Vec<f64>>) {
        if let Some(hat) = rhs_hat {
            self.prev_rhs_hat = Some((dt, hat));
        }
    }

    /// Take one base step of size dt from u, recursively halving while the
    /// guard rejects. Returns the end state with its convolution data (and
    /// its energy when the guard computed one).
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &mut self,
        ops: &ModelOps,
        u: &Field,
        data: &ConvData,
        report: EnergyReport,
        t0: f64,
        dt: f64,
        guard: bool,
        depth: u32,
        step: usize,
    ) -> Result<StepOutcome> {
        let (next, rhs_hat) = self.candidate_with(ops, u, data, dt)?;
        let finite = next.is_finite();

        if !guard {
            if !finite {
                return Err(Error::NonFinite {
                    step,
                    time: t0 + dt,
                });
            }
            self.accept(dt, rhs_hat);
            let next_data = ops.conv_data(&next)?;
            return Ok(StepOutcome {
                u: next,
                data: next_data,
                energy: None,
                min_dt: dt,
            });
        }

        let mut reject_nonfinite = !finite;
        if finite {
            let next_data = ops.conv_data(&next)?;
            let next_report = ops.energy_with(&next, t0 + dt, &next_data)?;
            let tol = GUARD_TOLERANCE * (1.0 + report.total.abs());
            if next_report.total <= report.total + tol {
                self.accept(dt, rhs_hat);
                return Ok(StepOutcome {
                    u: next,
                    data: next_data,
                    energy: Some(next_report),
                    min_dt: dt,
                });
            }
            reject_nonfinite = !next_report.total.is_finite();
        }

        if depth >= GUARD_MAX_LEVELS {
            return Err(if reject_nonfinite {
                Error::NonFinite {
                    step,
                    time: t0 + dt,
                }
            } else {
                Error::Stalled {
                    step,
                    time: t0 + dt,
                    levels: depth,
                }
            });
        }

        let half = 0.5 * dt;
        let first = self.advance(ops, u, data, report, t0, half, guard, depth + 1, step)?;
        let first_report = first
            .energy
            .expect("guarded sub-steps always carry energy");
        let second = self.advance(
            ops,
            &first.u,
            &first.data,
            first_report,
            t0 + half,
            half,
            guard,
            depth + 1,
            step,
        )?;
        Ok(StepOutcome {
            u: second.u,
            data: second.data,
            energy: second.energy,
            min_dt: first.min_dt.min(second.min_dt),
        })
    }
}

fn axpy(u: &Field, a: f64, v: &Field) -> Field {
    let mut out = u.clone();
    for (x, &y) in out.values_mut().iter_mut().zip(v.values()) {
        *x += a * y;
    }
    out
}
