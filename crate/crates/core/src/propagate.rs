//! Time evolution: exact free propagator, sourced and semilinear Strang
//! splitting, linearized evolution and time-reversed runs.
//!
//! In Hamiltonian form the equation `γ^μ∂_μφ = Φ` reads
//! `∂_tφ = −γ⁰γ^i∂_iφ + γ⁰Φ`. The free part is solved exactly per Fourier
//! mode by `U(t,k) = cos(|k|t) I − i sin(|k|t)/|k| · k_iγ⁰γ^i`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{apply_alpha, apply_gamma0, null_form, NullFormCoeffs, Spinor, C64};
use crate::grid::{self, from_fourier, gradient, to_fourier, Grid, SpinorField};
use crate::{Error, Result};

/// Direction of time for a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(&self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Right-hand side selector for [`evolve`].
#[derive(Clone, Debug, Default)]
pub enum Nonlinearity {
    #[default]
    None,
    /// `Dφ = N(φ, φ)`.
    NullForm(NullFormCoeffs),
    /// `Dψ = N(φ, ψ) + N(ψ, φ)` around the background run `φ`.
    Linearized(Arc<RunHandle>),
}

/// Step control for [`evolve`].
#[derive(Clone, Debug)]
pub struct EvolveConfig {
    /// Positive step size; the sign comes from `direction`.
    pub dt: f64,
    /// Final time magnitude, `|t_end − t_start|`.
    pub t_final: f64,
    /// Keep every `snapshot_every`-th step (the first and last are always kept).
    pub snapshot_every: usize,
    pub direction: Direction,
    pub nonlinearity: Nonlinearity,
    /// Halt when `max|φ|` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl EvolveConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        EvolveConfig {
            dt,
            t_final,
            snapshot_every: 1,
            direction: Direction::Forward,
            nonlinearity: Nonlinearity::None,
            blowup_factor: 1e6,
        }
    }

    pub fn with_snapshot_every(mut self, k: usize) -> Self {
        self.snapshot_every = k;
        self
    }

    pub fn with_direction(mut self, d: Direction) -> Self {
        self.direction = d;
        self
    }

    pub fn with_nonlinearity(mut self, n: Nonlinearity) -> Self {
        self.nonlinearity = n;
        self
    }

    /// Number of steps; `t_final` is rounded to the nearest multiple of `dt`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::InvalidConfig(format!("t_final = {} must be non-negative", self.t_final)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::InvalidConfig("snapshot cadence must be at least 1".into()));
        }
        Ok(())
    }
}

/// Time-dependent inhomogeneity `Φ(t, x)`.
pub trait Source: Send + Sync {
    fn eval(&self, t: f64, grid: Grid) -> SpinorField;
}

/// `Φ(t, x) = envelope(t) · profile(x)` with a smooth envelope supported on
/// `[t_on, t_off]`.
#[derive(Clone, Debug)]
pub struct PulsedSource {
    pub profile: grid::DataSpec,
    pub t_on: f64,
    pub t_off: f64,
}

impl PulsedSource {
    pub fn envelope(&self, t: f64) -> f64 {
        if t <= self.t_on || t >= self.t_off {
            return 0.0;
        }
        let u = (t - self.t_on) / (self.t_off - self.t_on);
        let s = (std::f64::consts::PI * u).sin();
        s * s * s * s
    }
}

impl Source for PulsedSource {
    fn eval(&self, t: f64, grid: Grid) -> SpinorField {
        let e = self.envelope(t);
        let l = grid.length();
        let mut f = SpinorField::from_fn(grid, t, |x| if e == 0.0 { Spinor::ZERO } else { self.profile.eval(x, l) * e });
        f.time = t;
        f
    }
}

/// A completed run: time-ordered snapshots plus what is needed to
/// reconstruct `∂_tφ`.
#[derive(Clone)]
pub struct RunHandle {
    pub snapshots: Vec<SpinorField>,
    pub config: EvolveConfig,
    /// First snapshot time at which the containment flag fails (`∞` if never).
    pub containment_time: f64,
    pub source: Option<Arc<dyn Source>>,
    /// Radius of the initial data support at relative level `1e−6`.
    pub data_radius: f64,
}

impl std::fmt::Debug for RunHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunHandle")
            .field("snapshots", &self.snapshots.len())
            .field("t_range", &self.t_range())
            .field("containment_time", &self.containment_time)
            .finish()
    }
}

/// Relative amplitude defining the effective data radius used by the
/// periodic-image horizon.
pub const SUPPORT_LEVEL: f64 = 1e-6;

impl RunHandle {
    pub fn grid(&self) -> Grid {
        self.snapshots[0].grid
    }

    pub fn initial(&self) -> &SpinorField {
        &self.snapshots[0]
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// `(min t, max t)` over the snapshots.
    pub fn t_range(&self) -> (f64, f64) {
        let a = self.snapshots.first().map_or(0.0, |s| s.time);
        let b = self.snapshots.last().map_or(0.0, |s| s.time);
        (a.min(b), a.max(b))
    }

    /// Latest `|t|` at which every node within radius `r` is free of
    /// periodic images: `L − r − R_data`.
    pub fn image_horizon(&self, r: f64) -> f64 {
        self.grid().length() - r - self.data_radius
    }

    /// Latest `|t|` at which the whole box is free of wrapped signal.
    pub fn box_horizon(&self) -> f64 {
        0.5 * self.grid().length() - self.data_radius
    }

    pub fn coeffs(&self) -> Option<NullFormCoeffs> {
        match &self.config.nonlinearity {
            Nonlinearity::NullForm(c) => Some(*c),
            _ => None,
        }
    }

    /// Index of the snapshot at time `t` (within `1e−9`), if any.
    pub fn snapshot_at(&self, t: f64) -> Option<usize> {
        self.snapshots.iter().position(|s| (s.time - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    /// The field at `t`. Exact for snapshot times and for free runs
    /// (propagated from the nearest snapshot), cubic-in-time otherwise.
    pub fn field_at(&self, t: f64) -> Result<SpinorField> {
        let (lo, hi) = self.t_range();
        if t < lo - 1e-9 || t > hi + 1e-9 {
            return Err(Error::TimeOutOfRange { t, lo, hi });
        }
        if let Some(i) = self.snapshot_at(t) {
            return Ok(self.snapshots[i].clone());
        }
        let nearest = self
            .snapshots
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .expect("non-empty run");
        if self.source.is_none() && matches!(self.config.nonlinearity, Nonlinearity::None) {
            return Ok(free_step(nearest, t - nearest.time));
        }
        time_interpolate(&self.snapshots, t)
    }
}

/// Cubic Lagrange interpolation in time over a time-ordered snapshot list.
pub fn time_interpolate(snaps: &[SpinorField], t: f64) -> Result<SpinorField> {
    if snaps.len() < 4 {
        return Err(Error::Snapshots(format!("{} snapshots, need 4 for cubic interpolation", snaps.len())));
    }
    let ascending = snaps[snaps.len() - 1].time > snaps[0].time;
    let key = |s: &SpinorField| if ascending { s.time } else { -s.time };
    let tk = if ascending { t } else { -t };
    let j = snaps.partition_point(|s| key(s) <= tk).clamp(2, snaps.len() - 2);
    let idx = [j - 2, j - 1, j, j + 1];
    let ts: Vec<f64> = idx.iter().map(|&i| snaps[i].time).collect();
    let mut out = SpinorField::zeros(snaps[0].grid, t);
    for (a, &i) in idx.iter().enumerate() {
        let mut w = 1.0;
        for (b, tb) in ts.iter().enumerate() {
            if b != a {
                w *= (t - tb) / (ts[a] - tb);
            }
        }
        out.axpy(C64::new(w, 0.0), &snaps[i]);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Free propagator

/// `U(t,k)ψ̂`.
#[inline]
pub fn free_multiplier(k: [f64; 3], t: f64, s: &Spinor) -> Spinor {
    let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    if kn == 0.0 {
        return *s;
    }
    let c = (kn * t).cos();
    let sn = (kn * t).sin() / kn;
    *s * c + apply_alpha(k, s) * C64::new(0.0, -sn)
}

/// Applies `U(t)` in place to Fourier coefficients laid out like a field.
pub fn propagate_fourier(grid: Grid, hat: &mut [C64], t: f64) {
    let m = grid.len();
    let (c0, rest) = hat.split_at_mut(m);
    let (c1, rest) = rest.split_at_mut(m);
    let (c2, c3) = rest.split_at_mut(m);
    c0.par_iter_mut()
        .zip(c1.par_iter_mut())
        .zip(c2.par_iter_mut())
        .zip(c3.par_iter_mut())
        .enumerate()
        .for_each(|(i, (((a, b), c), d))| {
            let s = free_multiplier(grid.wavevector(i), t, &Spinor([*a, *b, *c, *d]));
            *a = s.0[0];
            *b = s.0[1];
            *c = s.0[2];
            *d = s.0[3];
        });
}

/// Exact free evolution by `dt` (any sign).
pub fn free_step(field: &SpinorField, dt: f64) -> SpinorField {
    if dt == 0.0 {
        return field.clone();
    }
    let mut hat = to_fourier(field);
    propagate_fourier(field.grid, &mut hat, dt);
    from_fourier(field.grid, field.time + dt, hat)
}

/// `−γ⁰γ^i∂_iφ`, the free part of `∂_tφ`.
pub fn transport(field: &SpinorField) -> SpinorField {
    let grad = gradient(field);
    transport_from_gradient(field, &grad)
}

pub(crate) fn transport_from_gradient(field: &SpinorField, grad: &[SpinorField; 3]) -> SpinorField {
    let grid = field.grid;
    let vals: Vec<Spinor> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = Spinor::ZERO;
            for a in 0..3 {
                let mut k = [0.0; 3];
                k[a] = 1.0;
                acc -= apply_alpha(k, &grad[a].get(i));
            }
            acc
        })
        .collect();
    SpinorField::from_spinors(grid, field.time, &vals)
}

/// `γ⁰N(φ, φ)` at every node.
pub fn nonlinear_rhs(c: &NullFormCoeffs, field: &SpinorField) -> SpinorField {
    let mut out = field.clone();
    out.map_points(|_, s| apply_gamma0(&null_form(c, &s, &s)));
    out
}

/// `γ⁰(N(φ, ψ) + N(ψ, φ))` at every node.
pub fn linearized_rhs(c: &NullFormCoeffs, bg: &SpinorField, psi: &SpinorField) -> SpinorField {
    bg.zip_map(psi, |_, p, q| apply_gamma0(&(null_form(c, &p, &q) + null_form(c, &q, &p))))
}

// ---------------------------------------------------------------------------
// Evolution

/// Per-step callback; receives every step's field, including `t = 0`.
pub type Observer<'a> = dyn FnMut(&SpinorField) -> Result<()> + 'a;

/// Evolves `phi0` per `cfg`, storing snapshots.
pub fn evolve(phi0: &SpinorField, cfg: &EvolveConfig, source: Option<Arc<dyn Source>>) -> Result<RunHandle> {
    evolve_observed(phi0, cfg, source, &mut |_| Ok(()))
}

/// As [`evolve`], additionally calling `observer` after every step.
pub fn evolve_observed(
    phi0: &SpinorField,
    cfg: &EvolveConfig,
    source: Option<Arc<dyn Source>>,
    observer: &mut Observer<'_>,
) -> Result<RunHandle> {
    cfg.validate()?;
    let grid = phi0.grid;
    let steps = cfg.steps();
    let dt = cfg.dt * cfg.direction.sign();
    let init_max = phi0.max_abs();

    // Background state for linearized runs.
    let (lin_coeffs, mut bg) = match &cfg.nonlinearity {
        Nonlinearity::Linearized(h) => {
            let c = h.coeffs().ok_or_else(|| {
                Error::InvalidConfig("linearized background must be a null-form run".into())
            })?;
            if (h.config.dt - cfg.dt).abs() > 1e-15 || h.config.direction != cfg.direction {
                return Err(Error::InvalidConfig("linearized run must share the background step".into()));
            }
            if h.initial().grid != grid {
                return Err(Error::GridMismatch("background grid differs".into()));
            }
            (Some(c), Some(h.initial().clone()))
        }
        _ => (None, None),
    };
    let pure_free = source.is_none() && matches!(cfg.nonlinearity, Nonlinearity::None);

    let mut phi = phi0.clone();
    let mut snaps = vec![phi.clone()];
    let mut containment_time = if phi.contained() { f64::INFINITY } else { phi.time };
    observer(&phi)?;

    for step in 1..=steps {
        let t0 = phi.time;
        if pure_free {
            phi = free_step(&phi, dt);
        } else {
            let half = 0.5 * dt;
            phi = free_step(&phi, half);
            if let Some(b) = bg.as_mut() {
                *b = free_step(b, half);
            }
            let tm = t0 + half;
            match (&cfg.nonlinearity, lin_coeffs) {
                (Nonlinearity::NullForm(c), _) => {
                    let k1 = nonlinear_rhs(c, &phi);
                    let mut mid = phi.clone();
                    mid.axpy(C64::new(half, 0.0), &k1);
                    let k2 = nonlinear_rhs(c, &mid);
                    phi.axpy(C64::new(dt, 0.0), &k2);
                }
                (Nonlinearity::Linearized(_), Some(c)) => {
                    let b = bg.as_mut().expect("background present");
                    let g1 = nonlinear_rhs(&c, b);
                    let l1 = linearized_rhs(&c, b, &phi);
                    let mut bmid = b.clone();
                    bmid.axpy(C64::new(half, 0.0), &g1);
                    let mut pmid = phi.clone();
                    pmid.axpy(C64::new(half, 0.0), &l1);
                    let g2 = nonlinear_rhs(&c, &bmid);
                    let l2 = linearized_rhs(&c, &bmid, &pmid);
                    b.axpy(C64::new(dt, 0.0), &g2);
                    phi.axpy(C64::new(dt, 0.0), &l2);
                }
                _ => {}
            }
            if let Some(src) = &source {
                let f = src.eval(tm, grid);
                let mut g0f = f;
                g0f.map_points(|_, s| apply_gamma0(&s));
                phi.axpy(C64::new(dt, 0.0), &g0f);
            }
            phi = free_step(&phi, half);
            if let Some(b) = bg.as_mut() {
                *b = free_step(b, half);
            }
        }
        phi.time = t0 + dt;
        if let Some(b) = bg.as_mut() {
            b.time = phi.time;
        }

        let max = phi.max_abs();
        if !max.is_finite() {
            return Err(Error::NonFinite { t: phi.time });
        }
        if init_max > 0.0 && max > cfg.blowup_factor * init_max {
            return Err(Error::BlowUp { t: phi.time, max });
        }
        observer(&phi)?;
        if step % cfg.snapshot_every == 0 || step == steps {
            if containment_time.is_infinite() && !phi.contained() {
                containment_time = phi.time;
            }
            snaps.push(phi.clone());
        }
    }

    Ok(RunHandle {
        snapshots: snaps,
        config: cfg.clone(),
        containment_time,
        source,
        data_radius: phi0.support_radius(SUPPORT_LEVEL),
    })
}

/// Right side of the Hamiltonian form at the field's own time:
/// `−γ⁰γ^i∂_iφ + γ⁰Φ`, with `Φ` the run's source and/or `N(φ,φ)`.
pub fn time_derivative_of(
    field: &SpinorField,
    coeffs: Option<&NullFormCoeffs>,
    source: Option<&Arc<dyn Source>>,
) -> SpinorField {
    let mut out = transport(field);
    if let Some(c) = coeffs {
        out.axpy(C64::new(1.0, 0.0), &nonlinear_rhs(c, field));
    }
    if let Some(src) = source {
        let mut f = src.eval(field.time, field.grid);
        f.map_points(|_, s| apply_gamma0(&s));
        out.axpy(C64::new(1.0, 0.0), &f);
    }
    out
}

/// `∂_tφ(t)` evaluated from the equation.
pub fn reconstruct_time_derivative(run: &RunHandle, t: f64) -> Result<SpinorField> {
    if matches!(run.config.nonlinearity, Nonlinearity::Linearized(_)) {
        return Err(Error::Unsupported("time derivative of a linearized run".into()));
    }
    let f = run.field_at(t)?;
    Ok(time_derivative_of(&f, run.coeffs().as_ref(), run.source.as_ref()))
}
