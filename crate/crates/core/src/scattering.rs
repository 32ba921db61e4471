//! Radiation-field maps as operators: the linear forward map with its exact
//! discrete adjoint and conjugate-gradient inverse, the nonlinear forward
//! map by two independent pipelines, its linearization, and Picard
//! inversion.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{apply_gamma0, apply_projector, NullFormCoeffs, Spinor, C64};
use crate::grid::{charge, from_fourier, stencil, to_fourier, Grid, SpinorField, Stencil};
use crate::propagate::{evolve, evolve_observed, propagate_fourier, Direction as TimeDirection, EvolveConfig, Nonlinearity, RunHandle};
use crate::radiation::{duhamel_radiation, extract_free, NullGrid, RadiationField, RayExtractor};
use crate::symmetry::{apply_null_infinity, apply_spacetime_to_data, Kind, VectorFieldId};
use crate::{Error, Result};

/// One fixed discretization of the free map `φ₀ ↦ F⁺(φ₀, 0)`.
#[derive(Clone, Debug)]
pub struct LinearMapHandle {
    pub grid: Grid,
    pub null_grid: NullGrid,
    /// Extraction radii, ascending; the largest is `M`.
    pub radii: Vec<f64>,
    /// Radius of the ball that carries the unknowns of the inversions;
    /// defaults to `M`.
    pub support: f64,
    stencils: Arc<Vec<Stencil>>,
}

impl LinearMapHandle {
    pub fn new(grid: Grid, null_grid: NullGrid, radii: &[f64]) -> Result<Self> {
        let mut radii = radii.to_vec();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let m = *radii.last().ok_or_else(|| Error::InvalidConfig("no extraction radius".into()))?;
        if radii[0] <= 0.0 || m >= 0.5 * grid.length() {
            return Err(Error::InvalidConfig(format!("radii {radii:?} must lie in (0, L/2)")));
        }
        if m + null_grid.s_min < 0.5 * m - 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "window start {} violates M + s >= M/2 for M = {m}",
                null_grid.s_min
            )));
        }
        let stencils = (0..null_grid.sphere.len())
            .map(|node| {
                let w = null_grid.sphere.dir(node);
                stencil(&grid, [m * w[0], m * w[1], m * w[2]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearMapHandle { grid, null_grid, radii, support: m, stencils: Arc::new(stencils) })
    }

    pub fn with_support(mut self, radius: f64) -> Self {
        self.support = radius;
        self
    }

    /// Zeroes `f` outside the support ball.
    pub fn restrict(&self, f: &mut SpinorField) {
        let r2 = self.support * self.support;
        f.map_points(|x, v| if x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= r2 { v } else { Spinor::ZERO });
    }

    /// Extraction radius `M`.
    pub fn radius(&self) -> f64 {
        *self.radii.last().expect("validated")
    }

    /// Latest elapsed time a ray reaches.
    pub fn t_max(&self) -> f64 {
        self.radius() + self.null_grid.s_max
    }

    /// Image horizon for data of radius `r0`: `L − M − r0`, which must cover
    /// [`t_max`](Self::t_max).
    pub fn horizon(&self, r0: f64) -> f64 {
        self.grid.length() - self.radius() - r0
    }

    fn check_field(&self, f: &SpinorField) -> Result<()> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch("field grid differs from the map's grid".into()));
        }
        Ok(())
    }

    fn check_radiation(&self, f: &RadiationField) -> Result<()> {
        if f.grid != self.null_grid {
            return Err(Error::GridMismatch("radiation field lives on a different null grid".into()));
        }
        Ok(())
    }

    /// Whether `dt` divides every ray time, so step-grid extraction is exact.
    pub fn aligned(&self, dt: f64) -> bool {
        let ok = |x: f64| ((x / dt) - (x / dt).round()).abs() < 1e-9;
        self.radii.iter().all(|r| ok(r + self.null_grid.s_min)) && ok(self.null_grid.ds())
    }
}

/// `F⁺(φ₀, 0)` with per-node error estimates.
pub fn apply_forward(h: &LinearMapHandle, phi0: &SpinorField) -> Result<RadiationField> {
    h.check_field(phi0)?;
    extract_free(phi0, 0.0, &h.null_grid, &h.radii, TimeDirection::Forward)
}

/// Ray times `M + s_j` in increasing order.
fn ray_times(h: &LinearMapHandle) -> Vec<f64> {
    (0..h.null_grid.ns).map(|j| h.radius() + h.null_grid.s(j)).collect()
}

/// The value part of [`apply_forward`]: `M·P(ω)·φ(M + s, Mω)`.
pub fn forward_values(h: &LinearMapHandle, phi0: &SpinorField) -> Result<RadiationField> {
    h.check_field(phi0)?;
    let ng = &h.null_grid;
    let nodes = ng.sphere.len();
    let m = h.radius();
    let mut out = RadiationField::zeros(ng.clone(), m);
    let mut hat = to_fourier(phi0);
    let mut e_cur = 0.0;
    for (j, e) in ray_times(h).into_iter().enumerate() {
        if e < 0.0 {
            continue;
        }
        if e > e_cur {
            propagate_fourier(h.grid, &mut hat, e - e_cur);
            e_cur = e;
        }
        let field = from_fourier(h.grid, e, hat.clone());
        let vals: Vec<Spinor> = (0..nodes)
            .into_par_iter()
            .map(|node| {
                let w = ng.sphere.dir(node);
                apply_projector(w, &(h.stencils[node].apply(&field) * m))
            })
            .collect();
        out.data[j * nodes..(j + 1) * nodes].copy_from_slice(&vals);
    }
    Ok(out)
}

/// Exact adjoint of [`forward_values`] between `L²(ds dω)` (quadrature) and
/// `L²(dx)` (`h³` times the ℓ² product).
pub fn apply_adjoint(h: &LinearMapHandle, f: &RadiationField) -> Result<SpinorField> {
    h.check_radiation(f)?;
    let ng = &h.null_grid;
    let grid = h.grid;
    let nodes = ng.sphere.len();
    let m = h.radius();
    let times = ray_times(h);
    let mut acc: Option<Vec<C64>> = None;
    // Horner: acc ← U(−δ_j)(acc + F g_j) from the last time back to 0.
    for j in (0..ng.ns).rev() {
        let e = times[j];
        if e < 0.0 {
            continue;
        }
        let mut g = SpinorField::zeros(grid, e);
        for node in 0..nodes {
            let v = f.data[j * nodes + node];
            if v.max_abs() == 0.0 {
                continue;
            }
            let w = ng.sphere.dir(node);
            let q = ng.weight(j * nodes + node) * m;
            h.stencils[node].scatter(&(apply_projector(w, &v) * q), &mut g);
        }
        let gh = to_fourier(&g);
        let mut a = match acc.take() {
            Some(mut a) => {
                a.par_iter_mut().zip(&gh).for_each(|(x, y)| *x += *y);
                a
            }
            None => gh,
        };
        let prev = (0..j).rev().map(|k| times[k]).find(|t| *t >= 0.0).unwrap_or(0.0);
        let prev = if j == 0 { 0.0 } else { prev };
        if e > prev {
            propagate_fourier(grid, &mut a, -(e - prev));
        }
        acc = Some(a);
    }
    let mut out = match acc {
        Some(a) => from_fourier(grid, 0.0, a),
        None => SpinorField::zeros(grid, 0.0),
    };
    out.scale(C64::new(1.0 / grid.cell_volume(), 0.0));
    Ok(out)
}

/// Conjugate-gradient settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CgConfig {
    pub max_iterations: usize,
    /// Target `‖Ax − ψ‖ / ‖ψ‖`.
    pub tolerance: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig { max_iterations: 12, tolerance: 1e-3 }
    }
}

/// Result of an iterative inversion.
#[derive(Clone, Debug)]
pub struct InversionReport {
    pub solution: SpinorField,
    /// Relative residual after each iteration (index 0: initial guess).
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl InversionReport {
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,residual\n");
        for (i, r) in self.residuals.iter().enumerate() {
            let _ = writeln!(out, "{i},{r:.17e}");
        }
        out
    }
}

fn field_norm_sqr(f: &SpinorField) -> f64 {
    charge(f)
}

/// Solves `A*A x = A*ψ` by conjugate gradients from `x₀ = A*ψ`, with `x`
/// restricted to the support ball of the handle. Fields outside the
/// extraction sphere are invisible to `A` and would otherwise pick up a
/// spurious minimum-norm component there.
pub fn invert_linear(h: &LinearMapHandle, psi: &RadiationField, cg: &CgConfig) -> Result<InversionReport> {
    h.check_radiation(psi)?;
    if !(cg.tolerance > 0.0) {
        return Err(Error::InvalidConfig("CG tolerance must be positive".into()));
    }
    let pn = psi.norm();
    let adjoint = |f: &RadiationField| -> Result<SpinorField> {
        let mut g = apply_adjoint(h, f)?;
        h.restrict(&mut g);
        Ok(g)
    };
    let mut x = adjoint(psi)?;
    if pn == 0.0 {
        return Ok(InversionReport { solution: x, residuals: vec![0.0], converged: true });
    }
    let mut r = psi.clone();
    r.axpy(C64::new(-1.0, 0.0), &forward_values(h, &x)?);
    let mut residuals = vec![r.norm() / pn];
    if residuals[0] <= cg.tolerance {
        return Ok(InversionReport { solution: x, residuals, converged: true });
    }
    let mut z = adjoint(&r)?;
    let mut p = z.clone();
    let mut zz = field_norm_sqr(&z);
    for _ in 0..cg.max_iterations {
        let w = forward_values(h, &p)?;
        let ww = w.norm_sqr();
        if ww == 0.0 || zz == 0.0 {
            break;
        }
        let alpha = zz / ww;
        x.axpy(C64::new(alpha, 0.0), &p);
        r.axpy(C64::new(-alpha, 0.0), &w);
        let res = r.norm() / pn;
        residuals.push(res);
        if res <= cg.tolerance {
            return Ok(InversionReport { solution: x, residuals, converged: true });
        }
        z = adjoint(&r)?;
        let zz_new = field_norm_sqr(&z);
        let beta = zz_new / zz;
        zz = zz_new;
        let mut pn_ = z.clone();
        pn_.axpy(C64::new(beta, 0.0), &p);
        p = pn_;
    }
    Ok(InversionReport { solution: x, residuals, converged: false })
}

/// Settings of the nonlinear maps.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScatterConfig {
    pub coeffs: NullFormCoeffs,
    /// Cap on `‖φ₀‖_{L²}` for the nonlinear maps.
    pub smallness: f64,
    /// Time step; must divide `Δs` and `M + s_min`.
    pub dt: f64,
    /// Source cadence of the Duhamel pipeline, in steps.
    pub source_every: usize,
    pub picard_max_iterations: usize,
    pub picard_tolerance: f64,
    pub cg: CgConfig,
}

impl Default for ScatterConfig {
    fn default() -> Self {
        ScatterConfig {
            coeffs: NullFormCoeffs::new(
                Spinor::new(C64::new(1.0, 0.0), C64::new(0.0, 0.5), C64::new(-0.3, 0.0), C64::new(0.2, 0.2)),
                Spinor::new(C64::new(0.0, 0.4), C64::new(0.7, 0.0), C64::new(0.1, -0.1), C64::new(-0.6, 0.0)),
            ),
            smallness: 1.0,
            dt: 0.1,
            source_every: 8,
            picard_max_iterations: 8,
            picard_tolerance: 1e-3,
            cg: CgConfig::default(),
        }
    }
}

impl ScatterConfig {
    pub fn validate(&self, h: &LinearMapHandle) -> Result<()> {
        if !(self.smallness > 0.0 && self.picard_tolerance > 0.0 && self.cg.tolerance > 0.0 && self.dt > 0.0) {
            return Err(Error::InvalidConfig("tolerances, step and smallness cap must be positive".into()));
        }
        if self.source_every == 0 {
            return Err(Error::InvalidConfig("source cadence must be at least one step".into()));
        }
        if !h.aligned(self.dt) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} does not divide the ray times of the null grid",
                self.dt
            )));
        }
        Ok(())
    }

    fn evolve_config(&self, h: &LinearMapHandle) -> EvolveConfig {
        EvolveConfig::new(self.dt, h.t_max())
    }

    fn check_small(&self, phi0: &SpinorField) -> Result<()> {
        let n = charge(phi0).sqrt();
        if n > self.smallness {
            return Err(Error::InvalidConfig(format!("‖φ₀‖ = {n} exceeds the smallness cap {}", self.smallness)));
        }
        Ok(())
    }
}

/// Both evaluations of the nonlinear map.
#[derive(Clone, Debug)]
pub struct NonlinearForward {
    /// Direct extraction from the semilinear run.
    pub direct: RadiationField,
    /// Free part plus Duhamel integral of the source slices `γ⁰N(φ,φ)(τ)`.
    pub duhamel: RadiationField,
    /// `‖direct − duhamel‖`.
    pub discrepancy: f64,
    /// `‖err_direct‖ + ‖err_duhamel‖`.
    pub combined_error: f64,
}

impl NonlinearForward {
    pub fn consistent(&self) -> bool {
        self.discrepancy <= 3.0 * self.combined_error
    }
}

/// Semilinear run with streaming extraction; optionally keeps the source
/// snapshots every `source_every` steps.
fn semilinear_direct(
    cfg: &ScatterConfig,
    h: &LinearMapHandle,
    phi0: &SpinorField,
    keep: bool,
) -> Result<(RadiationField, Option<RunHandle>)> {
    let ecfg = cfg.evolve_config(h).with_nonlinearity(Nonlinearity::NullForm(cfg.coeffs));
    let ecfg = if keep { ecfg.with_snapshot_every(cfg.source_every) } else { ecfg.with_snapshot_every(usize::MAX) };
    let mut ex = RayExtractor::new(h.grid, &h.null_grid, &h.radii, &ecfg, 0.0, 0.0, true)?;
    let run = evolve_observed(phi0, &ecfg, None, &mut |phi| ex.observe(phi))?;
    Ok((ex.finish(), keep.then_some(run)))
}

/// Pipeline (a) only: the direct extraction from the semilinear run.
pub fn forward_nonlinear_direct(cfg: &ScatterConfig, h: &LinearMapHandle, phi0: &SpinorField) -> Result<RadiationField> {
    cfg.validate(h)?;
    h.check_field(phi0)?;
    cfg.check_small(phi0)?;
    Ok(semilinear_direct(cfg, h, phi0, false)?.0)
}

/// `F⁺(φ₀, N(φ,φ))` computed by (a) extraction from the semilinear run and
/// (b) the free field plus the Duhamel integral over source slices. The
/// source slices are extracted at the same radii with causal cutoff, so
/// both pipelines approximate the same finite-radius quantity.
pub fn forward_nonlinear(cfg: &ScatterConfig, h: &LinearMapHandle, phi0: &SpinorField) -> Result<NonlinearForward> {
    cfg.validate(h)?;
    h.check_field(phi0)?;
    cfg.check_small(phi0)?;
    let (direct, run) = semilinear_direct(cfg, h, phi0, true)?;
    let run = run.expect("snapshots kept");
    let free = extract_free(phi0, 0.0, &h.null_grid, &h.radii, TimeDirection::Forward)?;
    let t_max = h.t_max();
    let mut sources = Vec::new();
    for snap in run.snapshots.iter().filter(|s| s.time <= t_max + 1e-9) {
        let tau = snap.time;
        let mut data = snap.clone();
        data.map_points(|_, s| apply_gamma0(&crate::clifford::null_form(&cfg.coeffs, &s, &s)));
        data.time = 0.0;
        let local = extract_free(&data, 0.0, &h.null_grid.shifted(-tau), &h.radii, TimeDirection::Forward)?;
        sources.push((tau, local));
    }
    let duhamel = duhamel_radiation(&free, &sources)?;
    let discrepancy = {
        let mut d = direct.clone();
        d.axpy(C64::new(-1.0, 0.0), &duhamel);
        d.norm()
    };
    let combined_error = direct.error_norm() + duhamel.error_norm();
    Ok(NonlinearForward { direct, duhamel, discrepancy, combined_error })
}

/// Semilinear background run for [`linearized_forward`].
pub fn background_run(cfg: &ScatterConfig, h: &LinearMapHandle, phi0: &SpinorField) -> Result<Arc<RunHandle>> {
    cfg.validate(h)?;
    h.check_field(phi0)?;
    cfg.check_small(phi0)?;
    let ecfg = cfg
        .evolve_config(h)
        .with_nonlinearity(Nonlinearity::NullForm(cfg.coeffs))
        .with_snapshot_every(usize::MAX);
    Ok(Arc::new(evolve(phi0, &ecfg, None)?))
}

/// `dF⁺(φ₀)ψ₀`: the radiation field of the solution of
/// `Dψ = N(φ,ψ) + N(ψ,φ)` around the background `φ`.
pub fn linearized_forward(
    cfg: &ScatterConfig,
    h: &LinearMapHandle,
    background: &Arc<RunHandle>,
    psi0: &SpinorField,
) -> Result<RadiationField> {
    cfg.validate(h)?;
    h.check_field(psi0)?;
    if background.coeffs().is_none() {
        return Err(Error::InvalidConfig("background must be a null-form run".into()));
    }
    let ecfg = cfg
        .evolve_config(h)
        .with_nonlinearity(Nonlinearity::Linearized(background.clone()))
        .with_snapshot_every(usize::MAX);
    let mut ex = RayExtractor::new(h.grid, &h.null_grid, &h.radii, &ecfg, 0.0, 0.0, true)?;
    evolve_observed(psi0, &ecfg, None, &mut |phi| ex.observe(phi))?;
    Ok(ex.finish())
}

/// Picard iteration `φ⁽ⁿ⁺¹⁾ = φ⁽ⁿ⁾ − A⁻¹(F_nl(φ⁽ⁿ⁾) − ψ)` with `A⁻¹` from
/// [`invert_linear`]. Residuals are `‖F_nl(φ⁽ⁿ⁾) − ψ‖ / ‖ψ‖`.
pub fn invert_nonlinear(cfg: &ScatterConfig, h: &LinearMapHandle, target: &RadiationField) -> Result<InversionReport> {
    cfg.validate(h)?;
    h.check_radiation(target)?;
    let tn = target.norm();
    let mut x = SpinorField::zeros(h.grid, 0.0);
    if tn == 0.0 {
        return Ok(InversionReport { solution: x, residuals: vec![0.0], converged: true });
    }
    if tn > cfg.smallness {
        return Err(Error::InvalidConfig(format!("‖ψ‖ = {tn} exceeds the smallness cap {}", cfg.smallness)));
    }
    let mut residuals = Vec::new();
    let mut misfit = target.clone();
    misfit.scale(C64::new(-1.0, 0.0));
    for it in 0..=cfg.picard_max_iterations {
        let res = misfit.norm() / tn;
        residuals.push(res);
        if res <= cfg.picard_tolerance {
            return Ok(InversionReport { solution: x, residuals, converged: true });
        }
        if it == cfg.picard_max_iterations {
            break;
        }
        let step = invert_linear(h, &misfit, &cfg.cg)?;
        x.axpy(C64::new(-1.0, 0.0), &step.solution);
        let xn = charge(&x).sqrt();
        if xn > 2.0 * cfg.smallness {
            return Err(Error::Divergence(format!(
                "iterate norm {xn} exceeds twice the smallness cap after {} iterations",
                it + 1
            )));
        }
        let mut f = semilinear_direct(cfg, h, &x, false)?.0;
        f.axpy(C64::new(-1.0, 0.0), target);
        misfit = f;
    }
    Ok(InversionReport { solution: x, residuals, converged: false })
}

/// Null-infinity partner of a spacetime generator:
/// `∂_t ↔ ∂_s`, `∂_i ↔ −ω^i∂_s`, `Ω_{ij} − ½γ^iγ^j ↔ Ω̂_{ij} − ½γ^iγ^j`,
/// `Ω_{0i} − ½γ⁰γ^i ↔ −ω^i s∂_s − ω^i + ∂_{ω^i} − ½γ⁰γ^i`, `S ↔ s∂_s − I`.
pub fn apply_partner(f: &RadiationField, id: VectorFieldId) -> Result<RadiationField> {
    if !id.is_spacetime() {
        return Err(Error::WrongFamily(id));
    }
    let ng = &f.grid;
    let mut out = f.clone_zeroed();
    match id.kind {
        Kind::Translation(0) => out.data = f.d_s(),
        Kind::Translation(a @ 1..=3) => {
            let ds = f.d_s();
            for (i, v) in out.data.iter_mut().enumerate() {
                *v = -(ds[i] * ng.sphere.dir(ng.node_of(i))[a - 1]);
            }
        }
        Kind::Rotation(a, b) => {
            out = apply_null_infinity(f, VectorFieldId::null_infinity(Kind::Rotation(a, b)))?;
        }
        Kind::Boost(a) => {
            out = apply_null_infinity(f, VectorFieldId::null_infinity(Kind::Boost(a)))?;
            out.scale(C64::new(-1.0, 0.0));
        }
        Kind::Scaling => {
            for (i, v) in f.s_d_s().into_iter().enumerate() {
                out.data[i] = v - f.data[i];
            }
        }
        Kind::Translation(_) => return Err(Error::Unsupported(format!("no partner for {id}"))),
    }
    Ok(out)
}

/// `‖F(Γφ₀) − Γ̂F(φ₀)‖ / ‖F(φ₀)‖` for a spacetime generator `Γ`.
pub fn commutation_defect(h: &LinearMapHandle, phi0: &SpinorField, id: VectorFieldId) -> Result<f64> {
    let f = forward_values(h, phi0)?;
    let fn_ = f.norm();
    if fn_ == 0.0 {
        return Ok(0.0);
    }
    let g = apply_spacetime_to_data(phi0, None, id)?;
    let lhs = forward_values(h, &g)?;
    let rhs = apply_partner(&f, id)?;
    let mut d = lhs;
    d.axpy(C64::new(-1.0, 0.0), &rhs);
    Ok(d.norm() / fn_)
}
