//! Energy identities and estimates measured on runs: charge balance, cone
//! fluxes, the ghost-weight bound, the Klainerman–Sobolev ratio, decay
//! along outgoing rays and the small-data energy ladder.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{apply_gamma0, apply_projector, inner, null_form, NullFormCoeffs, Spinor, C64};
use crate::fit;
use crate::grid::{charge, par_sum, stencil, SpinorField};
use std::sync::Arc;

use crate::propagate::{evolve, evolve_observed, EvolveConfig, Nonlinearity, RunHandle, Source};
use crate::radiation::{gauss_legendre, Sphere};
use crate::symmetry::spacetime_energies;
use crate::{Error, Result};

/// Settings shared by the diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    /// Ghost exponent, `0 < μ < ½`.
    pub mu: f64,
    /// Apex time of the light cones (apex at `x = 0`).
    pub cone_apex: f64,
    /// Radial Gauss–Legendre nodes of the ball rule.
    pub radial_nodes: usize,
    /// Sphere of the ball rule.
    pub sphere_theta: usize,
    pub sphere_phi: usize,
    /// Gauss–Legendre nodes in time for bulk integrals.
    pub time_nodes: usize,
    /// Fraction of each ray discarded before decay fits.
    pub fit_skip: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            mu: 0.25,
            cone_apex: 0.0,
            radial_nodes: 32,
            sphere_theta: 16,
            sphere_phi: 32,
            time_nodes: 24,
            fit_skip: 0.2,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 0.5) {
            return Err(Error::InvalidConfig(format!("mu = {} must lie in (0, 1/2)", self.mu)));
        }
        if self.radial_nodes < 2 || self.time_nodes < 2 || !(0.0..1.0).contains(&self.fit_skip) {
            return Err(Error::InvalidConfig("diagnostics quadrature too coarse".into()));
        }
        Ok(())
    }

    fn sphere(&self) -> Result<Sphere> {
        Sphere::new(self.sphere_theta, self.sphere_phi)
    }
}

/// `Φ` for a run at one of its fields: the source and/or `N(φ,φ)`.
fn forcing(run: &RunHandle, field: &SpinorField) -> Result<Option<SpinorField>> {
    let coeffs = match &run.config.nonlinearity {
        Nonlinearity::None => None,
        Nonlinearity::NullForm(c) => Some(c),
        Nonlinearity::Linearized(_) => {
            return Err(Error::Unsupported("energy identities of linearized runs".into()));
        }
    };
    Ok(forcing_of(coeffs, run.source.as_ref(), field))
}

fn forcing_of(coeffs: Option<&NullFormCoeffs>, source: Option<&Arc<dyn Source>>, field: &SpinorField) -> Option<SpinorField> {
    let mut out = coeffs.map(|c| {
        let mut f = field.clone();
        f.map_points(|_, s| null_form(c, &s, &s));
        f
    });
    if let Some(src) = source {
        let s = src.eval(field.time, field.grid);
        match out.as_mut() {
            Some(o) => o.axpy(C64::new(1.0, 0.0), &s),
            None => out = Some(s),
        }
    }
    out
}

/// `∫ 2Re⟨γ⁰φ, Φ⟩ dx`.
fn pairing(field: &SpinorField, phi: &SpinorField) -> f64 {
    let m = field.grid.len();
    let s = par_sum(m, 0.0, |i| 2.0 * inner(&apply_gamma0(&field.get(i)), &phi.get(i)).re);
    s * field.grid.cell_volume()
}

/// `|ΔQ − ∫∫ 2Re⟨γ⁰φ,Φ⟩| / max(Q(t₁), ε)` over the whole run, the time
/// integral by the trapezoid rule over snapshots.
pub fn charge_balance_defect(run: &RunHandle) -> Result<f64> {
    let snaps = &run.snapshots;
    if snaps.len() < 2 {
        return Err(Error::Snapshots("charge balance needs two snapshots".into()));
    }
    let q0 = charge(&snaps[0]);
    let q1 = charge(&snaps[snaps.len() - 1]);
    let mut rhs = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for s in snaps {
        let p = match forcing(run, s)? {
            Some(f) => pairing(s, &f),
            None => 0.0,
        };
        if let Some((t0, p0)) = prev {
            rhs += 0.5 * (s.time - t0) * (p + p0);
        }
        prev = Some((s.time, p));
    }
    Ok(((q1 - q0) - rhs).abs() / q0.max(f64::EPSILON))
}

/// [`charge_balance_defect`] accumulated step by step during the
/// evolution, so only the end points are stored.
pub fn evolve_charge_balance(phi0: &SpinorField, cfg: &EvolveConfig, source: Option<Arc<dyn Source>>) -> Result<f64> {
    let coeffs = match &cfg.nonlinearity {
        Nonlinearity::None => None,
        Nonlinearity::NullForm(c) => Some(*c),
        Nonlinearity::Linearized(_) => {
            return Err(Error::Unsupported("energy identities of linearized runs".into()));
        }
    };
    let q0 = charge(phi0);
    let mut q1 = q0;
    let mut rhs = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let cfg = cfg.clone().with_snapshot_every(usize::MAX);
    evolve_observed(phi0, &cfg, source.clone(), &mut |f| {
        let p = forcing_of(coeffs.as_ref(), source.as_ref(), f).map_or(0.0, |g| pairing(f, &g));
        if let Some((t0, p0)) = prev {
            rhs += 0.5 * (f.time - t0) * (p + p0);
        }
        prev = Some((f.time, p));
        q1 = charge(f);
        Ok(())
    })?;
    Ok(((q1 - q0) - rhs).abs() / q0.max(f64::EPSILON))
}

/// Points and weights of a ball quadrature: Gauss–Legendre shells times
/// a sphere rule.
fn ball_rule(radius: f64, n_r: usize, sphere: &Sphere) -> Vec<([f64; 3], f64, [f64; 3])> {
    let (x, w) = gauss_legendre(n_r);
    let mut out = Vec::with_capacity(n_r * sphere.len());
    for (xi, wi) in x.iter().zip(&w) {
        let r = 0.5 * radius * (xi + 1.0);
        let wr = 0.5 * radius * wi * r * r;
        for node in 0..sphere.len() {
            let om = sphere.dir(node);
            out.push(([r * om[0], r * om[1], r * om[2]], wr * sphere.weight(node), om));
        }
    }
    out
}

fn ball_integral(radius: f64, cfg: &DiagnosticsConfig, sphere: &Sphere, f: impl Fn([f64; 3], [f64; 3]) -> Result<f64> + Sync) -> Result<f64> {
    if radius <= 0.0 {
        return Ok(0.0);
    }
    ball_rule(radius, cfg.radial_nodes, sphere)
        .par_iter()
        .map(|(p, w, om)| f(*p, *om).map(|v| v * w))
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.iter().sum())
}

/// Which light cone [`cone_flux_defect`] integrates over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cone {
    /// `t = t₀ + |x|`, region above the cone up to `t₁ > t₀`.
    Future,
    /// `t = t₀ − |x|`, region below the cone down to `t₁ < t₀`.
    Past,
}

/// The three terms of a cone identity and its normalized defect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeFlux {
    pub ball: f64,
    pub cone: f64,
    pub bulk: f64,
    pub defect: f64,
}

/// Cone identities with apex `(t₀, 0)`:
///
/// * future: `∫_{|x|≤t₁−t₀}|φ|²(t₁) − 2∫|P(−ω)φ|²(t₀+|x|, x) = bulk`;
/// * past: `2∫|P(ω)φ|²(t₀−|x|, x) − ∫_{|x|≤t₀−t₁}|φ|²(t₁) = bulk`;
///
/// with `bulk = ∫∫ 2Re⟨γ⁰φ,Φ⟩` over the enclosed region. The defect is
/// `|lhs − bulk| / (|ball| + |cone| + |bulk|)`.
pub fn cone_flux(run: &RunHandle, cone: Cone, t0: f64, t1: f64, cfg: &DiagnosticsConfig) -> Result<ConeFlux> {
    cfg.validate()?;
    let radius = match cone {
        Cone::Future => t1 - t0,
        Cone::Past => t0 - t1,
    };
    if radius <= 0.0 {
        return Err(Error::InvalidConfig(format!("cone from t0 = {t0} to t1 = {t1} is empty for {cone:?}")));
    }
    let (lo, hi) = run.t_range();
    if t0.min(t1) < lo - 1e-9 || t0.max(t1) > hi + 1e-9 {
        return Err(Error::TimeOutOfRange { t: if t0 < lo { t0 } else { t1 }, lo, hi });
    }
    let sphere = cfg.sphere()?;
    let grid = run.grid();

    let top = run.field_at(t1)?;
    let ball = ball_integral(radius, cfg, &sphere, |p, _| Ok(stencil(&grid, p)?.apply(&top).norm_sqr()))?;

    // Cone term: one field per radial shell, on the cone time of that shell.
    let (xr, wr) = gauss_legendre(cfg.radial_nodes);
    let sg = match cone {
        Cone::Future => -1.0,
        Cone::Past => 1.0,
    };
    let mut cone_term = 0.0;
    for (xi, wi) in xr.iter().zip(&wr) {
        let r = 0.5 * radius * (xi + 1.0);
        let t = match cone {
            Cone::Future => t0 + r,
            Cone::Past => t0 - r,
        };
        let field = run.field_at(t)?;
        let shell: f64 = (0..sphere.len())
            .into_par_iter()
            .map(|node| {
                let om = sphere.dir(node);
                let v = stencil(&grid, [r * om[0], r * om[1], r * om[2]])?.apply(&field);
                Ok(sphere.weight(node) * apply_projector([sg * om[0], sg * om[1], sg * om[2]], &v).norm_sqr())
            })
            .collect::<Result<Vec<f64>>>()?
            .iter()
            .sum();
        cone_term += 0.5 * radius * wi * r * r * shell;
    }
    cone_term *= 2.0;

    // Bulk: Gauss–Legendre in time over the slices of the region.
    let (xt, wt) = gauss_legendre(cfg.time_nodes);
    let mut bulk = 0.0;
    let (ta, tb) = (t0.min(t1), t0.max(t1));
    if run.source.is_some() || !matches!(run.config.nonlinearity, Nonlinearity::None) {
        for (xi, wi) in xt.iter().zip(&wt) {
            let t = ta + 0.5 * (tb - ta) * (xi + 1.0);
            let slice_r = match cone {
                Cone::Future => t - t0,
                Cone::Past => t0 - t,
            };
            let field = run.field_at(t)?;
            let Some(phi) = forcing(run, &field)? else { continue };
            let v = ball_integral(slice_r, cfg, &sphere, |p, _| {
                let st = stencil(&grid, p)?;
                Ok(2.0 * inner(&apply_gamma0(&st.apply(&field)), &st.apply(&phi)).re)
            })?;
            bulk += 0.5 * (tb - ta) * wi * v;
        }
    }

    let lhs = match cone {
        Cone::Future => ball - cone_term,
        Cone::Past => cone_term - ball,
    };
    let scale = ball.abs() + cone_term.abs() + bulk.abs();
    let defect = if scale == 0.0 { 0.0 } else { (lhs - bulk).abs() / scale };
    Ok(ConeFlux { ball, cone: cone_term, bulk, defect })
}

/// Normalized defect of [`cone_flux`].
pub fn cone_flux_defect(run: &RunHandle, cone: Cone, t0: f64, t1: f64, cfg: &DiagnosticsConfig) -> Result<f64> {
    Ok(cone_flux(run, cone, t0, t1, cfg)?.defect)
}

/// `|P(−ω)φ|²` with `ω = x/|x|`; at the origin the average over `ω`, `½|φ|²`.
fn bad_density(x: [f64; 3], v: &Spinor) -> f64 {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if r == 0.0 {
        return 0.5 * v.norm_sqr();
    }
    apply_projector([-x[0] / r, -x[1] / r, -x[2] / r], v).norm_sqr()
}

/// `∫ |P(−ω)φ|² / (1 + |t − r|)^{1+2μ} dx` at one time.
fn ghost_density(field: &SpinorField, mu: f64) -> f64 {
    let grid = field.grid;
    let t = field.time;
    let s = par_sum(grid.len(), 0.0, |i| {
        let x = grid.point(i);
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        bad_density(x, &field.get(i)) / (1.0 + (t - r).abs()).powf(1.0 + 2.0 * mu)
    });
    s * grid.cell_volume()
}

/// Both sides of the ghost-weight bound over the whole run:
/// `lhs = ∫∫ |P(−ω)φ|²/(1+|t−r|)^{1+2μ}`,
/// `rhs = (2/μ)(E(t₁) + E(t₂) + |∫∫ 2Re⟨γ⁰φ,Φ⟩|)`.
pub fn ghost_weight_check(run: &RunHandle, cfg: &DiagnosticsConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let snaps = &run.snapshots;
    if snaps.len() < 2 {
        return Err(Error::Snapshots("ghost weight needs two snapshots".into()));
    }
    let mut lhs = 0.0;
    let mut pair = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    for s in snaps {
        let g = ghost_density(s, cfg.mu);
        let p = match forcing(run, s)? {
            Some(f) => pairing(s, &f),
            None => 0.0,
        };
        if let Some((t0, g0, p0)) = prev {
            let dt = (s.time - t0).abs();
            lhs += 0.5 * dt * (g + g0);
            pair += 0.5 * dt * (p + p0);
        }
        prev = Some((s.time, g, p));
    }
    let e1 = charge(&snaps[0]);
    let e2 = charge(&snaps[snaps.len() - 1]);
    let rhs = 2.0 / cfg.mu * (e1 + e2 + pair.abs());
    Ok((lhs, rhs))
}

/// `sup_x (1+|t+r|)(1+|t−r|)^{1/2}|φ(t,x)|` over the grid divided by the
/// order-2 weighted norm at `t`.
pub fn ks_ratio(run: &RunHandle, t: f64) -> Result<f64> {
    if t.abs() > run.box_horizon() {
        return Err(Error::Containment(format!("t = {t} beyond the box horizon {}", run.box_horizon())));
    }
    let field = run.field_at(t)?;
    let grid = field.grid;
    let sup = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            (1.0 + (t + r).abs()) * (1.0 + (t - r).abs()).sqrt() * field.get(i).norm()
        })
        .reduce(|| 0.0, f64::max);
    if sup == 0.0 {
        return Ok(0.0);
    }
    let e = spacetime_energies(&field, run.coeffs().as_ref(), run.source.as_ref(), 2)?;
    Ok(sup / e.iter().sum::<f64>().sqrt())
}

/// Samples along one outgoing ray.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RaySamples {
    pub s: f64,
    pub omega: [f64; 3],
    /// `(1 + t + r, |φ|, |P(−ω)φ|)`.
    pub samples: Vec<(f64, f64, f64)>,
}

/// Fitted decay exponents along outgoing rays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeelingFit {
    pub p_full: f64,
    pub p_minus: f64,
    /// Decades of `1 + t + r` covered by the fitted part.
    pub decades: f64,
    pub rays: Vec<RaySamples>,
}

/// Samples `|φ|` and `|P(−ω)φ|` at `(s + r, rω)` for `r ∈ [r_min, r_max]`
/// and fits power laws in `1 + t + r` per ray (the first `fit_skip` of each
/// ray is discarded); returns the mean exponents over rays.
pub fn peeling_fit(
    run: &RunHandle,
    rays: &[(f64, [f64; 3])],
    r_range: (f64, f64),
    n_samples: usize,
    cfg: &DiagnosticsConfig,
) -> Result<PeelingFit> {
    cfg.validate()?;
    if rays.is_empty() || n_samples < 4 {
        return Err(Error::InvalidConfig("peeling fit needs rays and at least 4 samples".into()));
    }
    let grid = run.grid();
    let (r0, r1) = r_range;
    let rs: Vec<f64> = (0..n_samples).map(|k| r0 + (r1 - r0) * k as f64 / (n_samples - 1) as f64).collect();
    let mut out_rays: Vec<RaySamples> = rays
        .iter()
        .map(|&(s, om)| {
            let n = (om[0] * om[0] + om[1] * om[1] + om[2] * om[2]).sqrt();
            RaySamples { s, omega: [om[0] / n, om[1] / n, om[2] / n], samples: Vec::new() }
        })
        .collect();
    // Rays sharing s share the sample times.
    let mut by_s: Vec<f64> = rays.iter().map(|r| r.0).collect();
    by_s.sort_by(f64::total_cmp);
    by_s.dedup();
    for s in by_s {
        for &r in &rs {
            let field = run.field_at(s + r)?;
            for ray in out_rays.iter_mut().filter(|ray| ray.s == s) {
                let om = ray.omega;
                let v = stencil(&grid, [r * om[0], r * om[1], r * om[2]])?.apply(&field);
                let bad = apply_projector([-om[0], -om[1], -om[2]], &v).norm();
                ray.samples.push((1.0 + s + 2.0 * r, v.norm(), bad));
            }
        }
    }
    let skip = (cfg.fit_skip * n_samples as f64).ceil() as usize;
    let mut pf = Vec::new();
    let mut pm = Vec::new();
    for ray in &out_rays {
        let tail = &ray.samples[skip.min(ray.samples.len() - 2)..];
        let xs: Vec<f64> = tail.iter().map(|p| p.0).collect();
        let full: Vec<f64> = tail.iter().map(|p| p.1).collect();
        let minus: Vec<f64> = tail.iter().map(|p| p.2).collect();
        pf.push(fit::power_law(&xs, &full).ok_or_else(|| Error::Unsupported("degenerate ray samples".into()))?);
        pm.push(fit::power_law(&xs, &minus).ok_or_else(|| Error::Unsupported("degenerate ray samples".into()))?);
    }
    let decades = out_rays
        .iter()
        .map(|ray| {
            let tail = &ray.samples[skip.min(ray.samples.len() - 2)..];
            (tail[tail.len() - 1].0 / tail[0].0).log10()
        })
        .fold(f64::INFINITY, f64::min);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(PeelingFit { p_full: mean(&pf), p_minus: mean(&pm), decades, rays: out_rays })
}

/// One rung of the small-data ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderRung {
    pub lambda: f64,
    /// `Σ_{k≤K} E^k(0)`.
    pub energy0: f64,
    /// `sup_t Σ_k E^k(t) / Σ_k E^k(0)`.
    pub sup_ratio: f64,
    /// `sup_t |Σ_k E^k(t) − Σ_k E^k(0)|`.
    pub sup_deviation: f64,
}

/// Energy ladder: evolves `λ·φ₀` for each `λ` under `Dφ = N(φ,φ)` and
/// tracks `Σ_{k≤K} E^k(t)` at the given times (all within the box horizon).
pub fn energy_ladder(
    phi0: &SpinorField,
    coeffs: &NullFormCoeffs,
    lambdas: &[f64],
    k: usize,
    dt: f64,
    times: &[f64],
) -> Result<Vec<LadderRung>> {
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    let every = (times.iter().map(|t| (t / dt).round() as usize).filter(|s| *s > 0).fold(0, gcd)).max(1);
    lambdas
        .iter()
        .map(|&lambda| {
            let mut data = phi0.clone();
            data.scale(C64::new(lambda, 0.0));
            let cfg = EvolveConfig::new(dt, t_end)
                .with_snapshot_every(every)
                .with_nonlinearity(Nonlinearity::NullForm(*coeffs));
            let run = evolve(&data, &cfg, None)?;
            let horizon = run.box_horizon();
            let total = |t: f64| -> Result<f64> {
                if k > 0 && t > horizon {
                    return Err(Error::Containment(format!("t = {t} beyond the box horizon {horizon}")));
                }
                let f = run.field_at(t)?;
                Ok(spacetime_energies(&f, Some(coeffs), None, k)?.iter().sum())
            };
            let e0 = total(0.0)?;
            let mut sup_ratio: f64 = 1.0;
            let mut sup_dev: f64 = 0.0;
            for &t in times {
                let e = total(t)?;
                sup_ratio = sup_ratio.max(e / e0);
                sup_dev = sup_dev.max((e - e0).abs());
            }
            Ok(LadderRung { lambda, energy0: e0, sup_ratio, sup_deviation: sup_dev })
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Fitted power `p` in `sup_deviation ≈ C·E(0)^p` over a ladder.
pub fn refined_power(rungs: &[LadderRung]) -> Option<f64> {
    let e: Vec<f64> = rungs.iter().map(|r| r.energy0).collect();
    let d: Vec<f64> = rungs.iter().map(|r| r.sup_deviation).collect();
    fit::power_law(&e, &d)
}

/// One row of the per-snapshot diagnostics table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    /// `E^{(0)}(t)`, the charge.
    pub charge: f64,
    /// `E^k(t)` for `k = 1..=K` (empty for `K = 0` or outside the box horizon).
    pub higher: Vec<f64>,
    /// Accumulated ghost-weighted flux up to `t`.
    pub ghost_flux: f64,
    /// Accumulated source pairing `∫₀^t∫ 2Re⟨γ⁰φ,Φ⟩`.
    pub pairing: f64,
    /// `|Q(t) − Q(0) − pairing| / Q(0)`.
    pub balance_defect: f64,
}

/// Time series of scalar diagnostics for one run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DiagnosticsLog {
    pub rows: Vec<LogRow>,
    pub order: usize,
}

impl DiagnosticsLog {
    /// Walks the snapshots of `run`, accumulating fluxes with the
    /// trapezoid rule; higher energies up to order `k` while contained.
    pub fn collect(run: &RunHandle, k: usize, cfg: &DiagnosticsConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rows = Vec::with_capacity(run.snapshots.len());
        let q0 = charge(run.initial());
        let mut ghost = 0.0;
        let mut pair = 0.0;
        let mut prev: Option<(f64, f64, f64)> = None;
        for s in &run.snapshots {
            let g = ghost_density(s, cfg.mu);
            let p = match forcing(run, s)? {
                Some(f) => pairing(s, &f),
                None => 0.0,
            };
            if let Some((t0, g0, p0)) = prev {
                let dt = (s.time - t0).abs();
                ghost += 0.5 * dt * (g + g0);
                pair += 0.5 * (s.time - t0) * (p + p0);
            }
            prev = Some((s.time, g, p));
            let q = charge(s);
            let higher = if k > 0 && s.time.abs() <= run.box_horizon() {
                spacetime_energies(s, run.coeffs().as_ref(), run.source.as_ref(), if run.source.is_some() { k.min(1) } else { k })?
                    .into_iter()
                    .skip(1)
                    .collect()
            } else {
                Vec::new()
            };
            rows.push(LogRow {
                t: s.time,
                charge: q,
                higher,
                ghost_flux: ghost,
                pairing: pair,
                balance_defect: if q0 > 0.0 { (q - q0 - pair).abs() / q0 } else { 0.0 },
            });
        }
        Ok(DiagnosticsLog { rows, order: k })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,charge");
        for k in 1..=self.order {
            let _ = write!(out, ",E{k}");
        }
        out.push_str(",ghost_flux,pairing,balance_defect\n");
        for r in &self.rows {
            let _ = write!(out, "{:.17e},{:.17e}", r.t, r.charge);
            for k in 0..self.order {
                match r.higher.get(k) {
                    Some(v) => {
                        let _ = write!(out, ",{v:.17e}");
                    }
                    None => out.push_str(",nan"),
                }
            }
            let _ = writeln!(out, ",{:.17e},{:.17e},{:.17e}", r.ghost_flux, r.pairing, r.balance_defect);
        }
        out
    }
}

/// One CSV per ray: `(1+t+r, |φ|, |P(−ω)φ|)`.
pub fn ray_csv(ray: &RaySamples) -> String {
    let mut out = String::from("one_plus_t_plus_r,abs_phi,abs_p_minus_phi\n");
    for (x, a, b) in &ray.samples {
        let _ = writeln!(out, "{x:.17e},{a:.17e},{b:.17e}");
    }
    out
}
