//! Commuting vector fields on spacetime and at null infinity, and the
//! weighted norms built from them.
//!
//! Spacetime generators act on a run through time jets
//! `(φ, ∂_tφ, ∂_t²φ, …)` reconstructed from the equation, so every `∂_t`
//! is consistent with the PDE at the discrete level. Coefficients like `t`
//! in `Ω_{0i} = t∂_i + x^i∂_t` are handled by the jet rules
//! `∂_t^j(t∂_i g) = t∂_i g_j + j∂_i g_{j−1}`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{self, apply_gamma0, null_form, Matrix4C, NullFormCoeffs, Spinor, C64};
use crate::grid::{gradient, SpinorField};
use crate::propagate::{transport_from_gradient, RunHandle, Source};
use crate::radiation::RadiationField;
use crate::{Error, Result};

/// Which of the two generator families an operator belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Spacetime,
    NullInfinity,
}

/// Generator kind. Indices are 0 for time and 1..=3 for space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// `∂_μ`; at null infinity only `μ = 0` (meaning `∂_s`) exists.
    Translation(usize),
    /// Modified rotation in the `(i, j)` plane, `i < j`.
    Rotation(usize, usize),
    /// Modified boost along axis `i`.
    Boost(usize),
    /// `S = t∂_t + r∂_r`, or `s∂_s` at null infinity.
    Scaling,
}

/// A single generator of either family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VectorFieldId {
    pub family: Family,
    pub kind: Kind,
}

impl VectorFieldId {
    pub fn spacetime(kind: Kind) -> Self {
        VectorFieldId { family: Family::Spacetime, kind }
    }

    pub fn null_infinity(kind: Kind) -> Self {
        VectorFieldId { family: Family::NullInfinity, kind }
    }

    pub fn is_spacetime(&self) -> bool {
        self.family == Family::Spacetime
    }

    /// The 11 spacetime generators: 4 translations, 3 rotations, 3 boosts, scaling.
    pub fn spacetime_family() -> Vec<VectorFieldId> {
        let mut v: Vec<_> = (0..4).map(|m| Self::spacetime(Kind::Translation(m))).collect();
        v.extend([(1, 2), (1, 3), (2, 3)].map(|(i, j)| Self::spacetime(Kind::Rotation(i, j))));
        v.extend((1..4).map(|i| Self::spacetime(Kind::Boost(i))));
        v.push(Self::spacetime(Kind::Scaling));
        v
    }

    /// The 8 null-infinity generators: `∂_s`, 3 rotations, 3 boosts, `s∂_s`.
    pub fn null_infinity_family() -> Vec<VectorFieldId> {
        let mut v = vec![Self::null_infinity(Kind::Translation(0))];
        v.extend([(1, 2), (1, 3), (2, 3)].map(|(i, j)| Self::null_infinity(Kind::Rotation(i, j))));
        v.extend((1..4).map(|i| Self::null_infinity(Kind::Boost(i))));
        v.push(Self::null_infinity(Kind::Scaling));
        v
    }

    pub fn family_of(f: Family) -> Vec<VectorFieldId> {
        match f {
            Family::Spacetime => Self::spacetime_family(),
            Family::NullInfinity => Self::null_infinity_family(),
        }
    }

    /// Constant matrix part: `−½γ^iγ^j` for rotations, `−½γ⁰γ^i` for
    /// spacetime boosts and `+½γ⁰γ^i` for null-infinity boosts.
    pub fn matrix_part(&self) -> Option<Matrix4C> {
        let g = |m: usize| clifford::gamma(m).expect("index in range");
        match self.kind {
            Kind::Rotation(i, j) => Some((&g(i) * &g(j)).scale_exact(-1, 0, 2)),
            Kind::Boost(i) => {
                let s = if self.is_spacetime() { -1 } else { 1 };
                Some((&g(0) * &g(i)).scale_exact(s, 0, 2))
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match (self.family, self.kind) {
            (Family::Spacetime, Kind::Translation(m)) => m < 4,
            (Family::NullInfinity, Kind::Translation(m)) => m == 0,
            (_, Kind::Rotation(i, j)) => (1..=3).contains(&i) && (1..=3).contains(&j) && i < j,
            (_, Kind::Boost(i)) => (1..=3).contains(&i),
            (_, Kind::Scaling) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("no generator {self}")))
        }
    }
}

impl fmt::Display for VectorFieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.family, self.kind) {
            (Family::Spacetime, Kind::Translation(0)) => write!(f, "d_t"),
            (Family::Spacetime, Kind::Translation(m)) => write!(f, "d_{m}"),
            (Family::Spacetime, Kind::Rotation(i, j)) => write!(f, "Omega_{i}{j}"),
            (Family::Spacetime, Kind::Boost(i)) => write!(f, "Omega_0{i}"),
            (Family::Spacetime, Kind::Scaling) => write!(f, "S"),
            (Family::NullInfinity, Kind::Translation(_)) => write!(f, "d_s"),
            (Family::NullInfinity, Kind::Rotation(i, j)) => write!(f, "hat_Omega_{i}{j}"),
            (Family::NullInfinity, Kind::Boost(i)) => write!(f, "hat_L_{i}"),
            (Family::NullInfinity, Kind::Scaling) => write!(f, "s_d_s"),
        }
    }
}

/// Maximum derivative order and family for [`weighted_norm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormConfig {
    pub max_order: usize,
    pub family: Family,
}

/// Highest implemented order.
pub const MAX_ORDER: usize = 3;

impl NormConfig {
    pub fn spacetime(k: usize) -> Self {
        NormConfig { max_order: k, family: Family::Spacetime }
    }

    pub fn null_infinity(k: usize) -> Self {
        NormConfig { max_order: k, family: Family::NullInfinity }
    }
}

// ---------------------------------------------------------------------------
// Time jets

/// `(g, ∂_t g, …, ∂_t^m g)` at one instant.
#[derive(Clone, Debug)]
pub struct Jet {
    pub t: f64,
    pub entries: Vec<SpinorField>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Time jet of order `order` of the solution passing through `field`,
/// built from `∂_tφ = −γ⁰γ^i∂_iφ + γ⁰(N(φ,φ) + Φ)`.
///
/// Sources contribute only to the first derivative; higher orders with a
/// source are rejected.
pub fn time_jet(
    field: &SpinorField,
    coeffs: Option<&NullFormCoeffs>,
    source: Option<&Arc<dyn Source>>,
    order: usize,
) -> Result<Jet> {
    if source.is_some() && order > 1 {
        return Err(Error::Unsupported("time jets above order 1 for sourced runs".into()));
    }
    let mut entries = vec![field.clone()];
    for k in 0..order {
        let grad = gradient(&entries[k]);
        let mut next = transport_from_gradient(&entries[k], &grad);
        if let Some(c) = coeffs {
            // ∂_t^k N(φ,φ) = Σ_j C(k,j) N(φ_j, φ_{k−j}).
            let grid = field.grid;
            let vals: Vec<Spinor> = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let mut acc = Spinor::ZERO;
                    for j in 0..=k {
                        let b = binomial(k, j);
                        acc += null_form(c, &entries[j].get(i), &entries[k - j].get(i)) * b;
                    }
                    apply_gamma0(&acc)
                })
                .collect();
            next.axpy(C64::new(1.0, 0.0), &SpinorField::from_spinors(grid, field.time, &vals));
        }
        if let Some(src) = source {
            let mut f = src.eval(field.time, field.grid);
            f.map_points(|_, s| apply_gamma0(&s));
            next.axpy(C64::new(1.0, 0.0), &f);
        }
        entries.push(next);
    }
    Ok(Jet { t: field.time, entries })
}

/// Jet plus the spatial gradients of its entries, shared across generators.
struct GradJet<'a> {
    jet: &'a Jet,
    grads: Vec<[SpinorField; 3]>,
}

impl<'a> GradJet<'a> {
    fn new(jet: &'a Jet) -> Self {
        let m = jet.entries.len() - 1;
        let grads = jet.entries[..m].iter().map(gradient).collect();
        GradJet { jet, grads }
    }
}

/// Applies a spacetime generator to a jet of length `m+1`, returning the
/// jet of length `m` of the result.
fn apply_to_jet(gj: &GradJet<'_>, id: VectorFieldId) -> Jet {
    let jet = gj.jet;
    let m = jet.entries.len() - 1;
    let t = jet.t;
    let grid = jet.entries[0].grid;
    let mat = id.matrix_part().map(|a| *a.float());
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let g = &jet.entries[j];
        let grad = &gj.grads[j];
        let field = match id.kind {
            Kind::Translation(0) => jet.entries[j + 1].clone(),
            Kind::Translation(a) => grad[a - 1].clone(),
            Kind::Rotation(a, b) => {
                let vals: Vec<Spinor> = (0..grid.len())
                    .into_par_iter()
                    .map(|i| {
                        let x = grid.point(i);
                        let rot = grad[b - 1].get(i) * x[a - 1] - grad[a - 1].get(i) * x[b - 1];
                        rot + mat.expect("rotation matrix").apply(&g.get(i))
                    })
                    .collect();
                SpinorField::from_spinors(grid, t, &vals)
            }
            Kind::Boost(a) => {
                let prev = (j > 0).then(|| &gj.grads[j - 1][a - 1]);
                let next = &jet.entries[j + 1];
                let vals: Vec<Spinor> = (0..grid.len())
                    .into_par_iter()
                    .map(|i| {
                        let x = grid.point(i);
                        let mut v = grad[a - 1].get(i) * t + next.get(i) * x[a - 1];
                        if let Some(p) = prev {
                            v += p.get(i) * j as f64;
                        }
                        v + mat.expect("boost matrix").apply(&g.get(i))
                    })
                    .collect();
                SpinorField::from_spinors(grid, t, &vals)
            }
            Kind::Scaling => {
                let next = &jet.entries[j + 1];
                let vals: Vec<Spinor> = (0..grid.len())
                    .into_par_iter()
                    .map(|i| {
                        let x = grid.point(i);
                        let radial = grad[0].get(i) * x[0] + grad[1].get(i) * x[1] + grad[2].get(i) * x[2];
                        next.get(i) * t + g.get(i) * j as f64 + radial
                    })
                    .collect();
                SpinorField::from_spinors(grid, t, &vals)
            }
        };
        out.push(field);
    }
    Jet { t, entries: out }
}

fn check_spacetime(id: VectorFieldId) -> Result<()> {
    if !id.is_spacetime() {
        return Err(Error::WrongFamily(id));
    }
    id.validate()
}

fn needs_weights(id: VectorFieldId) -> bool {
    matches!(id.kind, Kind::Boost(_) | Kind::Scaling | Kind::Rotation(..))
}

/// `Γφ(t, ·)` for a spacetime generator.
pub fn apply_spacetime(run: &RunHandle, id: VectorFieldId, t: f64) -> Result<SpinorField> {
    check_spacetime(id)?;
    if needs_weights(id) && t.abs() > run.box_horizon() {
        return Err(Error::Containment(format!("t = {t} beyond the box horizon {}", run.box_horizon())));
    }
    let field = run.field_at(t)?;
    let jet = time_jet(&field, run.coeffs().as_ref(), run.source.as_ref(), 1)?;
    let gj = GradJet::new(&jet);
    let mut out = apply_to_jet(&gj, id);
    Ok(out.entries.remove(0))
}

/// `Γφ` for data `field` evolving under the given nonlinearity (no source).
pub fn apply_spacetime_to_data(field: &SpinorField, coeffs: Option<&NullFormCoeffs>, id: VectorFieldId) -> Result<SpinorField> {
    check_spacetime(id)?;
    let jet = time_jet(field, coeffs, None, 1)?;
    let gj = GradJet::new(&jet);
    Ok(apply_to_jet(&gj, id).entries.remove(0))
}

/// Per-order sums `E^k = Σ_{|α|=k} ‖Γ^αφ‖²`, `k = 0..=K`, for the solution
/// through `field`.
pub fn spacetime_energies(
    field: &SpinorField,
    coeffs: Option<&NullFormCoeffs>,
    source: Option<&Arc<dyn Source>>,
    k: usize,
) -> Result<Vec<f64>> {
    if k > MAX_ORDER {
        return Err(Error::Unsupported(format!("order {k} above {MAX_ORDER}")));
    }
    let jet = time_jet(field, coeffs, source, k)?;
    let mut sums = vec![0.0; k + 1];
    let family = VectorFieldId::spacetime_family();
    fn walk(jet: &Jet, depth: usize, family: &[VectorFieldId], sums: &mut [f64]) {
        let e0 = &jet.entries[0];
        sums[depth] += crate::grid::charge(e0);
        if jet.entries.len() == 1 {
            return;
        }
        let gj = GradJet::new(jet);
        for id in family {
            let child = apply_to_jet(&gj, *id);
            walk(&child, depth + 1, family, sums);
        }
    }
    walk(&jet, 0, &family, &mut sums);
    Ok(sums)
}

/// Spacetime weighted norm `(Σ_{|α|≤K} ‖Γ^αφ(t)‖²)^{1/2}` of a run at `t`.
pub fn weighted_norm_run(run: &RunHandle, t: f64, cfg: NormConfig) -> Result<f64> {
    if cfg.family != Family::Spacetime {
        return Err(Error::Unsupported("run norms use the spacetime family".into()));
    }
    if cfg.max_order > 0 && t.abs() > run.box_horizon() {
        return Err(Error::Containment(format!("t = {t} beyond the box horizon {}", run.box_horizon())));
    }
    let field = run.field_at(t)?;
    let sums = spacetime_energies(&field, run.coeffs().as_ref(), run.source.as_ref(), cfg.max_order)?;
    Ok(sums.iter().sum::<f64>().sqrt())
}

/// Spacetime weighted norm of initial data under the given nonlinearity.
pub fn weighted_norm_data(field: &SpinorField, coeffs: Option<&NullFormCoeffs>, k: usize) -> Result<f64> {
    Ok(spacetime_energies(field, coeffs, None, k)?.iter().sum::<f64>().sqrt())
}

// ---------------------------------------------------------------------------
// Null infinity

/// Applies a null-infinity generator to a radiation field:
///
/// * `∂_s`;
/// * `Ω̂_{ij} − ½γ^iγ^j` with `Ω̂_{ij} = ω^i∂_{ω^j} − ω^j∂_{ω^i}`;
/// * `−∂_{ω^i} + ω^i s∂_s + ω^i I + ½γ⁰γ^i`;
/// * `s∂_s`.
///
/// `∂_s` is a 4th-order centred difference with zero extension outside the
/// window; `∂_{ω^i}` is the tangential derivative on the sphere chart.
pub fn apply_null_infinity(f: &RadiationField, id: VectorFieldId) -> Result<RadiationField> {
    if id.is_spacetime() {
        return Err(Error::WrongFamily(id));
    }
    id.validate()?;
    let ng = &f.grid;
    let mat = id.matrix_part().map(|a| *a.float());
    let mut out = f.clone_zeroed();
    match id.kind {
        Kind::Translation(_) => out.data = f.d_s(),
        Kind::Scaling => out.data = f.s_d_s(),
        Kind::Rotation(a, b) => {
            let tg = f.tangential_gradient();
            for (idx, v) in out.data.iter_mut().enumerate() {
                let w = ng.sphere.dir(ng.node_of(idx));
                let rot = tg[b - 1][idx] * w[a - 1] - tg[a - 1][idx] * w[b - 1];
                *v = rot + mat.expect("rotation").apply(&f.data[idx]);
            }
        }
        Kind::Boost(a) => {
            let tg = f.tangential_gradient();
            let sds = f.s_d_s();
            for (idx, v) in out.data.iter_mut().enumerate() {
                let w = ng.sphere.dir(ng.node_of(idx));
                *v = -tg[a - 1][idx] + sds[idx] * w[a - 1] + f.data[idx] * w[a - 1]
                    + mat.expect("boost").apply(&f.data[idx]);
            }
        }
    }
    Ok(out)
}

/// Per-order sums over the null-infinity family.
pub fn null_energies(f: &RadiationField, k: usize) -> Result<Vec<f64>> {
    if k > MAX_ORDER {
        return Err(Error::Unsupported(format!("order {k} above {MAX_ORDER}")));
    }
    let family = VectorFieldId::null_infinity_family();
    let mut sums = vec![0.0; k + 1];
    fn walk(f: &RadiationField, depth: usize, k: usize, family: &[VectorFieldId], sums: &mut [f64]) -> Result<()> {
        sums[depth] += f.norm_sqr();
        if depth == k {
            return Ok(());
        }
        for id in family {
            walk(&apply_null_infinity(f, *id)?, depth + 1, k, family, sums)?;
        }
        Ok(())
    }
    walk(f, 0, k, &family, &mut sums)?;
    Ok(sums)
}

/// `(Σ_{|α|≤K} ‖Γ̂^αF‖²)^{1/2}` over the null-infinity family.
pub fn weighted_norm_radiation(f: &RadiationField, cfg: NormConfig) -> Result<f64> {
    if cfg.family != Family::NullInfinity {
        return Err(Error::Unsupported("radiation norms use the null-infinity family".into()));
    }
    Ok(null_energies(f, cfg.max_order)?.iter().sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{charge, make_field, DataSpec, Grid};
    use crate::propagate::{evolve, free_multiplier, EvolveConfig};
    use crate::radiation::{NullGrid, Sphere};

    fn pol() -> Spinor {
        Spinor::new(C64::new(1.0, 0.0), C64::new(0.0, 0.3), C64::new(0.2, 0.0), C64::new(-0.5, 0.1))
    }

    #[test]
    fn family_sizes() {
        assert_eq!(VectorFieldId::spacetime_family().len(), 11);
        assert_eq!(VectorFieldId::null_infinity_family().len(), 8);
    }

    #[test]
    fn dt_on_plane_wave_matches_mode_formula() {
        let g = Grid::new(16, 10.0).unwrap();
        let spec = DataSpec::plane_wave([1, 2, 0], pol(), 1.0);
        let run = evolve(&make_field(g, &spec).unwrap(), &EvolveConfig::new(0.1, 0.4), None).unwrap();
        let k = spec.wavevector(g.length());
        let t = 0.2;
        let d = apply_spacetime(&run, VectorFieldId::spacetime(Kind::Translation(0)), t).unwrap();
        let m = free_multiplier(k, t, &pol());
        let dm = clifford::apply_alpha(k, &m) * C64::new(0.0, -1.0);
        let want = SpinorField::from_fn(g, t, |x| dm * C64::from_polar(1.0, k[0] * x[0] + k[1] * x[1]));
        assert!(d.rel_diff(&want) < 1e-11);
    }

    #[test]
    fn rotation_of_radial_profile_is_pure_matrix() {
        let g = Grid::new(64, 32.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 2.0, pol(), 1.0)).unwrap();
        let run = evolve(&f, &EvolveConfig::new(0.1, 0.2), None).unwrap();
        let id = VectorFieldId::spacetime(Kind::Rotation(1, 2));
        let out = apply_spacetime(&run, id, 0.0).unwrap();
        let a = *id.matrix_part().unwrap().float();
        let mut want = f.clone();
        want.map_points(|_, s| a.apply(&s));
        assert!(out.rel_diff(&want) < 1e-10);
    }

    #[test]
    fn scaling_at_t0_is_radial_derivative() {
        let g = Grid::new(48, 24.0).unwrap();
        let sigma = 2.0;
        let spec = DataSpec::gaussian([0.0; 3], sigma, pol(), 1.0);
        let f = make_field(g, &spec).unwrap();
        let run = evolve(&f, &EvolveConfig::new(0.1, 0.2), None).unwrap();
        let out = apply_spacetime(&run, VectorFieldId::spacetime(Kind::Scaling), 0.0).unwrap();
        // r∂_r e^{−r²/2σ²} = −(r²/σ²) e^{−r²/2σ²}.
        let want = SpinorField::from_fn(g, 0.0, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            spec.eval(x, 24.0) * (-r2 / (sigma * sigma))
        });
        assert!(out.rel_diff(&want) < 1e-6);
    }

    #[test]
    fn k0_norm_is_charge_and_zero_is_zero() {
        let g = Grid::new(16, 16.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 4.0, pol(), 1.0)).unwrap();
        let n0 = weighted_norm_data(&f, None, 0).unwrap();
        assert!((n0 - charge(&f).sqrt()).abs() < 1e-14);
        let z = SpinorField::zeros(g, 0.0);
        assert_eq!(weighted_norm_data(&z, None, 2).unwrap(), 0.0);
    }

    #[test]
    fn k1_norm_matches_per_generator_recomputation() {
        let g = Grid::new(48, 32.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.3, 0.0, -0.2], 2.7, pol(), 1.0)).unwrap();
        let run = evolve(&f, &EvolveConfig::new(0.1, 0.2), None).unwrap();
        let mut brute = charge(&f);
        for id in VectorFieldId::spacetime_family() {
            brute += charge(&apply_spacetime(&run, id, 0.0).unwrap());
        }
        let n1 = weighted_norm_data(&f, None, 1).unwrap();
        assert!((n1 * n1 - brute).abs() / brute < 1e-12);
    }

    #[test]
    fn weighted_norm_monotone_in_k() {
        let g = Grid::new(16, 16.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 4.0, pol(), 1.0)).unwrap();
        let e = spacetime_energies(&f, None, None, 2).unwrap();
        assert!(e.iter().all(|v| *v >= 0.0));
        let n0 = e[0].sqrt();
        let n1 = (e[0] + e[1]).sqrt();
        let n2 = (e[0] + e[1] + e[2]).sqrt();
        assert!(n0 <= n1 && n1 <= n2);
    }

    #[test]
    fn generator_norms_conserved_by_free_flow() {
        let g = Grid::new(72, 48.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 4.0 * g.h(), pol(), 1.0)).unwrap();
        let run = evolve(&f, &EvolveConfig::new(0.5, 4.0).with_snapshot_every(4), None).unwrap();
        for id in VectorFieldId::spacetime_family() {
            let a = charge(&apply_spacetime(&run, id, 0.0).unwrap());
            let b = charge(&apply_spacetime(&run, id, 4.0).unwrap());
            assert!((a - b).abs() / a < 0.005, "{id}: {a} vs {b}");
        }
    }

    #[test]
    fn sources_limit_jet_order() {
        let g = Grid::new(16, 16.0).unwrap();
        let f = SpinorField::zeros(g, 0.0);
        let src: Arc<dyn Source> = Arc::new(crate::propagate::PulsedSource {
            profile: DataSpec::gaussian([0.0; 3], 4.0, pol(), 1.0),
            t_on: 0.0,
            t_off: 1.0,
        });
        assert!(time_jet(&f, None, Some(&src), 2).is_err());
        assert!(time_jet(&f, None, Some(&src), 1).is_ok());
    }

    fn separable(ng: &NullGrid, g: impl Fn(f64) -> f64, psi: Spinor) -> RadiationField {
        let mut f = RadiationField::zeros(ng.clone(), 1.0);
        for j in 0..ng.ns {
            for node in 0..ng.sphere.len() {
                f.data[ng.index(j, node)] = psi * g(ng.s(j));
            }
        }
        f
    }

    #[test]
    fn d_s_on_separable_field() {
        let ng = NullGrid::new(-6.0, 6.0, 241, Sphere::new(6, 12).unwrap()).unwrap();
        let g = |s: f64| (-s * s).exp();
        let dg = |s: f64| -2.0 * s * (-s * s).exp();
        let f = separable(&ng, g, pol());
        let d = apply_null_infinity(&f, VectorFieldId::null_infinity(Kind::Translation(0))).unwrap();
        let want = separable(&ng, dg, pol());
        assert!(d.rel_diff(&want) < 1e-5);
    }

    #[test]
    fn s_d_s_vanishes_at_zero() {
        let ng = NullGrid::new(-3.0, 3.0, 61, Sphere::new(4, 8).unwrap()).unwrap();
        let f = separable(&ng, |s| (-s * s).exp() + 0.5, pol());
        let d = apply_null_infinity(&f, VectorFieldId::null_infinity(Kind::Scaling)).unwrap();
        let j0 = 30;
        assert!((ng.s(j0)).abs() < 1e-15);
        for node in 0..ng.sphere.len() {
            assert_eq!(d.data[ng.index(j0, node)].max_abs(), 0.0);
        }
    }

    #[test]
    fn rotation_on_isotropic_field_is_matrix_only() {
        let ng = NullGrid::new(-3.0, 3.0, 31, Sphere::new(12, 24).unwrap()).unwrap();
        let f = separable(&ng, |s| (-s * s).exp(), pol());
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            let id = VectorFieldId::null_infinity(Kind::Rotation(i, j));
            let d = apply_null_infinity(&f, id).unwrap();
            let a = *id.matrix_part().unwrap().float();
            let mut want = f.clone();
            for v in want.data.iter_mut() {
                *v = a.apply(v);
            }
            assert!(d.rel_diff(&want) < 1e-10);
        }
    }

    #[test]
    fn scaling_and_translation_bracket() {
        // [∂_s, s∂_s] = ∂_s holds to the order of the s-stencil.
        let defect = |ns: usize| {
            let ng = NullGrid::new(-6.0, 6.0, ns, Sphere::new(4, 8).unwrap()).unwrap();
            let f = separable(&ng, |s| (-(s - 0.3) * (s - 0.3)).exp(), pol());
            let ds = VectorFieldId::null_infinity(Kind::Translation(0));
            let sc = VectorFieldId::null_infinity(Kind::Scaling);
            let a = apply_null_infinity(&apply_null_infinity(&f, ds).unwrap(), sc).unwrap();
            let b = apply_null_infinity(&apply_null_infinity(&f, sc).unwrap(), ds).unwrap();
            let mut bracket = a.clone();
            bracket.axpy(C64::new(-1.0, 0.0), &b);
            let mut want = apply_null_infinity(&f, ds).unwrap();
            want.scale(C64::new(-1.0, 0.0));
            bracket.rel_diff(&want)
        };
        let (coarse, fine) = (defect(241), defect(481));
        assert!(fine < 1e-5, "{fine}");
        assert!(coarse / fine > 12.0, "{coarse} {fine}");
    }

    #[test]
    fn wrong_family_rejected() {
        let ng = NullGrid::new(-1.0, 1.0, 11, Sphere::new(4, 8).unwrap()).unwrap();
        let f = RadiationField::zeros(ng, 1.0);
        assert!(apply_null_infinity(&f, VectorFieldId::spacetime(Kind::Scaling)).is_err());
        assert!(apply_null_infinity(&f, VectorFieldId::null_infinity(Kind::Translation(2))).is_err());
    }
}
