//! Radiation fields on `R × S²`: the sphere and retarded-time grids,
//! extraction of `lim r·φ(s + r, rω)` from runs, and the Duhamel assembly
//! of sourced radiation fields from free ones.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::clifford::{apply_projector, Spinor, C64};
use crate::grid::{cubic_weights, from_fourier, stencil, to_fourier, par_sum, Grid, SpinorField, Stencil};
use crate::propagate::{free_multiplier, propagate_fourier, Direction as TimeDirection, EvolveConfig, RunHandle};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Sphere

/// Gauss–Legendre nodes and weights on `[−1, 1]`, nodes descending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Weights of the first derivative at `x0` of the Lagrange interpolant on `xs`.
fn derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|j| {
            let mut sum = 0.0;
            for m in 0..n {
                if m == j {
                    continue;
                }
                let mut prod = 1.0 / (xs[j] - xs[m]);
                for l in 0..n {
                    if l != j && l != m {
                        prod *= (x0 - xs[l]) / (xs[j] - xs[l]);
                    }
                }
                sum += prod;
            }
            sum
        })
        .collect()
}

/// Gauss–Legendre in `cos θ` times uniform `φ`. Nodes are ordered ring by
/// ring with `θ` increasing; `node = ring · n_phi + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sphere {
    pub n_theta: usize,
    pub n_phi: usize,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    weights: Vec<f64>,
    dirs: Vec<[f64; 3]>,
    /// Per ring: ghost-extended stencil `(ring, shifted by π)` and weights for `∂_θ`.
    theta_stencils: Vec<Vec<(usize, bool, f64)>>,
    /// Spectral differentiation matrix in `φ`.
    phi_diff: Vec<f64>,
}

const THETA_STENCIL: usize = 5;

impl Sphere {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 4 || n_phi % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "sphere needs n_theta >= 2 and even n_phi >= 4, got {n_theta} x {n_phi}"
            )));
        }
        let (mu, wmu) = gauss_legendre(n_theta);
        let theta: Vec<f64> = mu.iter().map(|m| m.acos()).collect();
        let dphi = 2.0 * PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|k| k as f64 * dphi).collect();
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let mut dirs = Vec::with_capacity(n_theta * n_phi);
        for (it, th) in theta.iter().enumerate() {
            for ph in &phi {
                weights.push(wmu[it] * dphi);
                dirs.push([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
            }
        }

        // Great circles through the poles continue to longitude φ + π, so
        // rings beyond either pole appear as ghosts at θ' = −θ or 2π − θ.
        let mut ext: Vec<(f64, usize, bool)> = Vec::new();
        let g = THETA_STENCIL.min(n_theta);
        for r in (0..g).rev() {
            ext.push((-theta[r], r, true));
        }
        for (r, th) in theta.iter().enumerate() {
            ext.push((*th, r, false));
        }
        for r in (n_theta - g..n_theta).rev() {
            ext.push((2.0 * PI - theta[r], r, true));
        }
        let width = THETA_STENCIL.min(ext.len());
        let theta_stencils = (0..n_theta)
            .map(|r| {
                let c = r + g;
                let lo = c.saturating_sub(width / 2).min(ext.len() - width);
                let pts = &ext[lo..lo + width];
                let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let w = derivative_weights(theta[r], &xs);
                pts.iter().zip(w).map(|(p, w)| (p.1, p.2, w)).collect()
            })
            .collect();

        let mut phi_diff = vec![0.0; n_phi * n_phi];
        for i in 0..n_phi {
            for j in 0..n_phi {
                if i != j {
                    let d = (i as i64 - j as i64) as f64;
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    phi_diff[i * n_phi + j] = 0.5 * sign / (0.5 * d * dphi).tan();
                }
            }
        }
        Ok(Sphere { n_theta, n_phi, theta, phi, weights, dirs, theta_stencils, phi_diff })
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, ring: usize, k: usize) -> usize {
        ring * self.n_phi + k
    }

    pub fn dir(&self, node: usize) -> [f64; 3] {
        self.dirs[node]
    }

    pub fn weight(&self, node: usize) -> f64 {
        self.weights[node]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∂_θ` on one `(s)`-slice of node values.
    pub fn d_theta(&self, vals: &[Spinor]) -> Vec<Spinor> {
        let half = self.n_phi / 2;
        let mut out = vec![Spinor::ZERO; self.len()];
        for r in 0..self.n_theta {
            for k in 0..self.n_phi {
                let mut acc = Spinor::ZERO;
                for &(ring, flipped, w) in &self.theta_stencils[r] {
                    let kk = if flipped { (k + half) % self.n_phi } else { k };
                    acc += vals[self.node(ring, kk)] * w;
                }
                out[self.node(r, k)] = acc;
            }
        }
        out
    }

    /// `∂_φ` on one slice.
    pub fn d_phi(&self, vals: &[Spinor]) -> Vec<Spinor> {
        let np = self.n_phi;
        let mut out = vec![Spinor::ZERO; self.len()];
        for r in 0..self.n_theta {
            for i in 0..np {
                let mut acc = Spinor::ZERO;
                for j in 0..np {
                    let d = self.phi_diff[i * np + j];
                    if d != 0.0 {
                        acc += vals[self.node(r, j)] * d;
                    }
                }
                out[self.node(r, i)] = acc;
            }
        }
        out
    }

    /// Cartesian components of the tangential gradient,
    /// `∂_{ω^i} = e_θ^i ∂_θ + e_φ^i (sin θ)^{−1} ∂_φ`.
    pub fn tangential_gradient(&self, vals: &[Spinor]) -> [Vec<Spinor>; 3] {
        let dt = self.d_theta(vals);
        let dp = self.d_phi(vals);
        let mut out = [vec![Spinor::ZERO; self.len()], vec![Spinor::ZERO; self.len()], vec![Spinor::ZERO; self.len()]];
        for r in 0..self.n_theta {
            let (st, ct) = self.theta[r].sin_cos();
            for k in 0..self.n_phi {
                let (sp, cp) = self.phi[k].sin_cos();
                let e_t = [ct * cp, ct * sp, -st];
                let e_p = [-sp, cp, 0.0];
                let n = self.node(r, k);
                for a in 0..3 {
                    out[a][n] = dt[n] * e_t[a] + dp[n] * (e_p[a] / st);
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Null grid and radiation fields

/// Uniform retarded-time window times a sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct NullGrid {
    pub s_min: f64,
    pub s_max: f64,
    pub ns: usize,
    pub sphere: Sphere,
}

impl NullGrid {
    pub fn new(s_min: f64, s_max: f64, ns: usize, sphere: Sphere) -> Result<Self> {
        if ns < 2 || !(s_max > s_min) || !s_min.is_finite() || !s_max.is_finite() {
            return Err(Error::InvalidGrid(format!("s window [{s_min}, {s_max}] with {ns} samples")));
        }
        Ok(NullGrid { s_min, s_max, ns, sphere })
    }

    /// Window `[s_min, s_max]` sampled with step `ds` (rounded to fit).
    pub fn with_step(s_min: f64, s_max: f64, ds: f64, sphere: Sphere) -> Result<Self> {
        let ns = ((s_max - s_min) / ds).round() as usize + 1;
        Self::new(s_min, s_min + (ns - 1) as f64 * ds, ns, sphere)
    }

    pub fn ds(&self) -> f64 {
        (self.s_max - self.s_min) / (self.ns - 1) as f64
    }

    pub fn s(&self, j: usize) -> f64 {
        self.s_min + j as f64 * self.ds()
    }

    pub fn len(&self) -> usize {
        self.ns * self.sphere.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, j: usize, node: usize) -> usize {
        j * self.sphere.len() + node
    }

    pub fn node_of(&self, idx: usize) -> usize {
        idx % self.sphere.len()
    }

    pub fn slice_of(&self, idx: usize) -> usize {
        idx / self.sphere.len()
    }

    /// Trapezoid weight in `s`.
    pub fn s_weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.ns - 1 {
            0.5 * self.ds()
        } else {
            self.ds()
        }
    }

    /// Quadrature weight of `ds dω` at a flat index.
    pub fn weight(&self, idx: usize) -> f64 {
        self.s_weight(self.slice_of(idx)) * self.sphere.weight(self.node_of(idx))
    }

    /// The same grid with the window moved by `shift`.
    pub fn shifted(&self, shift: f64) -> NullGrid {
        NullGrid { s_min: self.s_min + shift, s_max: self.s_max + shift, ..self.clone() }
    }

    /// Same sphere and sample count; windows may differ.
    pub fn compatible(&self, other: &NullGrid) -> bool {
        self.ns == other.ns && self.sphere == other.sphere && (self.ds() - other.ds()).abs() <= 1e-12 * self.ds()
    }
}

/// Unprojected samples `r·φ` on one extraction sphere.
#[derive(Clone, Debug)]
pub struct RawSamples {
    pub radius: f64,
    pub data: Vec<Spinor>,
}

/// Spinor samples on a [`NullGrid`].
#[derive(Clone, Debug)]
pub struct RadiationField {
    pub grid: NullGrid,
    /// `data[j · nodes + node]`.
    pub data: Vec<Spinor>,
    /// Extraction radius `M` (largest radius used).
    pub radius: f64,
    /// Per-sample `|value(M) − value(M')|` against the next radius down.
    pub error_estimate: Vec<f64>,
    /// Future (`Forward`) or past (`Backward`) field.
    pub direction: TimeDirection,
    /// Raw samples per radius, largest last. Empty for derived fields.
    pub raw: Vec<RawSamples>,
}

impl RadiationField {
    pub fn zeros(grid: NullGrid, radius: f64) -> Self {
        let n = grid.len();
        RadiationField {
            grid,
            data: vec![Spinor::ZERO; n],
            radius,
            error_estimate: vec![0.0; n],
            direction: TimeDirection::Forward,
            raw: Vec::new(),
        }
    }

    pub fn clone_zeroed(&self) -> Self {
        let mut z = Self::zeros(self.grid.clone(), self.radius);
        z.direction = self.direction;
        z
    }

    /// `±ω` selecting the retained projector `P(±ω)`.
    pub fn good_sign(&self) -> f64 {
        self.direction.sign()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().enumerate().map(|(i, v)| self.grid.weight(i) * v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `∫∫ ⟨self, other⟩ ds dω`.
    pub fn dot(&self, other: &RadiationField) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .enumerate()
            .map(|(i, (a, b))| crate::clifford::inner(a, b) * self.grid.weight(i))
            .sum()
    }

    pub fn axpy(&mut self, a: C64, other: &RadiationField) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += *y * a;
        }
    }

    pub fn scale(&mut self, a: C64) {
        for x in self.data.iter_mut() {
            *x = *x * a;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|s| s.max_abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|s| s.is_finite()) && self.error_estimate.iter().all(|e| e.is_finite() && *e >= 0.0)
    }

    /// `‖self − other‖ / ‖other‖` (absolute when `other` vanishes).
    pub fn rel_diff(&self, other: &RadiationField) -> f64 {
        let mut d = self.clone();
        d.axpy(C64::new(-1.0, 0.0), other);
        let n = other.norm();
        if n == 0.0 {
            d.norm()
        } else {
            d.norm() / n
        }
    }

    /// `(∫∫ err² ds dω)^{1/2}`.
    pub fn error_norm(&self) -> f64 {
        self.error_estimate.iter().enumerate().map(|(i, e)| self.grid.weight(i) * e * e).sum::<f64>().sqrt()
    }

    /// Applies `P(±ω)` to every sample.
    pub fn project(&mut self) {
        let sg = self.good_sign();
        let ng = &self.grid;
        for (i, v) in self.data.iter_mut().enumerate() {
            let w = ng.sphere.dir(ng.node_of(i));
            *v = apply_projector([sg * w[0], sg * w[1], sg * w[2]], v);
        }
    }

    /// `max |P(∓ω)F|`; zero up to rounding after [`project`](Self::project).
    pub fn membership_defect(&self) -> f64 {
        let sg = -self.good_sign();
        let ng = &self.grid;
        self.data
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let w = ng.sphere.dir(ng.node_of(i));
                apply_projector([sg * w[0], sg * w[1], sg * w[2]], v).max_abs()
            })
            .fold(0.0, f64::max)
    }

    /// `‖P(∓ω) raw‖ / ‖raw‖` for the raw samples at radius index `k`.
    pub fn bad_fraction(&self, k: usize) -> Option<f64> {
        let raw = self.raw.get(k)?;
        let sg = -self.good_sign();
        let ng = &self.grid;
        let (mut bad, mut all) = (0.0, 0.0);
        for (i, v) in raw.data.iter().enumerate() {
            let w = ng.sphere.dir(ng.node_of(i));
            let q = ng.weight(i);
            bad += q * apply_projector([sg * w[0], sg * w[1], sg * w[2]], v).norm_sqr();
            all += q * v.norm_sqr();
        }
        Some(if all == 0.0 { 0.0 } else { (bad / all).sqrt() })
    }

    /// Projected raw samples at radius index `k` as a field of their own.
    pub fn at_radius(&self, k: usize) -> Option<RadiationField> {
        let raw = self.raw.get(k)?;
        let mut f = self.clone_zeroed();
        f.radius = raw.radius;
        f.data = raw.data.clone();
        f.project();
        Some(f)
    }

    /// `∂_s` by 4th-order differences: centred inside the window, one-sided
    /// on the two end slices at each side. Windows shorter than five
    /// samples fall back to second-order differences.
    pub fn d_s(&self) -> Vec<Spinor> {
        let ng = &self.grid;
        let nodes = ng.sphere.len();
        let ns = ng.ns;
        let at = |j: usize, node: usize| self.data[j * nodes + node];
        let combo = |node: usize, js: [usize; 5], c: [f64; 5], scale: f64| {
            let mut acc = Spinor::ZERO;
            for (j, w) in js.iter().zip(c) {
                if w != 0.0 {
                    acc += at(*j, node) * w;
                }
            }
            acc * scale
        };
        (0..self.data.len())
            .map(|i| {
                let j = ng.slice_of(i);
                let n = ng.node_of(i);
                if ns < 5 {
                    let inv = 1.0 / ng.ds();
                    return match (j, ns) {
                        (_, 1) => Spinor::ZERO,
                        (0, _) => (at(1, n) - at(0, n)) * inv,
                        (j, ns) if j == ns - 1 => (at(j, n) - at(j - 1, n)) * inv,
                        (j, _) => (at(j + 1, n) - at(j - 1, n)) * (0.5 * inv),
                    };
                }
                let inv = 1.0 / (12.0 * ng.ds());
                const EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
                const EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
                match j {
                    0 => combo(n, [0, 1, 2, 3, 4], EDGE0, inv),
                    1 => combo(n, [0, 1, 2, 3, 4], EDGE1, inv),
                    j if j == ns - 1 => combo(n, [j, j - 1, j - 2, j - 3, j - 4], EDGE0, -inv),
                    j if j == ns - 2 => combo(n, [j + 1, j, j - 1, j - 2, j - 3], EDGE1, -inv),
                    j => combo(n, [j - 2, j - 1, j, j + 1, j + 2], [1.0, -8.0, 0.0, 8.0, -1.0], inv),
                }
            })
            .collect()
    }

    /// `s∂_s`.
    pub fn s_d_s(&self) -> Vec<Spinor> {
        let ng = &self.grid;
        self.d_s().into_iter().enumerate().map(|(i, v)| v * ng.s(ng.slice_of(i))).collect()
    }

    /// Tangential gradient, slice by slice.
    pub fn tangential_gradient(&self) -> [Vec<Spinor>; 3] {
        let ng = &self.grid;
        let nodes = ng.sphere.len();
        let mut out = [Vec::with_capacity(self.data.len()), Vec::with_capacity(self.data.len()), Vec::with_capacity(self.data.len())];
        let slices: Vec<[Vec<Spinor>; 3]> = self
            .data
            .par_chunks(nodes)
            .map(|slice| ng.sphere.tangential_gradient(slice))
            .collect();
        for g in slices {
            for a in 0..3 {
                out[a].extend_from_slice(&g[a]);
            }
        }
        out
    }

    /// Cubic Lagrange value at retarded time `s` (zero outside the window).
    pub fn value_at(&self, s: f64, node: usize) -> Spinor {
        let ng = &self.grid;
        let u = (s - ng.s_min) / ng.ds();
        let j0 = u.round();
        if (u - j0).abs() < 1e-9 {
            let j = j0 as i64;
            return if j < 0 || j >= ng.ns as i64 { Spinor::ZERO } else { self.data[ng.index(j as usize, node)] };
        }
        let base = u.floor();
        let w = cubic_weights(u - base);
        let mut acc = Spinor::ZERO;
        for (a, wa) in w.iter().enumerate() {
            let j = base as i64 + a as i64 - 1;
            if j >= 0 && j < ng.ns as i64 {
                acc += self.data[ng.index(j as usize, node)] * *wa;
            }
        }
        acc
    }

    /// `(s, ∫|F|² dω, max |P(∓ω)F|)` per slice.
    pub fn slice_summary(&self) -> Vec<(f64, f64, f64)> {
        let ng = &self.grid;
        let nodes = ng.sphere.len();
        let sg = -self.good_sign();
        (0..ng.ns)
            .map(|j| {
                let mut e = 0.0;
                let mut d: f64 = 0.0;
                for node in 0..nodes {
                    let v = self.data[ng.index(j, node)];
                    let w = ng.sphere.dir(node);
                    e += ng.sphere.weight(node) * v.norm_sqr();
                    d = d.max(apply_projector([sg * w[0], sg * w[1], sg * w[2]], &v).max_abs());
                }
                (ng.s(j), e, d)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Extraction

/// Time at which the ray with retarded time `s` reaches radius `r`.
pub fn ray_time(direction: TimeDirection, r: f64, s: f64) -> f64 {
    match direction {
        TimeDirection::Forward => s + r,
        TimeDirection::Backward => s - r,
    }
}

fn sphere_stencils(grid: &Grid, sphere: &Sphere, r: f64) -> Result<Vec<Stencil>> {
    (0..sphere.len())
        .map(|node| {
            let w = sphere.dir(node);
            stencil(grid, [r * w[0], r * w[1], r * w[2]])
        })
        .collect()
}

fn sample_sphere(field: &SpinorField, stencils: &[Stencil], r: f64) -> Vec<Spinor> {
    stencils.par_iter().map(|st| st.apply(field) * r).collect()
}

fn validate_radii(grid: &Grid, radii: &[f64]) -> Result<Vec<f64>> {
    if radii.is_empty() {
        return Err(Error::InvalidConfig("at least one extraction radius is required".into()));
    }
    let mut r = radii.to_vec();
    r.sort_by(f64::total_cmp);
    r.dedup();
    if r[0] <= 0.0 || r[r.len() - 1] >= 0.5 * grid.length() {
        return Err(Error::InvalidConfig(format!("radii {r:?} must lie in (0, L/2)")));
    }
    Ok(r)
}

/// Checks the ray-time window of every radius against a run starting at
/// `t_start` with the given image horizon function.
fn check_window(
    ng: &NullGrid,
    radii: &[f64],
    direction: TimeDirection,
    t_start: f64,
    horizon: impl Fn(f64) -> f64,
) -> Result<()> {
    let m = radii[radii.len() - 1];
    for &r in radii {
        for s in [ng.s_min, ng.s_max] {
            let elapsed = (ray_time(direction, r, s) - t_start) * direction.sign();
            if elapsed > horizon(r) + 1e-9 {
                return Err(Error::Containment(format!(
                    "ray (s = {s}, r = {r}) at elapsed time {elapsed} exceeds the image horizon {}",
                    horizon(r)
                )));
            }
        }
    }
    let elapsed = (ray_time(direction, m, ng.s_min) - t_start) * direction.sign();
    if elapsed < 0.5 * m - 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "window starts at elapsed time {elapsed} < M/2 = {}; rays are not in the wave zone",
            0.5 * m
        )));
    }
    Ok(())
}

fn assemble(ng: &NullGrid, radii: &[f64], raw: Vec<Vec<Spinor>>, direction: TimeDirection) -> RadiationField {
    let m = radii[radii.len() - 1];
    let mut f = RadiationField::zeros(ng.clone(), m);
    f.direction = direction;
    f.raw = radii.iter().zip(raw).map(|(r, data)| RawSamples { radius: *r, data }).collect();
    f.data = f.raw.last().expect("one radius").data.clone();
    f.project();
    if let Some(second) = f.at_radius(f.raw.len().wrapping_sub(2)) {
        f.error_estimate = f.data.iter().zip(&second.data).map(|(a, b)| (*a - *b).norm()).collect();
    }
    f
}

/// Extracts the radiation field of a stored run at the given radii.
///
/// The field is sampled at `r·φ(s ± r, rω)` by exact spectral propagation
/// (free runs) or cubic snapshot interpolation, then tricubic interpolation
/// in space. The value is `P(±ω)` of the largest-radius sample.
pub fn extract(run: &RunHandle, ng: &NullGrid, radii: &[f64]) -> Result<RadiationField> {
    let grid = run.grid();
    let radii = validate_radii(&grid, radii)?;
    let direction = run.config.direction;
    let t_start = run.initial().time;
    check_window(ng, &radii, direction, t_start, |r| run.image_horizon(r))?;
    let nodes = ng.sphere.len();
    let mut raw = Vec::with_capacity(radii.len());
    for &r in &radii {
        let st = sphere_stencils(&grid, &ng.sphere, r)?;
        let mut data = vec![Spinor::ZERO; ng.len()];
        for j in 0..ng.ns {
            let field = run.field_at(ray_time(direction, r, ng.s(j)))?;
            data[j * nodes..(j + 1) * nodes].copy_from_slice(&sample_sphere(&field, &st, r));
        }
        raw.push(data);
    }
    Ok(assemble(ng, &radii, raw, direction))
}

/// Extraction of the free solution with data `phi0` posed at time `t_emit`,
/// propagated exactly in Fourier space. Samples whose ray time precedes
/// `t_emit` are zero. No window checks are made.
pub fn extract_free(
    phi0: &SpinorField,
    t_emit: f64,
    ng: &NullGrid,
    radii: &[f64],
    direction: TimeDirection,
) -> Result<RadiationField> {
    let grid = phi0.grid;
    let radii = validate_radii(&grid, radii)?;
    let nodes = ng.sphere.len();
    let sign = direction.sign();
    // (elapsed, radius index, slice)
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        for j in 0..ng.ns {
            let e = (ray_time(direction, r, ng.s(j)) - t_emit) * sign;
            if e >= -1e-12 {
                events.push((e.max(0.0), ri, j));
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let stencils: Vec<Vec<Stencil>> = radii.iter().map(|&r| sphere_stencils(&grid, &ng.sphere, r)).collect::<Result<_>>()?;
    let mut raw = vec![vec![Spinor::ZERO; ng.len()]; radii.len()];
    let mut hat = to_fourier(phi0);
    let mut e_cur = 0.0;
    let mut i = 0;
    while i < events.len() {
        let e = events[i].0;
        if e - e_cur > 1e-12 {
            propagate_fourier(grid, &mut hat, sign * (e - e_cur));
            e_cur = e;
        }
        let field = from_fourier(grid, t_emit + sign * e, hat.clone());
        while i < events.len() && events[i].0 - e <= 1e-12 {
            let (_, ri, j) = events[i];
            let r = radii[ri];
            raw[ri][j * nodes..(j + 1) * nodes].copy_from_slice(&sample_sphere(&field, &stencils[ri], r));
            i += 1;
        }
    }
    Ok(assemble(ng, &radii, raw, direction))
}

/// Streaming extraction attached to [`evolve_observed`](crate::propagate::evolve_observed).
///
/// Ray times are mapped to the step grid with cubic Lagrange weights
/// (a single unit weight when aligned), so no snapshots need be stored.
pub struct RayExtractor {
    ng: NullGrid,
    radii: Vec<f64>,
    direction: TimeDirection,
    t_start: f64,
    dt: f64,
    steps: usize,
    stencils: Vec<Vec<Stencil>>,
    /// Per step: `(radius index, slice, weight)`.
    plan: Vec<Vec<(usize, usize, f64)>>,
    raw: Vec<Vec<Spinor>>,
}

impl RayExtractor {
    /// Plans extraction for a run of `cfg` starting at `t_start` from data
    /// of effective radius `data_radius`. With `causal`, rays before the
    /// start sample zero instead of failing.
    pub fn new(
        grid: Grid,
        ng: &NullGrid,
        radii: &[f64],
        cfg: &EvolveConfig,
        t_start: f64,
        data_radius: f64,
        causal: bool,
    ) -> Result<Self> {
        let radii = validate_radii(&grid, radii)?;
        let direction = cfg.direction;
        if !causal {
            check_window(ng, &radii, direction, t_start, |r| grid.length() - r - data_radius)?;
        }
        let steps = cfg.steps();
        let dt = cfg.dt;
        let mut plan = vec![Vec::new(); steps + 1];
        for (ri, &r) in radii.iter().enumerate() {
            for j in 0..ng.ns {
                let u = (ray_time(direction, r, ng.s(j)) - t_start) * direction.sign() / dt;
                if u < -1e-9 {
                    if causal {
                        continue;
                    }
                    return Err(Error::TimeOutOfRange { t: ray_time(direction, r, ng.s(j)), lo: t_start, hi: t_start });
                }
                if u > steps as f64 + 1e-9 {
                    return Err(Error::TimeOutOfRange {
                        t: ray_time(direction, r, ng.s(j)),
                        lo: t_start,
                        hi: t_start + direction.sign() * steps as f64 * dt,
                    });
                }
                let k = u.round();
                if (u - k).abs() < 1e-9 {
                    plan[k as usize].push((ri, j, 1.0));
                    continue;
                }
                if steps < 3 {
                    return Err(Error::Snapshots(format!("{steps} steps, need 3 for cubic interpolation")));
                }
                let base = (u.floor() as usize).clamp(1, steps - 2);
                let w = cubic_weights(u - base as f64);
                for (a, wa) in w.iter().enumerate() {
                    plan[base + a - 1].push((ri, j, *wa));
                }
            }
        }
        let stencils = radii.iter().map(|&r| sphere_stencils(&grid, &ng.sphere, r)).collect::<Result<_>>()?;
        let raw = vec![vec![Spinor::ZERO; ng.len()]; radii.len()];
        Ok(RayExtractor { ng: ng.clone(), radii, direction, t_start, dt, steps, stencils, plan, raw })
    }

    /// Feeds one step's field.
    pub fn observe(&mut self, field: &SpinorField) -> Result<()> {
        let u = (field.time - self.t_start) * self.direction.sign() / self.dt;
        let k = u.round();
        if (u - k).abs() > 1e-6 || k < 0.0 || k as usize > self.steps {
            return Err(Error::TimeOutOfRange {
                t: field.time,
                lo: self.t_start,
                hi: self.t_start + self.direction.sign() * self.steps as f64 * self.dt,
            });
        }
        let entries = &self.plan[k as usize];
        if entries.is_empty() {
            return Ok(());
        }
        let nodes = self.ng.sphere.len();
        let mut cache: Vec<Option<Vec<Spinor>>> = vec![None; self.radii.len()];
        for &(ri, j, w) in entries {
            let r = self.radii[ri];
            let vals = cache[ri].get_or_insert_with(|| sample_sphere(field, &self.stencils[ri], r));
            for (node, v) in vals.iter().enumerate() {
                self.raw[ri][j * nodes + node] += *v * w;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> RadiationField {
        assemble(&self.ng, &self.radii, self.raw, self.direction)
    }
}

// ---------------------------------------------------------------------------
// Oracles and identities

/// The free solution at an arbitrary `(t, x)` by direct summation of the
/// Fourier series, `φ(t,x) = n^{−3} Σ_k e^{ik·(x + L/2)} U(t,k) φ̂₀(k)`.
pub fn oracle_point_value(phi0: &SpinorField, t: f64, x: [f64; 3]) -> Spinor {
    let grid = phi0.grid;
    let hat = to_fourier(phi0);
    let m = grid.len();
    let shift = 0.5 * grid.length();
    let sum = par_sum(m, Spinor::ZERO, |i| {
        let k = grid.wavevector(i);
        let s = Spinor([hat[i], hat[m + i], hat[2 * m + i], hat[3 * m + i]]);
        let phase = k[0] * (x[0] + shift) + k[1] * (x[1] + shift) + k[2] * (x[2] + shift);
        free_multiplier(k, t, &s) * C64::from_polar(1.0, phase)
    });
    sum * (1.0 / m as f64)
}

/// `|‖F‖² − ‖φ₀‖²| / ‖φ₀‖²`; zero for zero data.
pub fn isometry_defect(f: &RadiationField, phi0: &SpinorField) -> f64 {
    let q = crate::grid::charge(phi0);
    if q == 0.0 {
        return 0.0;
    }
    (f.norm_sqr() - q).abs() / q
}

/// Smallest symmetric window half-width that covers data of radius `r0`
/// and width `sigma`.
pub fn required_half_window(r0: f64, sigma: f64) -> f64 {
    r0 + 6.0 * sigma
}

/// `F(s) = F₀(s) + ∫ F_τ(s − τ) dτ` by the trapezoid rule over the source
/// times. Each `F_τ` is the radiation field of the free solution with data
/// posed at time `τ`; its window may be shifted, but its sphere and `Δs`
/// must match `f0`. The shift is applied by cubic interpolation in `s`.
pub fn duhamel_radiation(f0: &RadiationField, sources: &[(f64, RadiationField)]) -> Result<RadiationField> {
    for (_, f) in sources {
        if !f.grid.compatible(&f0.grid) || (f.radius - f0.radius).abs() > 1e-12 {
            return Err(Error::GridMismatch("source radiation fields must share sphere, step and radius".into()));
        }
    }
    let mut out = f0.clone();
    out.raw.clear();
    if sources.is_empty() {
        return Ok(out);
    }
    let taus: Vec<f64> = sources.iter().map(|(t, _)| *t).collect();
    let weights = trapezoid_weights(&taus)?;
    let ng = f0.grid.clone();
    let nodes = ng.sphere.len();
    for ((tau, f), w) in sources.iter().zip(&weights) {
        let shifted: Vec<(Spinor, f64)> = (0..ng.len())
            .into_par_iter()
            .map(|i| {
                let j = i / nodes;
                let node = i % nodes;
                let s = ng.s(j) - tau;
                (f.value_at(s, node), f.error_at(s, node))
            })
            .collect();
        for (i, (v, e)) in shifted.into_iter().enumerate() {
            out.data[i] += v * *w;
            out.error_estimate[i] += e * w.abs();
        }
    }
    Ok(out)
}

/// Trapezoid weights on increasing, not necessarily uniform nodes.
pub fn trapezoid_weights(ts: &[f64]) -> Result<Vec<f64>> {
    if ts.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidConfig("source times must increase".into()));
    }
    let n = ts.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    Ok((0..n)
        .map(|k| {
            let left = if k > 0 { ts[k] - ts[k - 1] } else { 0.0 };
            let right = if k + 1 < n { ts[k + 1] - ts[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect())
}

impl RadiationField {
    /// Error estimate at `s` (nearest sample, zero outside the window).
    pub fn error_at(&self, s: f64, node: usize) -> f64 {
        let ng = &self.grid;
        let j = ((s - ng.s_min) / ng.ds()).round();
        if j < 0.0 || j as usize >= ng.ns {
            0.0
        } else {
            self.error_estimate[ng.index(j as usize, node)]
        }
    }
}

// ---------------------------------------------------------------------------
// Output

/// Writes `<stem>.meta`, `<stem>.nodes.csv` and `<stem>.bin`.
pub fn write_radiation_dump(f: &RadiationField, stem: &Path, extra: &[(&str, String)]) -> Result<()> {
    let ng = &f.grid;
    let mut meta = String::new();
    let _ = writeln!(meta, "format = \"radiation-field\"");
    let _ = writeln!(meta, "direction = \"{:?}\"", f.direction);
    let _ = writeln!(meta, "s_min = {:.17e}", ng.s_min);
    let _ = writeln!(meta, "s_max = {:.17e}", ng.s_max);
    let _ = writeln!(meta, "ns = {}", ng.ns);
    let _ = writeln!(meta, "n_theta = {}", ng.sphere.n_theta);
    let _ = writeln!(meta, "n_phi = {}", ng.sphere.n_phi);
    let _ = writeln!(meta, "radius = {:.17e}", f.radius);
    let _ = writeln!(meta, "error_norm = {:.17e}", f.error_norm());
    let _ = writeln!(meta, "layout = \"s,node,component\"");
    let _ = writeln!(meta, "scalar = \"complex128 interleaved re,im\"");
    for (k, v) in extra {
        let _ = writeln!(meta, "{k} = \"{v}\"");
    }
    std::fs::write(stem.with_extension("meta"), meta)?;

    let mut nodes = String::from("node,theta,phi,weight,error_norm\n");
    for node in 0..ng.sphere.len() {
        let err: f64 = (0..ng.ns).map(|j| ng.s_weight(j) * f.error_estimate[ng.index(j, node)].powi(2)).sum();
        let (r, k) = (node / ng.sphere.n_phi, node % ng.sphere.n_phi);
        let _ = writeln!(
            nodes,
            "{node},{:.17e},{:.17e},{:.17e},{:.17e}",
            ng.sphere.theta[r],
            ng.sphere.phi[k],
            ng.sphere.weight(node),
            err.sqrt()
        );
    }
    std::fs::write(stem.with_extension("nodes.csv"), nodes)?;

    let mut bytes = Vec::with_capacity(f.data.len() * 64);
    for s in &f.data {
        for z in s.0 {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    std::fs::File::create(stem.with_extension("bin"))?.write_all(&bytes)?;
    Ok(())
}

/// CSV summary: one row per retarded time.
pub fn radiation_summary_csv(f: &RadiationField) -> String {
    let mut out = String::from("s,energy_density,membership_defect\n");
    for (s, e, d) in f.slice_summary() {
        let _ = writeln!(out, "{s:.17e},{e:.17e},{d:.17e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_field, DataSpec};
    use crate::propagate::{evolve, evolve_observed, EvolveConfig};

    fn pol() -> Spinor {
        Spinor::new(C64::new(1.0, 0.0), C64::new(0.0, 0.3), C64::new(0.2, 0.0), C64::new(-0.5, 0.1))
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        for p in 0..14 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            assert!((q - exact).abs() < 1e-14, "degree {p}");
        }
        assert!(x.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn sphere_weights_and_moments() {
        let s = Sphere::new(20, 40).unwrap();
        assert!((s.total_weight() - 4.0 * PI).abs() < 1e-12);
        // ∫ ω_3² dω = 4π/3, ∫ ω_1 ω_2 dω = 0.
        let m33: f64 = (0..s.len()).map(|n| s.weight(n) * s.dir(n)[2].powi(2)).sum();
        let m12: f64 = (0..s.len()).map(|n| s.weight(n) * s.dir(n)[0] * s.dir(n)[1]).sum();
        assert!((m33 - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!(m12.abs() < 1e-13);
    }

    #[test]
    fn tangential_gradient_of_linear_functions() {
        // For f = ω_3, ∂_{ω^i} f = δ_{i3} − ω_i ω_3.
        let s = Sphere::new(24, 48).unwrap();
        let vals: Vec<Spinor> = (0..s.len()).map(|n| Spinor::basis(0) * s.dir(n)[2]).collect();
        let g = s.tangential_gradient(&vals);
        let mut err: f64 = 0.0;
        for n in 0..s.len() {
            let w = s.dir(n);
            for a in 0..3 {
                let want = if a == 2 { 1.0 } else { 0.0 } - w[a] * w[2];
                err = err.max((g[a][n].0[0].re - want).abs());
            }
        }
        assert!(err < 2e-4, "{err}");
        // f = ω_1 exercises ∂_φ and the pole ghosts.
        let vals: Vec<Spinor> = (0..s.len()).map(|n| Spinor::basis(0) * s.dir(n)[0]).collect();
        let g = s.tangential_gradient(&vals);
        let mut err: f64 = 0.0;
        for n in 0..s.len() {
            let w = s.dir(n);
            for a in 0..3 {
                let want = if a == 0 { 1.0 } else { 0.0 } - w[a] * w[0];
                err = err.max((g[a][n].0[0].re - want).abs());
            }
        }
        assert!(err < 2e-4, "{err}");
    }

    #[test]
    fn null_grid_validation() {
        let s = Sphere::new(4, 8).unwrap();
        assert!(NullGrid::new(1.0, 1.0, 10, s.clone()).is_err());
        assert!(NullGrid::new(0.0, 1.0, 1, s.clone()).is_err());
        let ng = NullGrid::new(-1.0, 1.0, 21, s).unwrap();
        assert!((ng.ds() - 0.1).abs() < 1e-15);
        assert!(Sphere::new(4, 7).is_err());
    }

    fn small_setup() -> (Grid, NullGrid, SpinorField) {
        let g = Grid::new(64, 32.0).unwrap();
        let sigma = 4.0 * g.h();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], sigma, pol(), 1.0)).unwrap();
        let ng = NullGrid::with_step(-3.0, 3.0, 0.125, Sphere::new(8, 16).unwrap()).unwrap();
        (g, ng, f)
    }

    #[test]
    fn d_s_exact_on_quartics_up_to_the_window_edges() {
        let ng = NullGrid::new(-1.0, 2.0, 13, Sphere::new(2, 4).unwrap()).unwrap();
        let mut f = RadiationField::zeros(ng.clone(), 1.0);
        let p = |s: f64| 0.3 - s + 0.5 * s * s - 0.25 * s * s * s + 0.125 * s.powi(4);
        let dp = |s: f64| -1.0 + s - 0.75 * s * s + 0.5 * s * s * s;
        for (i, v) in f.data.iter_mut().enumerate() {
            *v = pol() * p(ng.s(ng.slice_of(i)));
        }
        for (i, d) in f.d_s().iter().enumerate() {
            let want = pol() * dp(ng.s(ng.slice_of(i)));
            assert!((*d - want).max_abs() < 1e-12, "slice {}", ng.slice_of(i));
        }
    }

    #[test]
    fn zero_run_gives_zero_field() {
        let (g, ng, _) = small_setup();
        let z = SpinorField::zeros(g, 0.0);
        let f = extract_free(&z, 0.0, &ng, &[3.0, 6.0], TimeDirection::Forward).unwrap();
        assert_eq!(f.max_abs(), 0.0);
        assert_eq!(f.error_norm(), 0.0);
    }

    #[test]
    fn membership_after_projection() {
        let (_, ng, f0) = small_setup();
        let f = extract_free(&f0, 0.0, &ng, &[3.0, 6.0], TimeDirection::Forward).unwrap();
        assert!(f.is_finite());
        assert!(f.membership_defect() < 1e-15 * f.max_abs().max(1.0) * 10.0);
        let b = extract_free(&f0, 0.0, &ng, &[3.0, 6.0], TimeDirection::Backward).unwrap();
        assert!(b.membership_defect() < 1e-14 * b.max_abs().max(1.0));
    }

    #[test]
    fn stored_run_streaming_and_free_extraction_agree() {
        let (g, ng, f0) = small_setup();
        let cfg = EvolveConfig::new(0.125, 9.0).with_snapshot_every(8);
        let radii = [3.0, 6.0];
        let mut ex = RayExtractor::new(g, &ng, &radii, &cfg, 0.0, 0.0, false).unwrap();
        let run = evolve_observed(&f0, &cfg, None, &mut |phi| ex.observe(phi)).unwrap();
        let streamed = ex.finish();
        let stored = extract(&run, &ng, &radii).unwrap();
        let free = extract_free(&f0, 0.0, &ng, &radii, TimeDirection::Forward).unwrap();
        assert!(streamed.rel_diff(&free) < 1e-12);
        assert!(stored.rel_diff(&free) < 1e-12);
    }

    #[test]
    fn extraction_is_linear() {
        let (g, ng, f0) = small_setup();
        let f1 = make_field(g, &DataSpec::gaussian([0.5, -0.5, 0.0], 4.0 * g.h(), Spinor::basis(2), 0.7)).unwrap();
        let mut sum = f0.clone();
        sum.axpy(C64::new(1.0, 0.0), &f1);
        let r = [3.0, 6.0];
        let a = extract_free(&f0, 0.0, &ng, &r, TimeDirection::Forward).unwrap();
        let b = extract_free(&f1, 0.0, &ng, &r, TimeDirection::Forward).unwrap();
        let mut ab = a.clone();
        ab.axpy(C64::new(1.0, 0.0), &b);
        let c = extract_free(&sum, 0.0, &ng, &r, TimeDirection::Forward).unwrap();
        assert!(c.rel_diff(&ab) < 1e-12);
    }

    #[test]
    fn start_time_shifts_retarded_time() {
        let (g, ng, f0) = small_setup();
        let t0 = 1.0;
        let mut late = f0.clone();
        late.time = t0;
        let cfg = EvolveConfig::new(0.125, 10.0).with_snapshot_every(4);
        let run = evolve(&late, &cfg, None).unwrap();
        let shifted = extract(&run, &ng.shifted(t0), &[6.0]).unwrap();
        let base = extract_free(&f0, 0.0, &ng, &[6.0], TimeDirection::Forward).unwrap();
        // F_late(s) = F(s − t0): compare sample by sample on the overlapping grid.
        let d: f64 = shifted.data.iter().zip(&base.data).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-10 * shifted.max_abs().max(1.0), "{d}");
        let _ = g;
    }

    #[test]
    fn window_checks() {
        let (g, ng, f0) = small_setup();
        let run = evolve(&f0, &EvolveConfig::new(0.25, 4.0), None).unwrap();
        assert!(extract(&run, &ng, &[6.0]).is_err());
        assert!(extract(&run, &ng, &[16.5]).is_err());
        let far = NullGrid::with_step(-20.0, 3.0, 0.5, Sphere::new(4, 8).unwrap()).unwrap();
        let cfg = EvolveConfig::new(0.25, 10.0);
        assert!(RayExtractor::new(g, &far, &[6.0], &cfg, 0.0, 0.0, false).is_err());
    }

    #[test]
    fn oracle_matches_nodes_and_plane_waves() {
        let g = Grid::new(16, 10.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.3, 0.0, 0.0], 4.0 * g.h(), pol(), 1.0)).unwrap();
        let idx = g.index(7, 9, 4);
        let v = oracle_point_value(&f, 0.0, g.point(idx));
        assert!((v - f.get(idx)).max_abs() < 1e-13);

        let spec = DataSpec::plane_wave([1, -2, 1], pol(), 1.0);
        let pw = make_field(g, &spec).unwrap();
        let k = spec.wavevector(g.length());
        let (t, x) = (0.73, [0.31, -1.7, 2.2]);
        let want = free_multiplier(k, t, &pol()) * C64::from_polar(1.0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]);
        assert!((oracle_point_value(&pw, t, x) - want).max_abs() < 1e-12);
    }

    #[test]
    fn oracle_agrees_with_interpolated_run() {
        let g = Grid::new(48, 24.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 6.0 * g.h(), pol(), 1.0)).unwrap();
        let run = evolve(&f, &EvolveConfig::new(0.125, 2.0).with_snapshot_every(1), None).unwrap();
        let snaps = &run.snapshots;
        let peak = f.max_abs();
        for (t, x) in [(0.3, [1.1, 0.2, -0.7]), (1.45, [-2.0, 0.9, 0.33])] {
            let a = oracle_point_value(&f, t, x);
            let b = crate::grid::interpolate(&crate::propagate::time_interpolate(snaps, t).unwrap(), x).unwrap();
            assert!((a - b).max_abs() < 1e-3 * peak, "{t}: {}", (a - b).max_abs());
        }
    }

    #[test]
    fn isometry_on_a_small_grid() {
        let g = Grid::new(96, 32.0).unwrap();
        let f0 = make_field(g, &DataSpec::gaussian([0.0; 3], 4.0 * g.h(), pol(), 1.0)).unwrap();
        let ng = NullGrid::with_step(-8.0, 8.0, 0.125, Sphere::new(16, 32).unwrap()).unwrap();
        let f = extract_free(&f0, 0.0, &ng, &[6.0], TimeDirection::Forward).unwrap();
        let d = isometry_defect(&f, &f0);
        assert!(d < 0.05, "{d}");
        assert_eq!(isometry_defect(&f, &SpinorField::zeros(g, 0.0)), 0.0);
    }

    #[test]
    fn duhamel_zero_and_single_source() {
        let (_, ng, f0) = small_setup();
        let r = [6.0];
        let base = extract_free(&f0, 0.0, &ng, &r, TimeDirection::Forward).unwrap();
        assert!(duhamel_radiation(&base, &[]).unwrap().rel_diff(&base) == 0.0);
        // One source at τ = 0.5 with window shifted by τ: the result is base + shifted copy.
        let tau = 0.5;
        let src = extract_free(&f0, tau, &ng, &r, TimeDirection::Forward).unwrap();
        let src_local = extract_free(&f0, 0.0, &ng.shifted(-tau), &r, TimeDirection::Forward).unwrap();
        let z = RadiationField::zeros(ng.clone(), 6.0);
        let out = duhamel_radiation(&z, &[(tau, src_local)]).unwrap();
        assert!(out.rel_diff(&src) < 1e-12);
    }

    #[test]
    fn trapezoid_weights_sum_to_span() {
        let w = trapezoid_weights(&[0.0, 0.5, 1.0, 2.0]).unwrap();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-15);
        assert!(trapezoid_weights(&[1.0, 0.0]).is_err());
    }
}
