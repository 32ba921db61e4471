//! Periodic grid, C⁴-valued fields, spectral derivatives and tricubic
//! interpolation.
//!
//! Coordinates are origin-centred: node `i` sits at `x_i = −L/2 + i·h`.
//! Field storage is component-major, `[component][z][y][x]`, so each
//! component is a contiguous `n³` block ready for a 3-D FFT.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::clifford::{Spinor, C64};
use crate::{Error, Result};

/// A cubic periodic box `[−L/2, L/2)³` with `n` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
}

fn is_fft_friendly(mut n: usize) -> bool {
    for p in [2, 3, 5] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

impl Grid {
    /// `n` must be even, at least 16 and of the form `2^a 3^b 5^c`.
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 16 || n % 2 != 0 || !is_fft_friendly(n) {
            return Err(Error::InvalidGrid(format!("n = {n} must be even, >= 16 and 5-smooth")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("box length {length} must be positive")));
        }
        Ok(Grid { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Number of nodes, `n³`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.h()
    }

    /// Angular wavenumber of FFT bin `i` (the Nyquist bin is negative).
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = if i < self.n / 2 { i as i64 } else { i as i64 - self.n as i64 };
        2.0 * PI * m as f64 / self.length
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.n + y) * self.n + x
    }

    /// `(x, y, z)` integer indices of flat node `idx`.
    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    /// Physical position `(x, y, z)` of flat node `idx`.
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [ix, iy, iz] = self.unflatten(idx);
        [self.coord(ix), self.coord(iy), self.coord(iz)]
    }

    /// Wavevector `(k_x, k_y, k_z)` of flat Fourier bin `idx`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let [ix, iy, iz] = self.unflatten(idx);
        [self.wavenumber(ix), self.wavenumber(iy), self.wavenumber(iz)]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(3)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let half = 0.5 * self.length;
        p.iter().all(|c| *c >= -half && *c <= half)
    }
}

// ---------------------------------------------------------------------------
// FFT

/// Cached 1-D plans for a given length, applied along each axis.
pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    /// Shared plan for length `n`.
    pub fn get(n: usize) -> Arc<Fft3> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("fft cache poisoned");
        map.entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Fft3 { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) })
            })
            .clone()
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        let n = self.n;
        let plane = n * n;
        assert_eq!(data.len(), plane * n);
        let fft = if inverse { &self.inv } else { &self.fwd };
        // x: contiguous rows.
        data.par_chunks_mut(plane).for_each(|p| {
            let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(p, &mut scratch);
        });
        // y: transpose each z-plane, transform rows, transpose back.
        data.par_chunks_mut(plane).for_each(|p| {
            let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
            let mut t = vec![C64::default(); plane];
            for y in 0..n {
                for x in 0..n {
                    t[x * n + y] = p[y * n + x];
                }
            }
            fft.process_with_scratch(&mut t, &mut scratch);
            for y in 0..n {
                for x in 0..n {
                    p[y * n + x] = t[x * n + y];
                }
            }
        });
        // z: gather one y-slab at a time.
        let slabs: Vec<Vec<C64>> = (0..n)
            .into_par_iter()
            .map(|y| {
                let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
                let mut t = vec![C64::default(); plane];
                for z in 0..n {
                    let row = &data[z * plane + y * n..z * plane + y * n + n];
                    for x in 0..n {
                        t[x * n + z] = row[x];
                    }
                }
                fft.process_with_scratch(&mut t, &mut scratch);
                t
            })
            .collect();
        for (y, t) in slabs.iter().enumerate() {
            for z in 0..n {
                let row = &mut data[z * plane + y * n..z * plane + y * n + n];
                for x in 0..n {
                    row[x] = t[x * n + z];
                }
            }
        }
        if inverse {
            let s = 1.0 / (plane * n) as f64;
            data.par_iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Unnormalized forward transform of one `n³` block.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, false);
    }

    /// Inverse transform of one `n³` block, including the `1/n³` factor.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, true);
    }
}

// ---------------------------------------------------------------------------
// Fields

/// A C⁴-valued field on the grid at time `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub grid: Grid,
    pub time: f64,
    /// `4·n³` values, layout `[component][z][y][x]`.
    pub data: Vec<C64>,
}

impl SpinorField {
    pub fn zeros(grid: Grid, time: f64) -> Self {
        SpinorField { grid, time, data: vec![C64::default(); 4 * grid.len()] }
    }

    pub fn component(&self, c: usize) -> &[C64] {
        let m = self.grid.len();
        &self.data[c * m..(c + 1) * m]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [C64] {
        let m = self.grid.len();
        &mut self.data[c * m..(c + 1) * m]
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Spinor {
        let m = self.grid.len();
        Spinor([self.data[idx], self.data[m + idx], self.data[2 * m + idx], self.data[3 * m + idx]])
    }

    #[inline]
    pub fn set(&mut self, idx: usize, s: Spinor) {
        let m = self.grid.len();
        for c in 0..4 {
            self.data[c * m + idx] = s.0[c];
        }
    }

    /// Builds a field by evaluating `f` at every node position.
    pub fn from_fn(grid: Grid, time: f64, f: impl Fn([f64; 3]) -> Spinor + Sync) -> Self {
        let m = grid.len();
        let vals: Vec<Spinor> = (0..m).into_par_iter().map(|i| f(grid.point(i))).collect();
        Self::from_spinors(grid, time, &vals)
    }

    pub fn from_spinors(grid: Grid, time: f64, vals: &[Spinor]) -> Self {
        let m = grid.len();
        assert_eq!(vals.len(), m);
        let mut data = vec![C64::default(); 4 * m];
        for (c, block) in data.chunks_mut(m).enumerate() {
            for (d, s) in block.iter_mut().zip(vals) {
                *d = s.0[c];
            }
        }
        SpinorField { grid, time, data }
    }

    /// Applies `f(x, φ(x))` at every node, in place.
    pub fn map_points(&mut self, f: impl Fn([f64; 3], Spinor) -> Spinor + Sync) {
        let grid = self.grid;
        let vals: Vec<Spinor> = (0..grid.len()).into_par_iter().map(|i| f(grid.point(i), self.get(i))).collect();
        *self = Self::from_spinors(grid, self.time, &vals);
    }

    /// Combines two fields pointwise.
    pub fn zip_map(&self, other: &SpinorField, f: impl Fn([f64; 3], Spinor, Spinor) -> Spinor + Sync) -> SpinorField {
        assert_eq!(self.grid, other.grid);
        let grid = self.grid;
        let vals: Vec<Spinor> =
            (0..grid.len()).into_par_iter().map(|i| f(grid.point(i), self.get(i), other.get(i))).collect();
        Self::from_spinors(grid, self.time, &vals)
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.grid.len()).into_par_iter().map(|i| self.get(i).norm()).reduce(|| 0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.par_iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `self += a·other`.
    pub fn axpy(&mut self, a: C64, other: &SpinorField) {
        assert_eq!(self.grid, other.grid);
        self.data.par_iter_mut().zip(&other.data).for_each(|(x, y)| *x += a * y);
    }

    pub fn scale(&mut self, a: C64) {
        self.data.par_iter_mut().for_each(|x| *x *= a);
    }

    /// `h³ Σ conj(a)·b`.
    pub fn dot(&self, other: &SpinorField) -> C64 {
        assert_eq!(self.grid, other.grid);
        let s = par_sum(self.data.len(), C64::new(0.0, 0.0), |i| self.data[i].conj() * other.data[i]);
        s * self.grid.cell_volume()
    }

    /// Relative L² distance `‖self − other‖/‖other‖`.
    pub fn rel_diff(&self, other: &SpinorField) -> f64 {
        let d = par_sum(self.data.len(), 0.0, |i| (self.data[i] - other.data[i]).norm_sqr());
        let r = par_sum(other.data.len(), 0.0, |i| other.data[i].norm_sqr());
        if r == 0.0 {
            d.sqrt()
        } else {
            (d / r).sqrt()
        }
    }

    /// Containment flag: every node with `|φ| > 1e−10·max|φ|` lies within
    /// radius `0.45·L` of the origin.
    pub fn contained(&self) -> bool {
        self.support_radius(1e-10) <= 0.45 * self.grid.length
    }

    /// Largest `|x|` over nodes with `|φ(x)| > rel·max|φ|` (0 for a zero field).
    pub fn support_radius(&self, rel: f64) -> f64 {
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        let thr = rel * max;
        (0..self.grid.len())
            .into_par_iter()
            .filter(|&i| self.get(i).norm() > thr)
            .map(|i| {
                let p = self.grid.point(i);
                (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Block length of the parallel reductions. Fixed, so that sums do not
/// depend on the thread count or on work stealing.
const SUM_BLOCK: usize = 4096;

/// Sum of `f(i)` over `0..n`, parallel over fixed blocks and combined in
/// index order; bit-reproducible for any pool size.
pub fn par_sum<T, F>(n: usize, zero: T, f: F) -> T
where
    T: Copy + Send + Sync + std::ops::Add<Output = T>,
    F: Fn(usize) -> T + Sync,
{
    let parts: Vec<T> = (0..n.div_ceil(SUM_BLOCK))
        .into_par_iter()
        .map(|b| (b * SUM_BLOCK..((b + 1) * SUM_BLOCK).min(n)).fold(zero, |acc, i| acc + f(i)))
        .collect();
    parts.into_iter().fold(zero, |a, b| a + b)
}

/// Fourier coefficients of every component (unnormalized forward FFT).
pub fn to_fourier(field: &SpinorField) -> Vec<C64> {
    let fft = Fft3::get(field.grid.n());
    let mut d = field.data.clone();
    for block in d.chunks_mut(field.grid.len()) {
        fft.forward(block);
    }
    d
}

/// Inverse of [`to_fourier`].
pub fn from_fourier(grid: Grid, time: f64, mut hat: Vec<C64>) -> SpinorField {
    let fft = Fft3::get(grid.n());
    for block in hat.chunks_mut(grid.len()) {
        fft.inverse(block);
    }
    SpinorField { grid, time, data: hat }
}

/// `h³ Σ|φ|²`.
pub fn charge(field: &SpinorField) -> f64 {
    let s = par_sum(field.data.len(), 0.0, |i| field.data[i].norm_sqr());
    s * field.grid.cell_volume()
}

/// Charge evaluated on the Fourier side, `(h³/n³) Σ_k |φ̂(k)|²`.
pub fn charge_fourier(field: &SpinorField) -> f64 {
    let hat = to_fourier(field);
    let s = par_sum(hat.len(), 0.0, |i| hat[i].norm_sqr());
    s * field.grid.cell_volume() / field.grid.len() as f64
}

/// Spectral derivative `∂_axis`, `axis ∈ {1, 2, 3}` for `x, y, z`.
pub fn derivative(field: &SpinorField, axis: usize) -> Result<SpinorField> {
    if !(1..=3).contains(&axis) {
        return Err(Error::IndexOutOfRange { what: "axis", index: axis });
    }
    let grid = field.grid;
    let mut hat = to_fourier(field);
    let m = grid.len();
    for block in hat.chunks_mut(m) {
        block.par_iter_mut().enumerate().for_each(|(i, v)| {
            let k = grid.wavevector(i)[axis - 1];
            *v *= C64::new(0.0, k);
        });
    }
    Ok(from_fourier(grid, field.time, hat))
}

/// All three spectral derivatives from one forward transform.
pub fn gradient(field: &SpinorField) -> [SpinorField; 3] {
    let grid = field.grid;
    let hat = to_fourier(field);
    gradient_from_fourier(grid, field.time, &hat)
}

pub fn gradient_from_fourier(grid: Grid, time: f64, hat: &[C64]) -> [SpinorField; 3] {
    let m = grid.len();
    std::array::from_fn(|a| {
        let mut d = hat.to_vec();
        for block in d.chunks_mut(m) {
            block.par_iter_mut().enumerate().for_each(|(i, v)| {
                *v *= C64::new(0.0, grid.wavevector(i)[a]);
            });
        }
        from_fourier(grid, time, d)
    })
}

// ---------------------------------------------------------------------------
// Interpolation

/// Cubic Lagrange weights on nodes `−1, 0, 1, 2` for fractional offset `f`.
#[inline]
pub fn cubic_weights(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

/// The 64 node indices and weights of a tricubic interpolation stencil.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub idx: [u32; 64],
    pub w: [f64; 64],
}

/// Tricubic stencil at `p`; indices wrap periodically.
pub fn stencil(grid: &Grid, p: [f64; 3]) -> Result<Stencil> {
    if !grid.contains(p) || p.iter().any(|c| !c.is_finite()) {
        return Err(Error::OutsideBox(p));
    }
    let n = grid.n() as i64;
    let h = grid.h();
    let mut base = [0i64; 3];
    let mut ws = [[0.0; 4]; 3];
    for a in 0..3 {
        let u = (p[a] + 0.5 * grid.length()) / h;
        let i0 = u.floor();
        base[a] = i0 as i64;
        ws[a] = cubic_weights(u - i0);
    }
    let wrap = |i: i64| i.rem_euclid(n) as usize;
    let mut st = Stencil { idx: [0; 64], w: [0.0; 64] };
    let mut k = 0;
    for dz in 0..4 {
        let iz = wrap(base[2] + dz as i64 - 1);
        for dy in 0..4 {
            let iy = wrap(base[1] + dy as i64 - 1);
            let wzy = ws[2][dz] * ws[1][dy];
            for dx in 0..4 {
                let ix = wrap(base[0] + dx as i64 - 1);
                st.idx[k] = grid.index(iz, iy, ix) as u32;
                st.w[k] = wzy * ws[0][dx];
                k += 1;
            }
        }
    }
    Ok(st)
}

impl Stencil {
    #[inline]
    pub fn apply(&self, field: &SpinorField) -> Spinor {
        let m = field.grid.len();
        let mut out = Spinor::ZERO;
        for c in 0..4 {
            let comp = &field.data[c * m..(c + 1) * m];
            let mut acc = C64::default();
            for k in 0..64 {
                acc += comp[self.idx[k] as usize] * self.w[k];
            }
            out.0[c] = acc;
        }
        out
    }

    /// Transpose action: scatters `v` into `field` with the stencil weights.
    #[inline]
    pub fn scatter(&self, v: &Spinor, field: &mut SpinorField) {
        let m = field.grid.len();
        for c in 0..4 {
            let comp = &mut field.data[c * m..(c + 1) * m];
            for k in 0..64 {
                comp[self.idx[k] as usize] += v.0[c] * self.w[k];
            }
        }
    }
}

/// Tricubic interpolation of `field` at `p`.
pub fn interpolate(field: &SpinorField, p: [f64; 3]) -> Result<Spinor> {
    Ok(stencil(&field.grid, p)?.apply(field))
}

// ---------------------------------------------------------------------------
// Initial data

/// Analytic profile family for initial data and sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Gaussian,
    Bump,
    PlaneWaveMode,
}

/// Description of an analytic spinor profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub kind: DataKind,
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub polarization: Spinor,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Integer lattice mode `(m_x, m_y, m_z)`; the wavevector is `2π m / L`.
    #[serde(default)]
    pub mode: [i64; 3],
}

fn default_sigma() -> f64 {
    1.0
}

fn default_amplitude() -> f64 {
    1.0
}

impl DataSpec {
    pub fn gaussian(center: [f64; 3], sigma: f64, polarization: Spinor, amplitude: f64) -> Self {
        DataSpec { kind: DataKind::Gaussian, center, sigma, polarization, amplitude, mode: [0; 3] }
    }

    pub fn bump(center: [f64; 3], sigma: f64, polarization: Spinor, amplitude: f64) -> Self {
        DataSpec { kind: DataKind::Bump, center, sigma, polarization, amplitude, mode: [0; 3] }
    }

    pub fn plane_wave(mode: [i64; 3], polarization: Spinor, amplitude: f64) -> Self {
        DataSpec { kind: DataKind::PlaneWaveMode, center: [0.0; 3], sigma: 1.0, polarization, amplitude, mode }
    }

    /// Radius outside which the profile is negligible (≈1e−16 relative).
    pub fn radius(&self) -> f64 {
        let c = self.center;
        let r0 = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        match self.kind {
            DataKind::Gaussian => r0 + 8.6 * self.sigma,
            DataKind::Bump => r0 + 4.0 * self.sigma,
            DataKind::PlaneWaveMode => f64::INFINITY,
        }
    }

    /// Evaluates the profile at `x` (the plane wave uses the grid length).
    pub fn eval(&self, x: [f64; 3], length: f64) -> Spinor {
        let d = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let a = match self.kind {
            DataKind::Gaussian => C64::new(self.amplitude * (-r2 / (2.0 * self.sigma * self.sigma)).exp(), 0.0),
            DataKind::Bump => {
                let rho2 = r2 / (16.0 * self.sigma * self.sigma);
                if rho2 >= 1.0 {
                    C64::default()
                } else {
                    C64::new(self.amplitude * (1.0 - 1.0 / (1.0 - rho2)).exp(), 0.0)
                }
            }
            DataKind::PlaneWaveMode => {
                let k = self.wavevector(length);
                let ph = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                C64::from_polar(self.amplitude, ph)
            }
        };
        self.polarization * a
    }

    pub fn wavevector(&self, length: f64) -> [f64; 3] {
        self.mode.map(|m| 2.0 * PI * m as f64 / length)
    }
}

/// Samples `spec` on the grid at `t = 0`.
pub fn make_field(grid: Grid, spec: &DataSpec) -> Result<SpinorField> {
    match spec.kind {
        DataKind::Gaussian | DataKind::Bump => {
            if spec.sigma < 4.0 * grid.h() * (1.0 - 1e-9) {
                return Err(Error::Unresolved(format!("sigma {} below 4h = {}", spec.sigma, 4.0 * grid.h())));
            }
        }
        DataKind::PlaneWaveMode => {
            let lim = (grid.n() / 2) as i64;
            if spec.mode.iter().any(|m| m.abs() >= lim) {
                return Err(Error::Unresolved(format!("mode {:?} at or beyond Nyquist", spec.mode)));
            }
        }
    }
    if !spec.polarization.is_finite() || !spec.amplitude.is_finite() {
        return Err(Error::Unresolved("non-finite polarization or amplitude".into()));
    }
    let l = grid.length();
    Ok(SpinorField::from_fn(grid, 0.0, |x| spec.eval(x, l)))
}

/// Sum of several profiles.
pub fn make_superposition(grid: Grid, specs: &[DataSpec]) -> Result<SpinorField> {
    let mut f = SpinorField::zeros(grid, 0.0);
    for s in specs {
        f.axpy(C64::new(1.0, 0.0), &make_field(grid, s)?);
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Dumps

/// Writes `<stem>.meta` (key = value text) and `<stem>.bin` (raw
/// little-endian f64 pairs in `[component][z][y][x]` order).
pub fn write_dump(field: &SpinorField, stem: &Path, extra: &[(&str, String)]) -> Result<()> {
    let mut meta = String::new();
    let _ = writeln!(meta, "format = \"spinor-field\"");
    let _ = writeln!(meta, "n = {}", field.grid.n());
    let _ = writeln!(meta, "length = {:.17e}", field.grid.length());
    let _ = writeln!(meta, "time = {:.17e}", field.time);
    let _ = writeln!(meta, "layout = \"component,z,y,x\"");
    let _ = writeln!(meta, "scalar = \"complex128 interleaved re,im\"");
    let _ = writeln!(meta, "endianness = \"little\"");
    for (k, v) in extra {
        let _ = writeln!(meta, "{k} = \"{v}\"");
    }
    std::fs::write(stem.with_extension("meta"), meta)?;
    let mut bytes = Vec::with_capacity(field.data.len() * 16);
    for z in &field.data {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    let mut f = std::fs::File::create(stem.with_extension("bin"))?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Reads the binary part of a dump back for a known grid and time.
pub fn read_dump(grid: Grid, time: f64, stem: &Path) -> Result<SpinorField> {
    let bytes = std::fs::read(stem.with_extension("bin"))?;
    if bytes.len() != 64 * grid.len() {
        return Err(Error::GridMismatch(format!("dump has {} bytes, expected {}", bytes.len(), 64 * grid.len())));
    }
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect();
    Ok(SpinorField { grid, time, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pol() -> Spinor {
        Spinor::new(C64::new(1.0, 0.0), C64::new(0.0, 0.3), C64::new(0.2, 0.0), C64::new(-0.5, 0.1))
    }

    fn unit_pol() -> Spinor {
        let p = pol();
        p * (1.0 / p.norm())
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(8, 1.0).is_err());
        assert!(Grid::new(17, 1.0).is_err());
        assert!(Grid::new(14 * 2, 1.0).is_err());
        assert!(Grid::new(96, 40.0).is_ok());
        assert!(Grid::new(32, 0.0).is_err());
    }

    #[test]
    fn fft_round_trip_and_single_mode() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let spec = DataSpec::plane_wave([0, 0, 1], Spinor::basis(0), 1.0);
        let f = make_field(g, &spec).unwrap();
        let hat = to_fourier(&f);
        let m = g.len();
        // Only bin (z=1, y=0, x=0) of component 0 is populated.
        for (i, v) in hat[..m].iter().enumerate() {
            let [ix, iy, iz] = g.unflatten(i);
            let phase_ref = if (ix, iy, iz) == (0, 0, 1) { m as f64 } else { 0.0 };
            assert!((v.norm() - phase_ref).abs() < 1e-9, "bin {i}: {v}");
        }
        let back = from_fourier(g, 0.0, hat);
        assert!(back.rel_diff(&f) < 1e-14);
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let g = Grid::new(16, 16.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 4.0, pol(), 0.0)).unwrap();
        assert_eq!(f.max_abs(), 0.0);
        assert_eq!(charge(&f), 0.0);
    }

    #[test]
    fn resolution_guard() {
        let g = Grid::new(16, 16.0).unwrap();
        assert!(make_field(g, &DataSpec::gaussian([0.0; 3], 3.9, pol(), 1.0)).is_err());
        assert!(make_field(g, &DataSpec::plane_wave([8, 0, 0], pol(), 1.0)).is_err());
    }

    #[test]
    fn gaussian_peak_matches_amplitude() {
        let g = Grid::new(32, 16.0).unwrap();
        let sigma = 4.0 * g.h();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], sigma, unit_pol(), 2.5)).unwrap();
        // The origin is the node (n/2, n/2, n/2).
        let c = g.n() / 2;
        let v = f.get(g.index(c, c, c)).norm();
        assert!((v - 2.5).abs() / 2.5 < 1e-6);
    }

    #[test]
    fn gaussian_charge_closed_form() {
        let g = Grid::new(48, 24.0).unwrap();
        let (a, s) = (1.3, 2.0);
        let f = make_field(g, &DataSpec::gaussian([0.5, -0.2, 0.1], s, unit_pol(), a)).unwrap();
        let want = a * a * (PI * s * s).powf(1.5);
        assert!((charge(&f) - want).abs() / want < 1e-3);
    }

    #[test]
    fn parseval() {
        let g = Grid::new(32, 16.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([1.0, 0.0, -0.5], 2.0, pol(), 1.0)).unwrap();
        let (a, b) = (charge(&f), charge_fourier(&f));
        assert!((a - b).abs() / a < 1e-12);
    }

    #[test]
    fn charge_is_additive_for_disjoint_bumps() {
        let g = Grid::new(96, 32.0).unwrap();
        let b1 = DataSpec::bump([-7.0, 0.0, 0.0], 1.4, pol(), 1.0);
        let b2 = DataSpec::bump([7.0, 0.0, 0.0], 1.4, pol(), 0.7);
        let sum = make_superposition(g, &[b1, b2]).unwrap();
        let lhs = charge(&sum);
        let rhs = charge(&make_field(g, &b1).unwrap()) + charge(&make_field(g, &b2).unwrap());
        assert!((lhs - rhs).abs() / rhs < 1e-12);
    }

    #[test]
    fn derivative_of_constant_and_plane_wave() {
        let g = Grid::new(16, 10.0).unwrap();
        let c = SpinorField::from_fn(g, 0.0, |_| pol());
        assert!(derivative(&c, 2).unwrap().max_abs() < 1e-13);
        let spec = DataSpec::plane_wave([1, -2, 3], pol(), 1.0);
        let f = make_field(g, &spec).unwrap();
        let k = spec.wavevector(g.length());
        for axis in 1..=3 {
            let d = derivative(&f, axis).unwrap();
            let mut want = f.clone();
            want.scale(C64::new(0.0, k[axis - 1]));
            assert!(d.rel_diff(&want) < 1e-12);
        }
        assert!(derivative(&f, 0).is_err());
    }

    #[test]
    fn derivative_of_gaussian_matches_analytic_gradient() {
        let g = Grid::new(64, 24.0).unwrap();
        let sigma = 4.0 * g.h();
        let spec = DataSpec::gaussian([0.3, 0.0, -0.2], sigma, pol(), 1.0);
        let f = make_field(g, &spec).unwrap();
        let d = derivative(&f, 1).unwrap();
        let want = SpinorField::from_fn(g, 0.0, |x| spec.eval(x, g.length()) * (-(x[0] - 0.3) / (sigma * sigma)));
        assert!(d.rel_diff(&want) < 1e-8);
    }

    #[test]
    fn mixed_derivatives_commute() {
        let g = Grid::new(32, 16.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 2.0, pol(), 1.0)).unwrap();
        let a = derivative(&derivative(&f, 1).unwrap(), 2).unwrap();
        let b = derivative(&derivative(&f, 2).unwrap(), 1).unwrap();
        assert!(a.rel_diff(&b) < 1e-12);
    }

    #[test]
    fn interpolation_exact_at_nodes_and_on_linears() {
        let g = Grid::new(16, 8.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 2.0, pol(), 1.0)).unwrap();
        let idx = g.index(5, 9, 3);
        let v = interpolate(&f, g.point(idx)).unwrap();
        assert!((v - f.get(idx)).max_abs() < 1e-15);

        let lin = SpinorField::from_fn(g, 0.0, |x| pol() * (1.0 + 0.5 * x[0] - 0.25 * x[1] + 0.125 * x[2]));
        let p = [0.37, -1.21, 0.93];
        let v = interpolate(&lin, p).unwrap();
        let want = pol() * (1.0 + 0.5 * p[0] - 0.25 * p[1] + 0.125 * p[2]);
        assert!((v - want).max_abs() < 1e-13);
        assert!(interpolate(&lin, [5.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn interpolation_reproduces_constants_and_resolves_lowest_mode() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let c = SpinorField::from_fn(g, 0.0, |_| pol());
        let v = interpolate(&c, [0.1, 0.2, -0.3]).unwrap();
        assert!((v - pol()).max_abs() < 1e-14);
        let spec = DataSpec::plane_wave([1, 0, 0], pol(), 1.0);
        let f = make_field(g, &spec).unwrap();
        let p = [0.123, 0.0, 0.0];
        let v = interpolate(&f, p).unwrap();
        assert!((v - spec.eval(p, g.length())).max_abs() < 1e-5);
    }

    #[test]
    fn tricubic_error_is_fourth_order() {
        let spec = DataSpec::gaussian([0.0; 3], 3.0, unit_pol(), 1.0);
        let mut errs = vec![];
        let mut hs = vec![];
        for n in [32, 48, 64] {
            let g = Grid::new(n, 24.0).unwrap();
            let f = make_field(g, &spec).unwrap();
            let h = g.h();
            let p = [0.5 * h + 0.3, 0.5 * h - 0.7, 0.5 * h + 0.1];
            let e = (interpolate(&f, p).unwrap() - spec.eval(p, 24.0)).norm();
            errs.push(e);
            hs.push(h);
        }
        let p = crate::fit::order(&hs, &errs).unwrap();
        assert!(p > 3.5, "order {p}");
    }

    #[test]
    fn containment_flag() {
        let g = Grid::new(64, 32.0).unwrap();
        let inner = make_field(g, &DataSpec::bump([0.0; 3], 2.0, pol(), 1.0)).unwrap();
        assert!(inner.contained());
        let edge = make_field(g, &DataSpec::bump([13.0, 0.0, 0.0], 2.0, pol(), 1.0)).unwrap();
        assert!(!edge.contained());
    }

    #[test]
    fn dump_round_trip() {
        let g = Grid::new(16, 8.0).unwrap();
        let f = make_field(g, &DataSpec::gaussian([0.0; 3], 2.0, pol(), 1.0)).unwrap();
        let dir = std::env::temp_dir().join(format!("spinrad-dump-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("phi");
        write_dump(&f, &stem, &[("config_hash", "abc".into())]).unwrap();
        let back = read_dump(g, 0.0, &stem).unwrap();
        assert_eq!(back.data, f.data);
        let meta = std::fs::read_to_string(stem.with_extension("meta")).unwrap();
        assert!(meta.contains("config_hash = \"abc\"") && meta.contains("endianness = \"little\""));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
