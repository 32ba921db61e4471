//! Gamma matrices in the Weyl representation, projectors, and spinor null forms.
//!
//! Metric signature is (−,+,+,+), so the Clifford relation reads
//! `γ^μγ^ν + γ^νγ^μ = −2η^{μν} I` and `γ⁰γ⁰ = I`, `γ^iγ^i = −I`.
//!
//! Every matrix carries a float backing and, where the entries are Gaussian
//! rationals, an exact backing as well. Identities are checked on the exact
//! backing; the float backing feeds the numerics.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::symmetry::VectorFieldId;
use crate::Error;

/// Double-precision complex scalar.
pub type C64 = Complex<f64>;
/// Exact Gaussian rational `(a + bi)/d`.
pub type CQ = Complex<Ratio<i64>>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

fn q(n: i64) -> Ratio<i64> {
    Ratio::from_integer(n)
}

fn cq(re: i64, im: i64) -> CQ {
    Complex::new(q(re), q(im))
}

fn cq_to_c64(z: &CQ) -> C64 {
    let f = |r: &Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
    C64::new(f(&z.re), f(&z.im))
}

// ---------------------------------------------------------------------------
// Spinor

/// A value in C⁴.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spinor(pub [C64; 4]);

impl Spinor {
    pub const ZERO: Spinor = Spinor([ZERO; 4]);

    pub fn new(c0: C64, c1: C64, c2: C64, c3: C64) -> Self {
        Spinor([c0, c1, c2, c3])
    }

    /// The k-th standard basis vector.
    pub fn basis(k: usize) -> Self {
        let mut s = Spinor::ZERO;
        s.0[k] = ONE;
        s
    }

    pub fn from_real(v: [f64; 4]) -> Self {
        Spinor(v.map(|x| C64::new(x, 0.0)))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn conj(&self) -> Self {
        Spinor(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, a: C64) -> Self {
        Spinor(self.0.map(|z| z * a))
    }
}

impl Index<usize> for Spinor {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Spinor {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl Add for Spinor {
    type Output = Spinor;
    fn add(mut self, o: Spinor) -> Spinor {
        self += o;
        self
    }
}

impl AddAssign for Spinor {
    fn add_assign(&mut self, o: Spinor) {
        for k in 0..4 {
            self.0[k] += o.0[k];
        }
    }
}

impl Sub for Spinor {
    type Output = Spinor;
    fn sub(mut self, o: Spinor) -> Spinor {
        self -= o;
        self
    }
}

impl SubAssign for Spinor {
    fn sub_assign(&mut self, o: Spinor) {
        for k in 0..4 {
            self.0[k] -= o.0[k];
        }
    }
}

impl Neg for Spinor {
    type Output = Spinor;
    fn neg(self) -> Spinor {
        Spinor(self.0.map(|z| -z))
    }
}

impl Mul<f64> for Spinor {
    type Output = Spinor;
    fn mul(self, a: f64) -> Spinor {
        Spinor(self.0.map(|z| z * a))
    }
}

impl Mul<C64> for Spinor {
    type Output = Spinor;
    fn mul(self, a: C64) -> Spinor {
        self.scale(a)
    }
}

/// `⟨a, b⟩ = Σ conj(a_i) b_i`, conjugate-linear in the first slot.
#[inline]
pub fn inner(a: &Spinor, b: &Spinor) -> C64 {
    a.0[0].conj() * b.0[0] + a.0[1].conj() * b.0[1] + a.0[2].conj() * b.0[2] + a.0[3].conj() * b.0[3]
}

// ---------------------------------------------------------------------------
// Fast fixed-representation actions used by the field solvers.

/// `γ⁰ψ`.
#[inline]
pub fn apply_gamma0(s: &Spinor) -> Spinor {
    Spinor([s.0[2], s.0[3], s.0[0], s.0[1]])
}

/// `γ⁰γ⁵ψ`.
#[inline]
pub fn apply_gamma0_gamma5(s: &Spinor) -> Spinor {
    Spinor([-s.0[2], -s.0[3], s.0[0], s.0[1]])
}

/// `(k_i γ⁰γ^i) ψ` for real `k`. Uses `γ⁰γ^i = diag(−σ^i, σ^i)`.
#[inline]
pub fn apply_alpha(k: [f64; 3], s: &Spinor) -> Spinor {
    let a = C64::new(k[2], 0.0);
    let b = C64::new(k[0], -k[1]);
    let c = C64::new(k[0], k[1]);
    let up0 = a * s.0[0] + b * s.0[1];
    let up1 = c * s.0[0] - a * s.0[1];
    let lo0 = a * s.0[2] + b * s.0[3];
    let lo1 = c * s.0[2] - a * s.0[3];
    Spinor([-up0, -up1, lo0, lo1])
}

/// `P(ω)ψ = ½(ψ + ω_i γ⁰γ^i ψ)`.
#[inline]
pub fn apply_projector(w: [f64; 3], s: &Spinor) -> Spinor {
    (*s + apply_alpha(w, s)) * 0.5
}

// ---------------------------------------------------------------------------
// Matrices

/// Dense 4×4 matrix over a scalar ring.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4<T>(pub [[T; 4]; 4]);

impl<T: Copy> Mat4<T> {
    fn map<U>(&self, f: impl Fn(&T) -> U) -> Mat4<U> {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| f(&self.0[i][j]))))
    }
}

impl<T> Mat4<T>
where
    T: Copy + num_traits_lite::Ring,
{
    pub fn zeros() -> Self {
        Mat4([[T::zero(); 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = T::one();
        }
        m
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|x| *x * a)
    }
}

impl<T: Copy + num_traits_lite::Ring> Add for Mat4<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j] + o.0[i][j])))
    }
}

impl<T: Copy + num_traits_lite::Ring> Sub for Mat4<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j] - o.0[i][j])))
    }
}

impl<T: Copy + num_traits_lite::Ring> Mul for Mat4<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Mat4(std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut acc = T::zero();
                for k in 0..4 {
                    acc = acc + self.0[i][k] * o.0[k][j];
                }
                acc
            })
        }))
    }
}

impl Mat4<C64> {
    pub fn adjoint(&self) -> Self {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i].conj())))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn apply(&self, s: &Spinor) -> Spinor {
        Spinor(std::array::from_fn(|i| (0..4).map(|k| self.0[i][k] * s.0[k]).sum()))
    }
}

impl Mat4<CQ> {
    pub fn adjoint(&self) -> Self {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i].conj())))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|z| *z == cq(0, 0))
    }

    pub fn to_float(&self) -> Mat4<C64> {
        self.map(cq_to_c64)
    }
}

/// Minimal ring trait so `Mat4` arithmetic is shared by both backings.
pub mod num_traits_lite {
    use super::{cq, C64, CQ};
    use std::ops::{Add, Mul, Sub};

    pub trait Ring: Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Sized {
        fn zero() -> Self;
        fn one() -> Self;
    }

    impl Ring for C64 {
        fn zero() -> Self {
            C64::new(0.0, 0.0)
        }
        fn one() -> Self {
            C64::new(1.0, 0.0)
        }
    }

    impl Ring for CQ {
        fn zero() -> Self {
            cq(0, 0)
        }
        fn one() -> Self {
            cq(1, 0)
        }
    }
}

/// A 4×4 complex matrix with float backing and optional exact backing.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix4C {
    exact: Option<Mat4<CQ>>,
    float: Mat4<C64>,
}

impl Matrix4C {
    pub fn from_exact(m: Mat4<CQ>) -> Self {
        Matrix4C { float: m.to_float(), exact: Some(m) }
    }

    pub fn from_float(m: Mat4<C64>) -> Self {
        Matrix4C { exact: None, float: m }
    }

    pub fn identity() -> Self {
        Self::from_exact(Mat4::identity())
    }

    pub fn zeros() -> Self {
        Self::from_exact(Mat4::zeros())
    }

    pub fn exact(&self) -> Option<&Mat4<CQ>> {
        self.exact.as_ref()
    }

    pub fn float(&self) -> &Mat4<C64> {
        &self.float
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.float.0[i][j]
    }

    pub fn adjoint(&self) -> Self {
        Matrix4C {
            exact: self.exact.map(|m| m.adjoint()),
            float: self.float.adjoint(),
        }
    }

    /// Multiply by an exact Gaussian-integer scalar `(re + i·im)/den`.
    pub fn scale_exact(&self, re: i64, im: i64, den: i64) -> Self {
        let s: CQ = Complex::new(Ratio::new(re, den), Ratio::new(im, den));
        Matrix4C {
            exact: self.exact.map(|m| m.scale(s)),
            float: self.float.scale(cq_to_c64(&s)),
        }
    }

    pub fn scale(&self, a: C64) -> Self {
        Matrix4C { exact: None, float: self.float.scale(a) }
    }

    /// Max-norm of the entries. Uses the exact backing when present, so an
    /// exactly vanishing matrix reports exactly zero.
    pub fn max_abs(&self) -> f64 {
        match &self.exact {
            Some(m) if m.is_zero() => 0.0,
            Some(m) => m.to_float().max_abs(),
            None => self.float.max_abs(),
        }
    }

    pub fn is_exactly_zero(&self) -> bool {
        self.exact.as_ref().is_some_and(|m| m.is_zero())
    }

    pub fn apply(&self, s: &Spinor) -> Spinor {
        self.float.apply(s)
    }

    /// True when every exact entry has the form `(a+bi)/2^k`, `k ∈ {0,1}`.
    pub fn is_half_integral(&self) -> bool {
        self.exact.as_ref().is_some_and(|m| {
            m.0.iter()
                .flatten()
                .all(|z| matches!(*z.re.denom(), 1 | 2) && matches!(*z.im.denom(), 1 | 2))
        })
    }

    /// Largest float-vs-exact discrepancy measured in units in the last place.
    pub fn float_ulp_defect(&self) -> f64 {
        let Some(m) = &self.exact else { return 0.0 };
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let e = cq_to_c64(&m.0[i][j]);
                let f = self.float.0[i][j];
                for (a, b) in [(e.re, f.re), (e.im, f.im)] {
                    let ulp = if a == 0.0 { f64::MIN_POSITIVE } else { a.abs() * f64::EPSILON };
                    worst = worst.max((a - b).abs() / ulp);
                }
            }
        }
        worst
    }
}

fn combine(
    a: &Matrix4C,
    b: &Matrix4C,
    fe: impl Fn(Mat4<CQ>, Mat4<CQ>) -> Mat4<CQ>,
    ff: impl Fn(Mat4<C64>, Mat4<C64>) -> Mat4<C64>,
) -> Matrix4C {
    match (a.exact, b.exact) {
        (Some(x), Some(y)) => Matrix4C::from_exact(fe(x, y)),
        _ => Matrix4C::from_float(ff(a.float, b.float)),
    }
}

impl Add for &Matrix4C {
    type Output = Matrix4C;
    fn add(self, o: &Matrix4C) -> Matrix4C {
        combine(self, o, |x, y| x + y, |x, y| x + y)
    }
}

impl Sub for &Matrix4C {
    type Output = Matrix4C;
    fn sub(self, o: &Matrix4C) -> Matrix4C {
        combine(self, o, |x, y| x - y, |x, y| x - y)
    }
}

impl Mul for &Matrix4C {
    type Output = Matrix4C;
    fn mul(self, o: &Matrix4C) -> Matrix4C {
        combine(self, o, |x, y| x * y, |x, y| x * y)
    }
}

impl fmt::Display for Matrix4C {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.float.0 {
            let cells: Vec<String> = row.iter().map(|z| format!("{:+.3}{:+.3}i", z.re, z.im)).collect();
            writeln!(f, "[{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Gamma matrices

fn block(tl: [[CQ; 2]; 2], tr: [[CQ; 2]; 2], bl: [[CQ; 2]; 2], br: [[CQ; 2]; 2]) -> Mat4<CQ> {
    let mut m = Mat4::<CQ>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            m.0[i][j] = tl[i][j];
            m.0[i][j + 2] = tr[i][j];
            m.0[i + 2][j] = bl[i][j];
            m.0[i + 2][j + 2] = br[i][j];
        }
    }
    m
}

/// Pauli matrix σ^i, `i ∈ {1,2,3}`.
pub fn pauli(i: usize) -> [[CQ; 2]; 2] {
    match i {
        1 => [[cq(0, 0), cq(1, 0)], [cq(1, 0), cq(0, 0)]],
        2 => [[cq(0, 0), cq(0, -1)], [cq(0, 1), cq(0, 0)]],
        3 => [[cq(1, 0), cq(0, 0)], [cq(0, 0), cq(-1, 0)]],
        _ => panic!("pauli index {i} out of range"),
    }
}

fn neg2(m: [[CQ; 2]; 2]) -> [[CQ; 2]; 2] {
    m.map(|r| r.map(|z| -z))
}

/// Minkowski metric `η^{μν} = diag(−1, 1, 1, 1)`.
pub fn eta(mu: usize, nu: usize) -> i64 {
    match (mu, nu) {
        (0, 0) => -1,
        (a, b) if a == b => 1,
        _ => 0,
    }
}

/// The Weyl-representation matrix `γ^μ`.
pub fn gamma(mu: usize) -> Result<Matrix4C, Error> {
    let z = [[cq(0, 0); 2]; 2];
    let id = [[cq(1, 0), cq(0, 0)], [cq(0, 0), cq(1, 0)]];
    let m = match mu {
        0 => block(z, id, id, z),
        1..=3 => {
            let s = pauli(mu);
            block(z, s, neg2(s), z)
        }
        _ => return Err(Error::IndexOutOfRange { what: "gamma", index: mu }),
    };
    Ok(Matrix4C::from_exact(m))
}

fn g(mu: usize) -> Matrix4C {
    gamma(mu).expect("index in range")
}

/// `γ⁵ = −i γ⁰γ¹γ²γ³`, computed exactly.
pub fn gamma5() -> Matrix4C {
    let p = &(&(&g(0) * &g(1)) * &g(2)) * &g(3);
    p.scale_exact(0, -1, 1)
}

/// `γ⁰γ^i`, the Hermitian velocity matrices.
pub fn alpha(i: usize) -> Matrix4C {
    &g(0) * &g(i)
}

/// For each μ, the max-norm of `(γ^μ)† − γ⁰γ^μγ⁰`.
pub fn hermiticity_report() -> Vec<(usize, f64)> {
    (0..4)
        .map(|mu| {
            let lhs = g(mu).adjoint();
            let rhs = &(&g(0) * &g(mu)) * &g(0);
            (mu, (&lhs - &rhs).max_abs())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Directions and projectors

/// A unit vector ω ∈ S².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    w: [f64; 3],
}

impl Direction {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(w: [f64; 3]) -> Result<Self, Error> {
        let n2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
        if !(n2 - 1.0).abs().le(&Self::TOLERANCE) {
            return Err(Error::NotUnit { norm_sqr: n2 });
        }
        Ok(Direction { w })
    }

    /// Normalizes a nonzero vector.
    pub fn normalized(v: [f64; 3]) -> Result<Self, Error> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotUnit { norm_sqr: n * n });
        }
        Ok(Direction { w: [v[0] / n, v[1] / n, v[2] / n] })
    }

    pub fn components(&self) -> [f64; 3] {
        self.w
    }

    pub fn neg(&self) -> Self {
        Direction { w: [-self.w[0], -self.w[1], -self.w[2]] }
    }
}

fn exact_component(x: f64) -> Option<Ratio<i64>> {
    let r = Ratio::<i64>::approximate_float(x)?;
    if *r.denom() > 1 << 20 {
        return None;
    }
    (*r.numer() as f64 / *r.denom() as f64 == x).then_some(r)
}

/// `P(ω) = ½(I + ω_i γ⁰γ^i)`. The exact backing is attached when every
/// component of ω is a small rational and `|ω|² = 1` holds exactly.
pub fn projector(omega: Direction) -> Matrix4C {
    let w = omega.w;
    let exact = (|| {
        let r = [exact_component(w[0])?, exact_component(w[1])?, exact_component(w[2])?];
        let n2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        if n2 != q(1) {
            return None;
        }
        let mut m = Mat4::<CQ>::identity();
        for i in 0..3 {
            let a = alpha(i + 1).exact.expect("exact");
            m = m + a.scale(Complex::new(r[i], q(0)));
        }
        Some(m.scale(Complex::new(Ratio::new(1, 2), q(0))))
    })();
    match exact {
        Some(m) => Matrix4C::from_exact(m),
        None => {
            let mut m = Mat4::<C64>::identity();
            for i in 0..3 {
                m = m + alpha(i + 1).float.scale(C64::new(w[i], 0.0));
            }
            Matrix4C::from_float(m.scale(C64::new(0.5, 0.0)))
        }
    }
}

// ---------------------------------------------------------------------------
// Null forms

/// The constant pair `(e₁, e₂)` of a spinor null form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NullFormCoeffs {
    pub e1: Spinor,
    pub e2: Spinor,
}

impl NullFormCoeffs {
    pub fn new(e1: Spinor, e2: Spinor) -> Self {
        NullFormCoeffs { e1, e2 }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        NullFormCoeffs { e1: self.e1 * lambda, e2: self.e2 * lambda }
    }

    pub fn is_zero(&self) -> bool {
        self.e1 == Spinor::ZERO && self.e2 == Spinor::ZERO
    }
}

/// `N(X,Y) = ⟨γ⁰X, Y⟩e₁ + ⟨γ⁰γ⁵X, Y⟩e₂`.
#[inline]
pub fn null_form(c: &NullFormCoeffs, x: &Spinor, y: &Spinor) -> Spinor {
    let a = inner(&apply_gamma0(x), y);
    let b = inner(&apply_gamma0_gamma5(x), y);
    c.e1 * a + c.e2 * b
}

/// Coefficients of the null form `N_Γ` produced by commuting Γ through `N`.
#[derive(Clone, Copy, Debug)]
pub struct CommutatorFit {
    pub coeffs: NullFormCoeffs,
    pub residual: f64,
}

/// Fits `N_Γ` from `Γ(N(X,Y)) − N(ΓX,Y) − N(X,ΓY) = N_Γ(X,Y)`.
///
/// The derivative part of Γ obeys the Leibniz rule through the constant
/// coefficient form, so only the matrix part `A` of Γ survives:
/// `A N(X,Y) − N(AX,Y) − N(X,AY)`. The coefficients are fitted by least
/// squares over pairs of basis spinors; the residual is then measured on
/// pseudo-random spinor pairs.
pub fn null_form_commutator(c: &NullFormCoeffs, id: VectorFieldId) -> Result<CommutatorFit, Error> {
    if !id.is_spacetime() {
        return Err(Error::WrongFamily(id));
    }
    let a = id.matrix_part().map(|m| *m.float()).unwrap_or_else(Mat4::zeros);
    let target = |x: &Spinor, y: &Spinor| {
        a.apply(&null_form(c, x, y)) - null_form(c, &a.apply(x), y) - null_form(c, x, &a.apply(y))
    };

    let mut basis = Vec::with_capacity(8);
    for k in 0..4 {
        basis.push(Spinor::basis(k));
        basis.push(Spinor::basis(k) * I);
    }
    // Per output component the unknowns are (e₁'_c, e₂'_c) in the complex
    // normal equations G u = r with G = Σ [p q]^H [p q].
    let mut gm = [[ZERO; 2]; 2];
    let mut rhs = [[ZERO; 2]; 4];
    for x in &basis {
        for y in &basis {
            let p = inner(&apply_gamma0(x), y);
            let qv = inner(&apply_gamma0_gamma5(x), y);
            let t = target(x, y);
            let row = [p, qv];
            for i in 0..2 {
                for j in 0..2 {
                    gm[i][j] += row[i].conj() * row[j];
                }
                for comp in 0..4 {
                    rhs[comp][i] += row[i].conj() * t.0[comp];
                }
            }
        }
    }
    let det = gm[0][0] * gm[1][1] - gm[0][1] * gm[1][0];
    if det.norm() < 1e-300 {
        return Err(Error::Singular("null-form commutator normal equations"));
    }
    let mut e1 = Spinor::ZERO;
    let mut e2 = Spinor::ZERO;
    for comp in 0..4 {
        let r = rhs[comp];
        e1.0[comp] = (gm[1][1] * r[0] - gm[0][1] * r[1]) / det;
        e2.0[comp] = (gm[0][0] * r[1] - gm[1][0] * r[0]) / det;
    }
    let coeffs = NullFormCoeffs { e1, e2 };

    let mut residual: f64 = 0.0;
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..64 {
        let x = Spinor(std::array::from_fn(|_| C64::new(next(), next())));
        let y = Spinor(std::array::from_fn(|_| C64::new(next(), next())));
        let r = target(&x, &y) - null_form(&coeffs, &x, &y);
        residual = residual.max(r.max_abs() / (x.norm() * y.norm()));
    }
    Ok(CommutatorFit { coeffs, residual })
}

// ---------------------------------------------------------------------------
// Identity suite

/// Outcome of one algebraic identity check.
#[derive(Clone, Debug)]
pub struct AlgebraCheck {
    pub name: String,
    /// Whether the defect was computed in exact arithmetic.
    pub exact: bool,
    pub defect: f64,
    pub tolerance: f64,
}

impl AlgebraCheck {
    pub fn passed(&self) -> bool {
        if self.exact {
            self.defect == 0.0
        } else {
            self.defect <= self.tolerance
        }
    }
}

fn check(name: impl Into<String>, exact: bool, defect: f64, tolerance: f64) -> AlgebraCheck {
    AlgebraCheck { name: name.into(), exact, defect, tolerance }
}

/// Float tolerance for the identity suite.
pub const FLOAT_IDENTITY_TOL: f64 = 1e-13;

/// Runs every algebraic identity: anticommutation, hermiticity, γ⁵, the
/// projector relations and null-form vanishing. Exact checks use the
/// rational backing; the float checks use `samples` pseudo-random draws
/// driven by `seed`.
pub fn verify_algebra(seed: u64, samples: usize) -> Vec<AlgebraCheck> {
    let mut out = Vec::new();
    let id = Matrix4C::identity();

    for mu in 0..4 {
        for nu in mu..4 {
            let ac = &(&g(mu) * &g(nu)) + &(&g(nu) * &g(mu));
            let want = id.scale_exact(-2 * eta(mu, nu), 0, 1);
            out.push(check(format!("anticommutator({mu},{nu})"), true, (&ac - &want).max_abs(), 0.0));
        }
    }
    for (mu, d) in hermiticity_report() {
        out.push(check(format!("hermiticity({mu})"), true, d, 0.0));
    }
    let g5 = gamma5();
    let diag = Matrix4C::from_exact(Mat4(std::array::from_fn(|i| {
        std::array::from_fn(|j| if i != j { cq(0, 0) } else if i < 2 { cq(1, 0) } else { cq(-1, 0) })
    })));
    out.push(check("gamma5 = diag(1,1,-1,-1)", true, (&g5 - &diag).max_abs(), 0.0));
    out.push(check("gamma5^2 = I", true, (&(&g5 * &g5) - &id).max_abs(), 0.0));
    for mu in 0..4 {
        let ac = &(&g5 * &g(mu)) + &(&g(mu) * &g5);
        out.push(check(format!("{{gamma5, gamma{mu}}} = 0"), true, ac.max_abs(), 0.0));
    }
    for i in 1..4 {
        let a = alpha(i);
        out.push(check(format!("gamma0 gamma{i} hermitian"), true, (&a.adjoint() - &a).max_abs(), 0.0));
    }

    // Exact projector relations on rational directions.
    let rational_dirs = [
        [1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.6, 0.8, 0.0],
        [0.0, -0.28, 0.96],
        [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0],
    ];
    let mut sum_d: f64 = 0.0;
    let mut idem_d: f64 = 0.0;
    let mut orth_d: f64 = 0.0;
    let mut all_exact = true;
    for w in rational_dirs {
        let d = Direction::new(w).expect("unit");
        let p = projector(d);
        let pm = projector(d.neg());
        all_exact &= p.is_exact() && pm.is_exact();
        sum_d = sum_d.max((&(&p + &pm) - &id).max_abs());
        idem_d = idem_d.max((&(&p * &p) - &p).max_abs());
        orth_d = orth_d.max((&p * &pm).max_abs());
    }
    out.push(check("P(w)+P(-w) = I (rational w)", all_exact, sum_d, FLOAT_IDENTITY_TOL));
    out.push(check("P(w)^2 = P(w) (rational w)", all_exact, idem_d, FLOAT_IDENTITY_TOL));
    out.push(check("P(w)P(-w) = 0 (rational w)", all_exact, orth_d, FLOAT_IDENTITY_TOL));

    // Float identities on pseudo-random samples.
    let mut rng = SplitMix(seed);
    let (mut fs, mut fi, mut fo, mut nf, mut kk): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let coeffs = NullFormCoeffs::new(
        Spinor(std::array::from_fn(|_| rng.complex())),
        Spinor(std::array::from_fn(|_| rng.complex())),
    );
    for _ in 0..samples {
        let d = rng.direction();
        let p = projector(d);
        let pm = projector(d.neg());
        fs = fs.max((&(&p + &pm) - &id).max_abs());
        fi = fi.max((&(&p * &p) - &p).max_abs());
        fo = fo.max((&p * &pm).max_abs());
        let z = Spinor(std::array::from_fn(|_| rng.complex()));
        let pz = p.apply(&z);
        nf = nf.max(null_form(&coeffs, &pz, &pz).max_abs() / z.norm_sqr());
        let k = [rng.uniform() * 10.0, rng.uniform() * 10.0, rng.uniform() * 10.0];
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let mut ka = Mat4::<C64>::zeros();
        for i in 0..3 {
            ka = ka + alpha(i + 1).float.scale(C64::new(k[i], 0.0));
        }
        let sq = ka * ka - Mat4::<C64>::identity().scale(C64::new(k2, 0.0));
        kk = kk.max(sq.max_abs() / k2);
    }
    out.push(check("P(w)+P(-w) = I (float)", false, fs, FLOAT_IDENTITY_TOL));
    out.push(check("P(w)^2 = P(w) (float)", false, fi, FLOAT_IDENTITY_TOL));
    out.push(check("P(w)P(-w) = 0 (float)", false, fo, FLOAT_IDENTITY_TOL));
    out.push(check("N(P(w)Z,P(w)Z) = 0 (float)", false, nf, FLOAT_IDENTITY_TOL));
    out.push(check("(k.alpha)^2 = |k|^2 I (float)", false, kk, FLOAT_IDENTITY_TOL));

    let mut ulp: f64 = 0.0;
    for mu in 0..4 {
        ulp = ulp.max(g(mu).float_ulp_defect());
    }
    ulp = ulp.max(g5.float_ulp_defect());
    out.push(check("float backing within 1 ulp of exact", false, ulp, 1.0));
    out
}

/// Tiny deterministic generator for the identity suite, so the library does
/// not need a runtime RNG dependency.
pub(crate) struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform on [-1, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    pub fn complex(&mut self) -> C64 {
        C64::new(self.uniform(), self.uniform())
    }

    pub fn direction(&mut self) -> Direction {
        loop {
            let v = [self.uniform(), self.uniform(), self.uniform()];
            let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if n2 > 1e-4 && n2 <= 1.0 {
                return Direction::normalized(v).expect("nonzero");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetry::{Family, Kind};

    fn exact_of(m: &Matrix4C) -> Mat4<CQ> {
        *m.exact().expect("exact backing")
    }

    /// Independent oracle: the same matrices written entry by entry.
    fn gamma_by_hand(mu: usize) -> [[(i64, i64); 4]; 4] {
        let o = (0, 0);
        let p = (1, 0);
        let m = (-1, 0);
        let pi = (0, 1);
        let mi = (0, -1);
        match mu {
            0 => [[o, o, p, o], [o, o, o, p], [p, o, o, o], [o, p, o, o]],
            1 => [[o, o, o, p], [o, o, p, o], [o, m, o, o], [m, o, o, o]],
            2 => [[o, o, o, mi], [o, o, pi, o], [o, pi, o, o], [mi, o, o, o]],
            3 => [[o, o, p, o], [o, o, o, m], [m, o, o, o], [o, p, o, o]],
            _ => unreachable!(),
        }
    }

    #[test]
    fn gamma_matches_hand_written_weyl_matrices() {
        for mu in 0..4 {
            let e = exact_of(&gamma(mu).unwrap());
            let h = gamma_by_hand(mu);
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(e.0[i][j], cq(h[i][j].0, h[i][j].1), "mu={mu} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn gamma_rejects_bad_index() {
        assert!(matches!(gamma(4), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn gamma0_squares_to_identity() {
        let g0 = gamma(0).unwrap();
        assert!((&(&g0 * &g0) - &Matrix4C::identity()).is_exactly_zero());
    }

    #[test]
    fn gamma1_gamma2_anticommute() {
        let ac = &(&g(1) * &g(2)) + &(&g(2) * &g(1));
        assert!(ac.is_exactly_zero());
    }

    #[test]
    fn spatial_gammas_square_to_minus_identity() {
        for i in 1..4 {
            let s = &(&g(i) * &g(i)) + &Matrix4C::identity();
            assert!(s.is_exactly_zero());
        }
    }

    #[test]
    fn gamma5_is_diag_and_involutive() {
        let g5 = gamma5();
        let e = exact_of(&g5);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i != j { cq(0, 0) } else if i < 2 { cq(1, 0) } else { cq(-1, 0) };
                assert_eq!(e.0[i][j], want);
            }
        }
        assert!((&(&g5 * &g5) - &Matrix4C::identity()).is_exactly_zero());
        assert!((&(&g5 * &g(0)) + &(&g(0) * &g5)).is_exactly_zero());
    }

    #[test]
    fn hermiticity_is_exact() {
        for (_, d) in hermiticity_report() {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn gammas_are_half_integral_and_match_floats() {
        for mu in 0..4 {
            assert!(g(mu).is_half_integral());
            assert!(g(mu).float_ulp_defect() <= 1.0);
        }
        assert!(projector(Direction::new([0.0, 0.0, 1.0]).unwrap()).is_half_integral());
    }

    #[test]
    fn projector_along_z() {
        let p = projector(Direction::new([0.0, 0.0, 1.0]).unwrap());
        assert!(p.is_exact());
        let e = exact_of(&p);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j && (i == 1 || i == 2) { cq(1, 0) } else { cq(0, 0) };
                assert_eq!(e.0[i][j], want);
            }
        }
    }

    #[test]
    fn fast_actions_agree_with_matrices() {
        let mut rng = SplitMix(7);
        for _ in 0..50 {
            let s = Spinor(std::array::from_fn(|_| rng.complex()));
            let k = [rng.uniform(), rng.uniform(), rng.uniform()];
            let mut ka = Mat4::<C64>::zeros();
            for i in 0..3 {
                ka = ka + alpha(i + 1).float.scale(C64::new(k[i], 0.0));
            }
            assert!((ka.apply(&s) - apply_alpha(k, &s)).max_abs() < 1e-15);
            assert!((g(0).apply(&s) - apply_gamma0(&s)).max_abs() == 0.0);
            let g05 = &g(0) * &gamma5();
            assert!((g05.apply(&s) - apply_gamma0_gamma5(&s)).max_abs() == 0.0);
        }
    }

    #[test]
    fn inner_product_conventions() {
        let e0 = Spinor::basis(0);
        assert_eq!(inner(&e0, &e0), ONE);
        let x = Spinor::from_real([1.0, 0.0, 1.0, 0.0]);
        assert_eq!(inner(&x, &x), C64::new(2.0, 0.0));
        let a = Spinor::new(C64::new(1.0, 2.0), ONE, I, C64::new(-0.5, 0.1));
        let b = Spinor::new(C64::new(0.3, -1.0), I, ONE, C64::new(2.0, 0.0));
        let lhs = inner(&(a * I), &b);
        let rhs = -I * inner(&a, &b);
        assert!((lhs - rhs).norm() < 1e-15);
    }

    #[test]
    fn null_form_examples() {
        let e1 = Spinor::new(ONE, I, ZERO, C64::new(0.5, 0.0));
        let e2 = Spinor::new(ZERO, ONE, C64::new(-1.0, 1.0), ZERO);
        let c = NullFormCoeffs::new(e1, e2);
        let x = Spinor::from_real([1.0, 0.0, 1.0, 0.0]);
        // ⟨γ⁰x,x⟩ = 2, ⟨γ⁰γ⁵x,x⟩ = 0, evaluated by hand.
        assert_eq!(null_form(&c, &x, &x), e1 * 2.0);
        assert_eq!(null_form(&c, &Spinor::ZERO, &Spinor::ZERO), Spinor::ZERO);
    }

    #[test]
    fn null_form_commutator_translation_and_scaling_are_trivial() {
        let mut rng = SplitMix(3);
        let c = NullFormCoeffs::new(
            Spinor(std::array::from_fn(|_| rng.complex())),
            Spinor(std::array::from_fn(|_| rng.complex())),
        );
        for id in [VectorFieldId::spacetime(Kind::Translation(0)), VectorFieldId::spacetime(Kind::Scaling)] {
            let fit = null_form_commutator(&c, id).unwrap();
            assert!(fit.coeffs.e1.max_abs() == 0.0 && fit.coeffs.e2.max_abs() == 0.0);
            assert_eq!(fit.residual, 0.0);
        }
    }

    #[test]
    fn null_form_commutator_rotation_and_boost_fit() {
        let mut rng = SplitMix(11);
        let c = NullFormCoeffs::new(
            Spinor(std::array::from_fn(|_| rng.complex())),
            Spinor(std::array::from_fn(|_| rng.complex())),
        );
        for id in VectorFieldId::spacetime_family() {
            let fit = null_form_commutator(&c, id).unwrap();
            assert!(fit.residual < 1e-12, "{id:?}: {}", fit.residual);
            // Hand derivation: N_Γ has coefficients (A e₁, A e₂) for matrix part A.
            if let Some(a) = id.matrix_part() {
                let want1 = a.apply(&c.e1);
                let want2 = a.apply(&c.e2);
                assert!((fit.coeffs.e1 - want1).max_abs() < 1e-13);
                assert!((fit.coeffs.e2 - want2).max_abs() < 1e-13);
            }
        }
        let hat = VectorFieldId { family: Family::NullInfinity, kind: Kind::Scaling };
        assert!(null_form_commutator(&c, hat).is_err());
    }

    #[test]
    fn identity_suite_passes() {
        let checks = verify_algebra(1, 1000);
        for c in &checks {
            assert!(c.passed(), "{}: {}", c.name, c.defect);
        }
        assert!(checks.iter().filter(|c| c.exact).count() >= 20);
    }

    #[test]
    fn direction_rejects_non_unit() {
        assert!(Direction::new([1.0, 1.0, 0.0]).is_err());
        assert!(Direction::normalized([0.0, 0.0, 0.0]).is_err());
    }
}
