//! Fixtures shared by the benchmarks.

use spinrad::grid::make_field;
use spinrad::scattering::LinearMapHandle;
use spinrad::{DataSpec, Grid, NullGrid, Sphere, Spinor, SpinorField, C64};

pub fn polarization() -> Spinor {
    let s = Spinor::new(C64::new(1.0, 0.0), C64::new(0.0, 0.3), C64::new(0.2, 0.0), C64::new(-0.5, 0.1));
    s * (1.0 / s.norm())
}

/// Gaussian of width `4h` at the origin.
pub fn pulse(g: Grid, amplitude: f64) -> SpinorField {
    make_field(g, &DataSpec::gaussian([0.0; 3], 4.0 * g.h(), polarization(), amplitude)).expect("resolved pulse")
}

/// `n³` box of side `n/2`, so `h = 1/2`.
pub fn grid(n: usize) -> Grid {
    Grid::new(n, 0.5 * n as f64).expect("valid grid")
}

/// Handle on `grid(n)` with radii `{M/2, M}`, `M = n/8`, and a 12×24 sphere.
pub fn handle(n: usize) -> LinearMapHandle {
    let g = grid(n);
    let m = n as f64 / 8.0;
    let ng = NullGrid::with_step(-0.5 * m, 0.5 * m, g.h(), Sphere::new(12, 24).expect("sphere")).expect("window");
    LinearMapHandle::new(g, ng, &[0.5 * m, m]).expect("handle")
}
