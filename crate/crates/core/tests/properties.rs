use proptest::prelude::*;
use spinrad::clifford::{apply_projector, projector};
use spinrad::propagate::free_step;
use spinrad::{fit, grid, null_form, Direction, Grid, NullFormCoeffs, NullGrid, RadiationField, Sphere, Spinor, SpinorField, C64};

fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn spinor() -> impl Strategy<Value = Spinor> {
    (c64(), c64(), c64(), c64()).prop_map(|(a, b, c, d)| Spinor::new(a, b, c, d))
}

fn direction() -> impl Strategy<Value = Direction> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| Direction::normalized([x, y, z]).unwrap())
}

fn close(a: &Spinor, b: &Spinor, tol: f64) -> bool {
    (*a + *b * -1.0).max_abs() <= tol
}

/// Smooth periodic field on a small grid driven by a few random modes.
fn field(g: Grid, amps: &[Spinor]) -> SpinorField {
    let k = 2.0 * std::f64::consts::PI / g.length();
    SpinorField::from_fn(g, 0.0, |x| {
        let mut s = Spinor::ZERO;
        for (j, a) in amps.iter().enumerate() {
            let m = (j + 1) as f64;
            let ph = k * (m * x[0] + (j % 2) as f64 * x[1] - x[2]);
            s += *a * C64::new(ph.cos(), (m * ph).sin());
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projectors_are_complementary_idempotent_and_hermitian(w in direction(), x in spinor()) {
        let p = apply_projector(w.components(), &x);
        let q = apply_projector(w.neg().components(), &x);
        prop_assert!(close(&(p + q), &x, 1e-14));
        prop_assert!(close(&apply_projector(w.components(), &p), &p, 1e-14));
        prop_assert!(apply_projector(w.components(), &q).max_abs() <= 1e-14);
        let m = projector(w);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((m.entry(i, j) - m.entry(j, i).conj()).norm() <= 1e-15);
            }
        }
    }

    #[test]
    fn null_form_vanishes_on_a_common_projector_range(
        w in direction(), x in spinor(), y in spinor(), e1 in spinor(), e2 in spinor()
    ) {
        let c = NullFormCoeffs::new(e1, e2);
        let px = apply_projector(w.components(), &x);
        let py = apply_projector(w.components(), &y);
        prop_assert!(null_form(&c, &px, &py).max_abs() <= 1e-13);
    }

    #[test]
    fn null_form_is_conjugate_linear_then_linear(
        x in spinor(), y in spinor(), z in spinor(), a in c64(), e1 in spinor(), e2 in spinor()
    ) {
        let c = NullFormCoeffs::new(e1, e2);
        let lhs = null_form(&c, &x, &(y * a + z));
        let rhs = null_form(&c, &x, &y) * a + null_form(&c, &x, &z);
        prop_assert!(close(&lhs, &rhs, 1e-13));
        let lhs = null_form(&c, &(x * a), &y);
        prop_assert!(close(&lhs, &(null_form(&c, &x, &y) * a.conj()), 1e-13));
    }

    #[test]
    fn free_step_is_linear_unitary_and_reversible(
        a in prop::collection::vec(spinor(), 3), b in prop::collection::vec(spinor(), 3),
        t in -3.0..3.0f64, s in c64()
    ) {
        let g = Grid::new(16, 8.0).unwrap();
        let (u, v) = (field(g, &a), field(g, &b));
        let mut w = u.clone();
        w.axpy(s, &v);
        let mut lin = free_step(&u, t);
        lin.axpy(s, &free_step(&v, t));
        prop_assert!(free_step(&w, t).rel_diff(&lin) <= 1e-12);
        let q0 = grid::charge(&u);
        prop_assert!((grid::charge(&free_step(&u, t)) - q0).abs() <= 1e-12 * q0.max(1.0));
        prop_assert!(free_step(&free_step(&u, t), -t).rel_diff(&u) <= 1e-12);
    }

    #[test]
    fn free_steps_compose(a in prop::collection::vec(spinor(), 3), t1 in -2.0..2.0f64, t2 in -2.0..2.0f64) {
        let g = Grid::new(16, 8.0).unwrap();
        let u = field(g, &a);
        prop_assert!(free_step(&free_step(&u, t1), t2).rel_diff(&free_step(&u, t1 + t2)) <= 1e-12);
    }

    #[test]
    fn d_s_is_exact_on_cubics(c in prop::collection::vec(-2.0..2.0f64, 4), x in spinor(), ns in 5usize..20) {
        let ng = NullGrid::new(-1.5, 2.5, ns, Sphere::new(2, 4).unwrap()).unwrap();
        let mut f = RadiationField::zeros(ng.clone(), 1.0);
        let p = |s: f64| c[0] + s * (c[1] + s * (c[2] + s * c[3]));
        let dp = |s: f64| c[1] + s * (2.0 * c[2] + s * 3.0 * c[3]);
        for (i, v) in f.data.iter_mut().enumerate() {
            *v = x * p(ng.s(ng.slice_of(i)));
        }
        for (i, d) in f.d_s().iter().enumerate() {
            prop_assert!(close(d, &(x * dp(ng.s(ng.slice_of(i)))), 1e-10));
        }
    }

    #[test]
    fn projection_removes_the_wrong_component(xs in prop::collection::vec(spinor(), 3 * 6 * 12)) {
        let ng = NullGrid::new(-1.0, 1.0, 3, Sphere::new(6, 12).unwrap()).unwrap();
        let mut f = RadiationField::zeros(ng, 4.0);
        f.data.copy_from_slice(&xs);
        f.project();
        prop_assert!(f.membership_defect() <= 1e-14);
        let before = f.data.clone();
        f.project();
        prop_assert!(f.data.iter().zip(&before).all(|(a, b)| close(a, b, 1e-15)));
    }

    #[test]
    fn power_law_recovers_exponents(p in -4.0..4.0f64, c in 0.1..10.0f64) {
        let xs = [0.5, 1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(p)).collect();
        prop_assert!((fit::power_law(&xs, &ys).unwrap() - p).abs() <= 1e-10);
    }
}
