//! Property tests for the algebraic invariants of the discretization.

mod common;

use common::{all, bump, interval};
use fraccal::forms::PdoSpec;
use fraccal::random::{random_field, rng};
use fraccal::{
    coercivity_margin, conductivity_form, dirichlet_form, frac_gradient_pairing, gagliardo_seminorm,
    inner, make_conductivity, make_grid, pdo_form, poincare_constant, potential_form, transform,
    BesselMultiplier, Direction, Field, Flavor, Grid, OperatorKernel,
};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop_oneof![
        (3u32..7).prop_map(|p| make_grid(1, 8.0, 1 << p).unwrap()),
        (3u32..5).prop_map(|p| make_grid(2, 4.0, 1 << p).unwrap()),
    ]
}

fn field(grid: Grid, seed: u64, stream: u64) -> Field {
    random_field(grid, &all(&grid), &mut rng(seed, stream))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operators_are_symmetric(grid in grid_strategy(), s in 0.05f64..0.95, seed in any::<u64>(), kernel_flavor in any::<bool>()) {
        let flavor = if kernel_flavor { Flavor::Kernel } else { Flavor::Spectral };
        let k = OperatorKernel::new(grid, s, flavor).unwrap();
        let (u, v) = (field(grid, seed, 0), field(grid, seed, 1));
        let a = inner(&k.apply(&u).unwrap(), &v).unwrap();
        let b = inner(&u, &k.apply(&v).unwrap()).unwrap();
        let scale = inner(&k.apply(&u).unwrap(), &u).unwrap().abs().max(1e-300).sqrt()
            * inner(&k.apply(&v).unwrap(), &v).unwrap().abs().max(1e-300).sqrt();
        prop_assert!((a - b).abs() <= 1e-12 * scale.max(a.abs()));
    }

    #[test]
    fn spectral_operators_commute(grid in grid_strategy(), s in 0.0f64..2.0, t in 0.0f64..2.0, seed in any::<u64>()) {
        let (ks, kt) = (OperatorKernel::spectral(grid, s).unwrap(), OperatorKernel::spectral(grid, t).unwrap());
        let u = field(grid, seed, 0);
        let st = ks.apply(&kt.apply(&u).unwrap()).unwrap();
        let ts = kt.apply(&ks.apply(&u).unwrap()).unwrap();
        let diff = st.zip_map(&ts, |a, b| a - b).unwrap().max_abs();
        prop_assert!(diff <= 1e-12 * st.max_abs().max(1.0));
    }

    #[test]
    fn dirichlet_energy_is_nonnegative(grid in grid_strategy(), s in 0.05f64..0.95, seed in any::<u64>()) {
        let k = OperatorKernel::kernel(grid, s).unwrap();
        let u = field(grid, seed, 0);
        prop_assert!(frac_gradient_pairing(&k, &u, &u).unwrap() >= 0.0);
        let c = Field::constant(grid, 3.7);
        prop_assert_eq!(frac_gradient_pairing(&k, &c, &u).unwrap(), 0.0);
    }

    #[test]
    fn seminorm_is_homogeneous(s in 0.05f64..0.95, p in 1.1f64..4.0, c in -5.0f64..5.0, seed in any::<u64>()) {
        let g = make_grid(1, 8.0, 32).unwrap();
        let u = field(g, seed, 0);
        let a = gagliardo_seminorm(&g, &u, s, p).unwrap();
        let b = gagliardo_seminorm(&g, &u.scaled(c), s, p).unwrap();
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * a.max(1e-300) * c.abs().max(1.0));
    }

    #[test]
    fn bessel_norm_grows_with_order(s in 0.0f64..2.0, ds in 0.0f64..1.0, seed in any::<u64>()) {
        let g = make_grid(1, 8.0, 32).unwrap();
        let u = field(g, seed, 0);
        let lo = fraccal::sobolev_norm(&BesselMultiplier::new(g, s).unwrap(), &u).unwrap();
        let hi = fraccal::sobolev_norm(&BesselMultiplier::new(g, s + ds).unwrap(), &u).unwrap();
        prop_assert!(hi >= lo * (1.0 - 1e-14));
    }

    #[test]
    fn potential_form_is_local(seed in any::<u64>(), split in 1usize..31) {
        let g = make_grid(1, 8.0, 32).unwrap();
        let q = field(g, seed, 0);
        let form = potential_form(&g, &q).unwrap();
        let left: Vec<usize> = (0..split).collect();
        let right: Vec<usize> = (split..32).collect();
        let u = random_field(g, &left, &mut rng(seed, 1));
        let v = random_field(g, &right, &mut rng(seed, 2));
        prop_assert_eq!(form.eval(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn pdo_adjoint_is_transpose(seed in any::<u64>(), height in -1.0f64..1.0) {
        let g = make_grid(1, 8.0, 32).unwrap();
        let k = OperatorKernel::spectral(g, 0.8).unwrap();
        let spec = PdoSpec::new(1, vec![
            ([0, 0], field(g, seed, 3)),
            ([1, 0], bump(g, [0.0, 0.0], 2.0, height)),
        ]).unwrap();
        let b = pdo_form(&k, &spec).unwrap();
        let (u, v) = (field(g, seed, 0), field(g, seed, 1));
        let lhs = b.eval(&u, &v).unwrap();
        let rhs = b.adjoint().eval(&v, &u).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn conductivity_dominates_scaled_dirichlet(seed in any::<u64>(), floor in 0.2f64..2.0) {
        let g = make_grid(1, 8.0, 32).unwrap();
        let k = OperatorKernel::kernel(g, 0.45).unwrap();
        let gamma = field(g, seed, 0).map(|v| floor + (v + 1.0)).unwrap();
        let gamma0 = gamma.min();
        let b = conductivity_form(&k, &gamma).unwrap();
        let l = dirichlet_form(&k).unwrap();
        let u = field(g, seed, 1);
        prop_assert!(b.eval(&u, &u).unwrap() >= gamma0 * l.eval(&u, &u).unwrap() * (1.0 - 1e-12));
        let mask = interval(8.0, 32, -1.0, 1.0, &[]);
        let mb = coercivity_margin(&b, &mask).unwrap();
        let ml = coercivity_margin(&l, &mask).unwrap();
        prop_assert!(mb >= gamma0 * ml * (1.0 - 1e-9));
    }

    #[test]
    fn liouville_transform_round_trips(seed in any::<u64>()) {
        let g = make_grid(1, 8.0, 32).unwrap();
        let k = OperatorKernel::kernel(g, 0.3).unwrap();
        let gamma = field(g, seed, 0).map(|v| 2.25 + 1.75 * v).unwrap();
        let c = make_conductivity(&gamma, &k).unwrap();
        let u = field(g, seed, 1);
        let back = transform(&c, &transform(&c, &u, Direction::ToSchrodinger).unwrap(), Direction::ToConductivity).unwrap();
        for (a, b) in back.values().iter().zip(u.values()) {
            prop_assert!((a - b).abs() <= 2.0 * f64::EPSILON * b.abs());
        }
    }

    #[test]
    fn poincare_is_monotone_in_the_domain(lo in -1.5f64..-0.5, hi in 0.5f64..1.5, shrink in 0.0f64..0.4) {
        let outer = interval(8.0, 64, lo, hi, &[]);
        let inner_mask = interval(8.0, 64, lo + shrink, hi - shrink, &[]);
        let big = poincare_constant(&outer, 0.0, 0.6).unwrap().constant;
        let small = poincare_constant(&inner_mask, 0.0, 0.6).unwrap().constant;
        prop_assert!(small <= big + 1e-8);
    }
}
