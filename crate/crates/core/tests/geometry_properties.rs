mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use routh_core::expr::Binding;
use routh_core::geometry::{
    alpha_inverse, alpha_map, beta_inverse, beta_map, complete_lift, cotangent_lift, cotangent_symplectic_form,
    flip_kappa, lie_bracket, tangent_map, tangent_pairing, tangent_symplectic_form, Chart, VectorField,
};
use support::polynomial;

const COORDS: [&str; 3] = ["q1", "q2", "q3"];

fn random_field(rng: &mut ChaCha8Rng, chart: &Chart) -> VectorField {
    let components = (0..chart.dim()).map(|_| polynomial(rng, &COORDS, 3)).collect();
    VectorField::base(chart.clone(), components).unwrap()
}

fn vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn chart() -> Chart {
    Chart::new(COORDS, None).unwrap()
}

fn point(values: &[(Vec<String>, &[f64])]) -> Binding {
    let mut b = Binding::new();
    for (names, vals) in values {
        for (n, v) in names.iter().zip(vals.iter()) {
            b.insert(n.clone(), *v);
        }
    }
    b
}

proptest! {
    #[test]
    fn cotangent_lift_pairs_to_zero_with_complete_lift(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chart = chart();
        let x = random_field(&mut rng, &chart);
        let (q, p, v) = (vector(&mut rng, 3), vector(&mut rng, 3), vector(&mut rng, 3));
        let at_p = point(&[(chart.coords().to_vec(), &q), (chart.momenta(), &p)]);
        let at_v = point(&[(chart.coords().to_vec(), &q), (chart.velocities(), &v)]);
        let star = cotangent_lift(&x).unwrap().eval(&at_p).unwrap();
        let tan = complete_lift(&x).unwrap().eval(&at_v).unwrap();
        // w = (q, p, q̇, ṗ) and u = (q, v, q̇, v̇) over the same q̇ = X(q).
        let w: Vec<f64> = [&q[..], &p, &star[..3], &star[3..]].concat();
        let u: Vec<f64> = [&q[..], &v, &tan[..3], &tan[3..]].concat();
        prop_assert!(tangent_pairing(&w, &u).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn kappa_is_an_involution(w in prop::collection::vec(-1e6..1e6f64, 12)) {
        prop_assert_eq!(flip_kappa(&flip_kappa(&w).unwrap()).unwrap(), w);
    }

    #[test]
    fn beta_preserves_the_symplectic_pairing(
        a in prop::collection::vec(-3.0..3.0f64, 12),
        b in prop::collection::vec(-3.0..3.0f64, 12),
    ) {
        // β is linear in these coordinates, so displacements map by β itself.
        let before = tangent_symplectic_form(&a, &b).unwrap();
        let after = cotangent_symplectic_form(&beta_map(&a).unwrap(), &beta_map(&b).unwrap()).unwrap();
        prop_assert!((before - after).abs() <= 1e-10);
    }

    #[test]
    fn alpha_and_beta_invert(w in prop::collection::vec(-3.0..3.0f64, 8)) {
        prop_assert_eq!(alpha_inverse(&alpha_map(&w).unwrap()).unwrap(), w.clone());
        prop_assert_eq!(beta_inverse(&beta_map(&w).unwrap()).unwrap(), w);
    }

    #[test]
    fn flip_relates_tangent_maps_to_the_bracket(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chart = chart();
        let x = random_field(&mut rng, &chart);
        let y = random_field(&mut rng, &chart);
        let q = vector(&mut rng, 3);
        let at = point(&[(chart.coords().to_vec(), &q)]);
        let xq = x.eval(&at).unwrap();
        let yq = y.eval(&at).unwrap();
        let tx_y = tangent_map(&x, &q, &yq).unwrap();
        let ty_x = flip_kappa(&tangent_map(&y, &q, &xq).unwrap()).unwrap();
        let bracket = lie_bracket(&y, &x).unwrap().eval(&at).unwrap();
        for i in 0..9 {
            prop_assert!((tx_y[i] - ty_x[i]).abs() <= 1e-10);
        }
        for i in 0..3 {
            prop_assert!((tx_y[9 + i] - ty_x[9 + i] - bracket[i]).abs() <= 1e-10);
        }
    }
}
