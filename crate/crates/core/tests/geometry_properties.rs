use boundopt::geometry::{
    check_eps1o, pncg_partition, project, projected_gradient, residual, s_scaling, two_metric_partition,
    z_scaling,
};
use boundopt::linalg::{dot, norm};
use boundopt::BoundSpec;
use proptest::prelude::*;

fn boxed_bounds(n: usize) -> impl Strategy<Value = BoundSpec> {
    prop::collection::vec(prop_oneof![Just(f64::INFINITY), 0.1f64..5.0], n)
        .prop_map(|u| BoundSpec::boxed(u).unwrap())
}

fn point_and_bounds() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, BoundSpec)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
            boxed_bounds(n),
        )
    })
}

/// Feasible point that lands exactly on a bound for about a third of the
/// indices, paired with an arbitrary gradient.
fn feasible_with_gradient() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, BoundSpec)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..6, 0.0f64..1.0), n),
            prop::collection::vec(-3.0f64..3.0, n),
            boxed_bounds(n),
        )
            .prop_map(|(raw, g, b)| {
                let x = raw
                    .iter()
                    .enumerate()
                    .map(|(i, &(k, t))| {
                        let u = b.upper(i);
                        match k {
                            0 => 0.0,
                            1 if u.is_finite() => u,
                            _ if u.is_finite() => t * u,
                            _ => 4.0 * t,
                        }
                    })
                    .collect();
                (x, g, b)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn projection_is_firmly_nonexpansive((x, y, b) in point_and_bounds()) {
        let (px, py) = (project(&x, &b), project(&y, &b));
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, c)| a - c).collect();
        let pd: Vec<f64> = px.iter().zip(&py).map(|(a, c)| a - c).collect();
        prop_assert!(dot(&d, &pd) >= dot(&pd, &pd) - 1e-12 * (1.0 + dot(&d, &d)));
        prop_assert!(norm(&pd) <= norm(&d) * (1.0 + 1e-15));
    }

    #[test]
    fn projection_is_idempotent_and_feasible((x, _y, b) in point_and_bounds()) {
        let px = project(&x, &b);
        prop_assert!(b.is_feasible(&px));
        prop_assert_eq!(project(&px, &b), px);
    }

    #[test]
    fn stationary_projected_gradient_passes_eps1o((x, g, b) in feasible_with_gradient()) {
        let pg = projected_gradient(&x, &g, &b).unwrap();
        if norm(&pg) == 0.0 {
            prop_assert!(check_eps1o(&x, &g, &b, 1e-12).satisfied);
        }
        let zero = vec![0.0; x.len()];
        prop_assert!(check_eps1o(&x, &zero, &b, 0.0).satisfied);
    }

    #[test]
    fn active_components_lie_on_a_bound((x, g, b) in feasible_with_gradient()) {
        let p = two_metric_partition(&x, &g, &b).unwrap();
        for &i in &p.plus {
            prop_assert!(x[i] == 0.0 || x[i] == b.upper(i));
        }
        prop_assert_eq!(p.plus.len() + p.minus.len(), x.len());
        let z = z_scaling(&x, &g, &b).unwrap();
        prop_assert!(z.diag.iter().all(|&d| d > 0.0 && d <= 1.0));
    }

    #[test]
    fn scalings_are_bounded_by_the_threshold((x, g, b) in feasible_with_gradient(), eps in 1e-4f64..0.5) {
        let part = pncg_partition(&x, &b, eps).unwrap();
        let s = s_scaling(&x, &part, &b);
        for i in 0..x.len() {
            if part.is_plus(i) {
                prop_assert!(s.diag[i] >= 0.0 && s.diag[i] <= eps);
            } else {
                prop_assert_eq!(s.diag[i], 1.0);
            }
        }
        prop_assert!(residual(&x, &g, &b, eps) >= 0.0 || part.plus.is_empty());
    }

    #[test]
    fn finite_upper_bounds_at_infinity_change_nothing((x, g, _b) in feasible_with_gradient()) {
        let n = x.len();
        let one_sided = BoundSpec::nonnegative(n);
        let explicit = BoundSpec::boxed(vec![f64::INFINITY; n]).unwrap();
        let x: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        prop_assert_eq!(project(&g, &one_sided), project(&g, &explicit));
        prop_assert_eq!(
            projected_gradient(&x, &g, &one_sided).unwrap(),
            projected_gradient(&x, &g, &explicit).unwrap()
        );
        prop_assert_eq!(
            z_scaling(&x, &g, &one_sided).unwrap().diag,
            z_scaling(&x, &g, &explicit).unwrap().diag
        );
        prop_assert_eq!(
            residual(&x, &g, &one_sided, 1e-4).to_bits(),
            residual(&x, &g, &explicit, 1e-4).to_bits()
        );
    }
}

#[test]
fn projection_clamps_each_side() {
    let b = BoundSpec::boxed(vec![1.0, f64::INFINITY, 2.0]).unwrap();
    assert_eq!(project(&[-1.0, 7.0, 3.0], &b), vec![0.0, 7.0, 2.0]);
}

#[test]
fn unconstrained_indices_are_never_projected() {
    let b = BoundSpec::nonnegative_on(3, &[1]).unwrap();
    assert_eq!(project(&[-1.0, -1.0, -1.0], &b), vec![-1.0, 0.0, -1.0]);
    let p = pncg_partition(&[-5.0, 0.0, 1e-9], &b, 1e-3).unwrap();
    assert_eq!(p.plus, vec![1]);
}

#[test]
fn residual_uses_the_square_root_threshold() {
    let b = BoundSpec::nonnegative(2);
    let x = [0.005, 1.0];
    let g = [-2.0, 0.0];
    // 0.005 <= sqrt(1e-4), so index 0 counts as near-active.
    assert_eq!(residual(&x, &g, &b, 1e-4), 2.0);
    let far = residual(&x, &g, &b, 1e-6);
    assert_eq!(far, 2.0);
    assert_eq!(residual(&[0.5, 1.0], &[0.0, 0.0], &b, 1e-4), 0.0);
}
