use diamond_polymer::disorder::DisorderSpec;
use diamond_polymer::rgflow::{self, FlowKind, FlowMap};
use diamond_polymer::LatticeParams;
use proptest::prelude::*;

fn kinds(beta: f64, beta_hat: f64, n: usize) -> Vec<(u32, u32, FlowKind)> {
    vec![
        (2, 3, FlowKind::Sigma { beta }),
        (2, 3, FlowKind::Mhat),
        (2, 3, FlowKind::MnBls { beta_hat, n }),
        (2, 2, FlowKind::MnBeq { beta_hat, n }),
        (2, 2, FlowKind::MhatnBeq { beta_hat, n }),
        (3, 3, FlowKind::MtildenBeq { beta_hat, n }),
        (3, 2, FlowKind::MnBgs { beta }),
        (3, 2, FlowKind::MhatnBgs),
        (2, 2, FlowKind::EdgeExact { beta }),
        (2, 2, FlowKind::EdgeSecondMoment { beta }),
    ]
}

proptest! {
    #[test]
    fn maps_are_monotone_and_nonnegative_at_zero(
        beta in 0.01f64..1.0, beta_hat in 0.1f64..2.0, n in 1usize..200, x in 0.0f64..5.0, dx in 0.0f64..1.0
    ) {
        for (b, s, kind) in kinds(beta, beta_hat, n) {
            let m = FlowMap::new(kind, LatticeParams::new(b, s).unwrap(), DisorderSpec::StandardGaussian).unwrap();
            prop_assert!(m.apply(0.0f64) >= 0.0);
            prop_assert!(m.apply(x + dx) >= m.apply(x));
        }
    }

    #[test]
    fn limiting_variance_is_self_consistent(x in 0.1f64..2.0) {
        let p = LatticeParams::new(2, 3).unwrap();
        let lhs = rgflow::limiting_variance(&p, 1.5 * x, 1e-14).unwrap();
        let rhs = rgflow::mhat(&p, rgflow::limiting_variance(&p, x, 1e-14).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.max(1.0));
    }

    #[test]
    fn sigma_one_step_closed_form(beta in 0.0f64..1.5, b in 2u32..5, s in 2u32..5) {
        let p = LatticeParams::new(b, s).unwrap();
        let t = rgflow::sigma_recursion(&p, &DisorderSpec::StandardGaussian, beta, 1).unwrap();
        let want = (((s - 1) as f64 * beta * beta).exp() - 1.0) / b as f64;
        prop_assert!((t.values[1] - want).abs() <= 1e-12 * want.max(1.0));
    }
}
