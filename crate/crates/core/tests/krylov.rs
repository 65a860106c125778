mod common;

use rand::Rng;
use reinvest_core::problems::TridiagonalJacobian;
use reinvest_core::{bicgstab, InnerStatus, LinearOperator, OpCounts};

#[test]
fn matches_direct_solve_on_random_dominant_systems() {
    let mut rng = common::rng(2024);
    for case in 0..200 {
        let n = rng.gen_range(2..=20);
        let mut lower = common::uniform_vec(&mut rng, n, -1.0, 1.0);
        let mut upper = common::uniform_vec(&mut rng, n, -1.0, 1.0);
        lower[0] = 0.0;
        upper[n - 1] = 0.0;
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let off = lower[i].abs() + upper[i].abs();
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * (off + rng.gen_range(0.5..3.0))
            })
            .collect();
        let rhs = common::uniform_vec(&mut rng, n, -1.0, 1.0);
        let rnorm = common::norm(&rhs);
        let oracle = common::thomas(&lower, &diag, &upper, &rhs);

        let op = TridiagonalJacobian { lower, diag, upper };
        let mut counts = OpCounts::default();
        let res = bicgstab(&op, &rhs, rnorm, 1e-10, 4 * n, &mut counts).unwrap();
        assert!(res.inner_iterations <= 4 * n);
        if res.status != InnerStatus::Converged {
            continue;
        }
        assert_eq!(counts.jvps, 2 * res.inner_iterations as u64, "case {case}");

        let mut ad = vec![0.0; n];
        op.apply(&res.direction, &mut ad, &mut OpCounts::default());
        let resid: Vec<f64> = ad.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(common::norm(&resid) <= 1e-8 * rnorm, "case {case}");
        for (d, o) in res.direction.iter().zip(&oracle) {
            assert!((d - o).abs() <= 1e-6 * o.abs().max(1e-3), "case {case}: {d} vs {o}");
        }
    }
}

#[test]
fn inner_cap_is_never_exceeded() {
    let mut rng = common::rng(5);
    for _ in 0..50 {
        let n = rng.gen_range(5..=30);
        let op = TridiagonalJacobian {
            lower: common::uniform_vec(&mut rng, n, -3.0, 3.0),
            diag: common::uniform_vec(&mut rng, n, -1.0, 1.0),
            upper: common::uniform_vec(&mut rng, n, -3.0, 3.0),
        };
        let rhs = common::uniform_vec(&mut rng, n, -1.0, 1.0);
        let cap = rng.gen_range(1..=n);
        let mut counts = OpCounts::default();
        if let Ok(res) = bicgstab(&op, &rhs, common::norm(&rhs), 1e-12, cap, &mut counts) {
            assert!(res.inner_iterations <= cap);
        }
    }
}
