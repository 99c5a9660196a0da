use proptest::prelude::*;

use dcac_core::ac::distribute_slack;
use dcac_core::fixtures::{generator, line, linear_cost, pq_bus, ref_bus, simple_case, two_bus};
use dcac_core::linalg::SparseMatrix;
use dcac_core::qp::{solve_qp, QpProblem, QpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use dcac_core::scenario::{generate_scenario, ScenarioConfig};
use dcac_core::{build_ptdf, solve_dc, DcOptions, LossModel, LossTag};

/// Minimizer of `Σ ½h x² + c x` over a box with one linking row `a·x = b`
/// (or `a·x ≤ b`), by bisection on the row multiplier.
fn separable_oracle(h: &[f64], c: &[f64], a: &[f64], lb: &[f64], ub: &[f64], b: f64, equality: bool) -> Vec<f64> {
    let x_of = |mu: f64| -> Vec<f64> {
        (0..h.len()).map(|i| ((-c[i] - mu * a[i]) / h[i]).clamp(lb[i], ub[i])).collect()
    };
    let row = |x: &[f64]| x.iter().zip(a).map(|(x, a)| x * a).sum::<f64>();
    if !equality && row(&x_of(0.0)) <= b {
        return x_of(0.0);
    }
    let (mut lo, mut hi) = (if equality { -1e6 } else { 0.0 }, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if row(&x_of(mid)) > b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x_of(0.5 * (lo + hi))
}

fn separable_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64, bool)> {
    (2usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(0.2f64..2.0, n),
            prop::collection::vec(-2.0f64..0.0, n),
            prop::collection::vec(0.1f64..2.0, n),
            0.05f64..0.95,
            any::<bool>(),
        )
            .prop_map(|(h, c, a, lb, width, t, eq)| {
                let ub: Vec<f64> = lb.iter().zip(&width).map(|(l, w)| l + w).collect();
                let b = (0..h.len()).map(|i| a[i] * (lb[i] + t * (ub[i] - lb[i]))).sum();
                (h, c, a, lb, ub, b, eq)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qp_matches_separable_oracle((h, c, a, lb, ub, b, equality) in separable_case()) {
        let n = h.len();
        let mut p = QpProblem::new(n);
        p.h = SparseMatrix::diag(&h);
        p.c = c.clone();
        let row = SparseMatrix::from_triplets(1, n, &(0..n).map(|j| (0, j, a[j])).collect::<Vec<_>>());
        if equality {
            p.a_eq = row;
            p.b_eq = vec![b];
        } else {
            p.a_in = row;
            p.b_in = vec![b];
        }
        p.lb = lb.clone();
        p.ub = ub.clone();
        let sol = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let want = separable_oracle(&h, &c, &a, &lb, &ub, b, equality);
        for (x, w) in sol.x.iter().zip(&want) {
            prop_assert!((x - w).abs() < 1e-5, "{:?} vs {:?}", sol.x, want);
        }
        let f_want = p.objective(&want);
        prop_assert!(sol.objective <= f_want + 1e-7 * (1.0 + f_want.abs()));
    }

    #[test]
    fn ptdf_flows_satisfy_kirchhoff(
        n in 3usize..9,
        extra in prop::collection::vec((0usize..100, 0usize..100), 0..6),
        xs in prop::collection::vec(0.05f64..0.5, 20),
        p in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let mut branches = Vec::new();
        for k in 1..n {
            // bus k+1 hangs off an earlier bus: a spanning tree
            branches.push(line(1 + (k * 7 + 3) % k, k + 1, 0.0, xs[k]));
        }
        for (e, &(a, b)) in extra.iter().enumerate() {
            let (a, b) = (a % n + 1, b % n + 1);
            if a != b {
                branches.push(line(a, b, 0.0, xs[(e + n) % xs.len()]));
            }
        }
        let buses = std::iter::once(ref_bus(1)).chain((2..=n).map(|i| pq_bus(i, 0.0))).collect();
        let case = simple_case(buses, branches);
        let mut inj: Vec<f64> = p[..n].to_vec();
        inj[0] = -inj[1..].iter().sum::<f64>();
        let ptdf = build_ptdf(&case, 1).unwrap();
        let flows = ptdf.flows(&inj);
        let mut net = vec![0.0; n];
        for (k, f) in flows.iter().enumerate() {
            let (a, b) = case.branch_ends(k);
            net[a] += f;
            net[b] -= f;
        }
        for i in 0..n {
            prop_assert!((net[i] - inj[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn participation_is_a_distribution(
        caps in prop::collection::vec((0.0f64..3.0, 0.0f64..1.0, any::<bool>()), 1..10),
    ) {
        let gens: Vec<_> = caps.iter().enumerate().map(|(i, &(p_max, _, on))| {
            let mut g = generator(1, 0.0, p_max, linear_cost(1.0));
            g.in_service = on || i == 0;
            g
        }).collect();
        let sp: Vec<f64> = caps.iter().map(|&(p_max, t, _)| p_max * t).collect();
        let a = distribute_slack(&gens, &sp, 0.1).unwrap();
        prop_assert!(a.pi_g.iter().all(|&x| x >= 0.0));
        prop_assert!((a.pi_g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (g, pi) in gens.iter().zip(&a.pi_g) {
            prop_assert!(g.in_service || *pi == 0.0);
        }
    }

    #[test]
    fn scenarios_respect_their_distribution(seed in any::<u64>(), sigma in 0.0f64..0.3, lo in 0.8f64..1.0, span in 0.0f64..0.2, k in 0usize..50) {
        let case = dcac_core::fixtures::case30();
        let config = ScenarioConfig { sigma, pf_min: lo, pf_max: (lo + span).min(1.0), n_samples: 1, seed };
        let s = generate_scenario(&case, &config, k);
        prop_assert_eq!(&s, &generate_scenario(&case, &config, k));
        for (j, &i) in s.load_buses.iter().enumerate() {
            prop_assert!(s.multipliers[j] > 0.0);
            let pf = s.power_factors[j];
            prop_assert!(pf >= config.pf_min && pf <= config.pf_max);
            prop_assert!((s.q_d[i].abs() - s.p_d[i] * pf.acos().tan()).abs() < 1e-12);
        }
    }

    #[test]
    fn lqcp_two_bus_fixed_point(r in 0.0f64..0.1, p_d in 0.1f64..1.5) {
        let case = two_bus(r, 0.1, p_d, 0.0);
        let opts = DcOptions::default();
        let base = solve_dc(&case, &LossModel::new(LossTag::Base), &opts).unwrap();
        let lqcp = solve_dc(&case, &LossModel::new(LossTag::Lqcp), &opts).unwrap();
        // sending-end flow f with f − r f² = p_d
        let f = if r == 0.0 { p_d } else { (1.0 - (1.0 - 4.0 * r * p_d).sqrt()) / (2.0 * r) };
        prop_assert!((lqcp.p_g_sp[0] - f).abs() < 1e-6, "{} vs {}", lqcp.p_g_sp[0], f);
        prop_assert!(base.objective <= lqcp.objective + 1e-9 * lqcp.objective.abs());
    }
}
