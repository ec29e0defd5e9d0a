use jamming_consensus::attacks::{check_assumption1, JamBudget};
use jamming_consensus::engine::{simulate, AttackModel, RealizedAttack, RunConfig};
use jamming_consensus::graph::Graph;
use jamming_consensus::schedule::ProtocolParams;
use jamming_consensus::verify::{
    lemma1_check, max_lyapunov_increase, max_speed_excess, stays_in_consensus, LYAPUNOV_TOLERANCE,
    SPEED_TOLERANCE,
};
use proptest::prelude::*;

/// Connected graph: a path plus extra edges picked by `mask`.
fn graph(n: usize, mask: u64) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    let mut bit = 0;
    for i in 0..n {
        for j in i + 2..n {
            if mask >> bit & 1 == 1 {
                edges.push((i, j));
            }
            bit += 1;
        }
    }
    Graph::new(n, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn aware_runs_keep_invariants(
        n in 2usize..7,
        mask in any::<u64>(),
        x0 in prop::collection::vec(-1.0f64..1.0, 6),
        kappa in 0.0f64..0.05,
        rho in 0.0f64..0.6,
        seed in any::<u64>(),
    ) {
        let budget = JamBudget::new(kappa, rho).unwrap();
        let cfg = RunConfig {
            graph: graph(n, mask),
            params: ProtocolParams::uniform(n, 0.001, 1.01, 0.02),
            x0: x0[..n].to_vec(),
            attack: AttackModel::Aware(budget),
            horizon: 40.0,
            seed,
            stop_at_quiescence: false,
        };
        let tr = simulate(&cfg).unwrap();
        prop_assert!(lemma1_check(&tr).is_ok());
        prop_assert!(max_lyapunov_increase(&tr, &cfg.graph) <= LYAPUNOV_TOLERANCE);
        prop_assert!(max_speed_excess(&tr) <= SPEED_TOLERANCE);
        let RealizedAttack::Intervals(history) = tr.attack() else { unreachable!() };
        prop_assert!(check_assumption1(history.intervals(), budget, tr.horizon()).is_ok());
        prop_assert!(stays_in_consensus(&tr, &cfg.graph).is_ok());
    }

    #[test]
    fn unattacked_states_stay_in_initial_hull(
        n in 2usize..7,
        mask in any::<u64>(),
        x0 in prop::collection::vec(-1.0f64..1.0, 6),
        seed in any::<u64>(),
    ) {
        let cfg = RunConfig {
            graph: graph(n, mask),
            params: ProtocolParams::uniform(n, 0.001, 1.01, 0.02),
            x0: x0[..n].to_vec(),
            attack: AttackModel::None,
            horizon: 5.0,
            seed,
            stop_at_quiescence: true,
        };
        let tr = simulate(&cfg).unwrap();
        let lo = cfg.x0.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cfg.x0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for m in 0..tr.len() {
            for &x in tr.state(m) {
                prop_assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
            }
        }
    }
}
