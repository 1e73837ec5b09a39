//! Randomised cross-module properties plus two statistical rate checks.
//!
//! Everything here treats the library as a black box: generators produce
//! arbitrary valid inputs and the assertions are invariants that hold for
//! every one of them, not frozen values for particular cases.

use fcfl_core::bounds::{
    delta_tilde, k_constant, phi, psi_loose, psi_tight, psi_tight_integer_oracle, DriftParams,
};
use fcfl_core::engine::{Engine, EngineConfig, ProbVector, ResetSchedule, SlotRecord, Variant};
use fcfl_core::graph::{
    build, chromatic_number_bruteforce, greedy_colouring, is_proper, unsatisfied_set, Colouring,
    Graph, GraphSpec,
};
use fcfl_core::rfid::ModifiedInventory;
use proptest::prelude::*;

fn arb_spec() -> impl Strategy<Value = GraphSpec> {
    prop_oneof![
        (1usize..=20).prop_map(GraphSpec::Complete),
        proptest::collection::vec(1usize..=5, 1..=4).prop_map(GraphSpec::CompleteMultipartite),
        (1usize..=16, 0.0f64..=1.0).prop_map(|(n, p)| GraphSpec::ErdosRenyi { n, p }),
        (2usize..=12, 0.0f64..=0.9).prop_map(|(n, fraction)| GraphSpec::EdgeThinned {
            base: Box::new(GraphSpec::Complete(n)),
            fraction,
        }),
    ]
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_loop_free_and_consistent(spec in arb_spec(), seed in any::<u64>()) {
        let g = build(&spec, seed).unwrap();
        let mut degree_sum = 0;
        for v in 0..g.n() as u32 {
            let nb = g.neighbours(v);
            degree_sum += nb.len();
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]), "unsorted or duplicated neighbours");
            for &u in nb {
                prop_assert_ne!(u, v, "self loop");
                prop_assert!(g.has_edge(u, v) && g.has_edge(v, u), "asymmetric edge");
            }
        }
        prop_assert_eq!(degree_sum, 2 * g.edge_count());
        prop_assert_eq!(
            g.max_degree(),
            (0..g.n() as u32).map(|v| g.degree(v)).max().unwrap_or(0)
        );
    }

    #[test]
    fn multipartite_edges_are_exactly_cross_part(sizes in proptest::collection::vec(1usize..=4, 1..=4)) {
        let g = build(&GraphSpec::CompleteMultipartite(sizes), 0).unwrap();
        let parts = g.partition().unwrap();
        for u in 0..g.n() as u32 {
            for v in (u + 1)..g.n() as u32 {
                prop_assert_eq!(g.has_edge(u, v), parts.part_of(u) != parts.part_of(v));
            }
        }
    }

    #[test]
    fn edge_list_round_trips(spec in arb_spec(), seed in any::<u64>()) {
        let g = build(&spec, seed).unwrap();
        let text = g.to_edge_list();
        let back = Graph::from_edge_list(&text).unwrap();
        prop_assert_eq!(back.n(), g.n());
        for v in 0..g.n() as u32 {
            prop_assert_eq!(back.neighbours(v), g.neighbours(v));
        }
    }

    #[test]
    fn proper_agrees_with_unsatisfied_set(
        spec in arb_spec(),
        seed in any::<u64>(),
        colour_seed in any::<u32>(),
    ) {
        let g = build(&spec, seed).unwrap();
        let d = g.max_degree() + 1;
        // A cheap deterministic colour assignment covering proper and
        // improper cases alike.
        let colours: Vec<u32> = (0..g.n() as u32)
            .map(|v| (v.wrapping_mul(colour_seed | 1).wrapping_add(colour_seed) % d as u32) + 1)
            .collect();
        let c = Colouring::new(colours, d).unwrap();
        let unsat = unsatisfied_set(&g, &c).unwrap();
        prop_assert_eq!(is_proper(&g, &c).unwrap(), unsat.is_empty());
        for &v in &unsat {
            prop_assert!(
                g.neighbours(v).iter().any(|&u| c.colours()[u as usize] == c.colours()[v as usize]),
                "vertex in the unsatisfied set has no conflicting neighbour"
            );
        }
    }

    #[test]
    fn drift_terms_stay_in_range(
        n in 2usize..=200,
        delta in 1usize..=50,
        b in prop_oneof![Just(0.25), Just(0.5), Just(0.75), Just(1.0)],
    ) {
        let p = DriftParams::new(n, delta, b).unwrap();
        let dt = delta_tilde(delta, b);
        prop_assert!(dt > 0.0 && dt < 1.0);
        prop_assert!(k_constant(b) > 1.0 && k_constant(b) < b.exp());
        for i in 0..=20 {
            let z = n as f64 * i as f64 / 20.0;
            prop_assert!(phi(&p, z) >= 0.0);
            prop_assert!(psi_loose(&p, z) >= -1e-12);
            prop_assert!(psi_tight(&p, z) >= -1e-12);
            if z <= n as f64 / 2.0 {
                prop_assert!(
                    psi_tight(&p, z) <= psi_loose(&p, z) + 1e-9,
                    "tight exceeded loose on the lower half at z={}", z
                );
            }
        }
    }

    #[test]
    fn integer_optimum_never_beats_relaxation(
        n in 1usize..=8,
        delta in 1usize..=4,
        b in prop_oneof![Just(0.5), Just(1.0)],
        z_frac in 0.0f64..=1.0,
    ) {
        let p = DriftParams::new(n, delta, b).unwrap();
        let z = (z_frac * n as f64).round() as usize;
        let oracle = psi_tight_integer_oracle(&p, z);
        prop_assert!(oracle <= psi_tight(&p, z as f64) + 1e-9);
    }

    #[test]
    fn traces_satisfy_slot_invariants(
        spec in arb_spec(),
        seed in any::<u64>(),
        b in prop_oneof![Just(0.25), Just(0.5), Just(1.0)],
        extra_colours in 0usize..3,
        period_scale in 1u64..=2,
    ) {
        let g = build(&spec, seed).unwrap();
        let d = g.max_degree() + 1 + extra_colours;
        let cfg = EngineConfig {
            d,
            b,
            schedule: ResetSchedule::Periodic { period: period_scale * (g.max_degree() as u64 + 1) },
        };
        let mut e = Engine::new(&g, cfg.clone(), seed).unwrap();
        let records = e.run_slots(120);
        let mut seen_absorbed = false;
        for (i, r) in records.iter().enumerate() {
            prop_assert_eq!(r.t, i as u64 + 1);
            prop_assert!(r.z <= g.n());
            if r.proper {
                prop_assert_eq!(r.z, 0, "a fully satisfied slot must leave no one unsettled");
            }
            if seen_absorbed {
                prop_assert!(r.z == 0 && r.proper, "left the absorbing state at t={}", r.t);
            }
            seen_absorbed |= r.z == 0 && r.proper;
        }
        // Mixed distributions always stay normalised with the mixing floor.
        for v in 0..g.n() as u32 {
            if let ProbVector::Dense(w) = e.prob_vector(v) {
                let sum: f64 = w.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(w.iter().all(|&x| x >= b / d as f64 - 1e-12));
            }
        }
        // Same configuration and seed, replayed: bit-identical trace.
        let mut e2 = Engine::new(&g, cfg, seed).unwrap();
        let replay: Vec<SlotRecord> = e2.run_slots(120);
        prop_assert_eq!(records, replay);
    }

    #[test]
    fn tag_flags_track_engine_permanence(
        sizes in proptest::collection::vec(1usize..=4, 1..=4),
        seed in any::<u64>(),
    ) {
        let g = build(&GraphSpec::CompleteMultipartite(sizes), 0).unwrap();
        let d = g.max_degree() + 1;
        let mut inv = ModifiedInventory::new(&g, d, d as u64, 0.0, seed).unwrap();
        let mut e = Engine::new(&g, Variant::SimplifiedFcfl.config(&g, d), seed).unwrap();
        for _ in 0..25 {
            inv.step_frame();
            e.step();
            prop_assert_eq!(inv.flagged(), e.permanent_flags().to_vec());
        }
    }
}

/// Entry into permanence happens at least as often as the uniform-mixing
/// floor predicts: a not-yet-settled vertex locks with probability at
/// least b/(Δ+1) per slot when D ≥ Δ+1.
#[test]
fn permanence_entry_rate_dominates_mixing_floor() {
    for &b in &[1.0, 0.5] {
        let g = build(&GraphSpec::Complete(8), 0).unwrap();
        let d = 8;
        let mut observed = 0u64;
        let mut entered = 0u64;
        for run in 0..7000 {
            let cfg = EngineConfig {
                d,
                b,
                schedule: ResetSchedule::Periodic { period: d as u64 },
            };
            let mut e = Engine::new(&g, cfg, 900 + run).unwrap();
            for _ in 0..20 {
                let before = e.permanent_flags().to_vec();
                e.step();
                let after = e.permanent_flags();
                for v in 0..g.n() {
                    if !before[v] {
                        observed += 1;
                        if after[v] {
                            entered += 1;
                        }
                    }
                }
            }
        }
        assert!(observed > 100_000, "need at least 1e5 observations, got {observed}");
        let rate = entered as f64 / observed as f64;
        let floor = b / (g.max_degree() as f64 + 1.0);
        let sigma = (rate * (1.0 - rate) / observed as f64).sqrt();
        assert!(
            rate >= floor - 3.0 * sigma,
            "entry rate {rate:.4} below floor {floor:.4} (b={b})"
        );
    }
}

/// At a reset, a formerly settled vertex with f still-unsettled neighbours
/// survives (re-locks immediately) with probability at least
/// ((Δ+1−b)/(Δ+1))^f, checked per stratum of f.
#[test]
fn reset_survival_rate_dominates_power_bound() {
    let g = build(&GraphSpec::Complete(10), 0).unwrap();
    let d = 10;
    let period = d as u64;
    let dt = delta_tilde(g.max_degree(), 1.0);
    let mut observed = vec![0u64; g.n()];
    let mut survived = vec![0u64; g.n()];
    for run in 0..4000 {
        let cfg = EngineConfig {
            d,
            b: 1.0,
            schedule: ResetSchedule::Periodic { period },
        };
        let mut e = Engine::new(&g, cfg, 5000 + run).unwrap();
        for t in 1..=3 * period {
            let before = e.permanent_flags().to_vec();
            let reset_next = t > 1 && (t - 1) % period == 0;
            e.step();
            if !reset_next {
                continue;
            }
            let after = e.permanent_flags();
            for v in 0..g.n() as u32 {
                if before[v as usize] {
                    let free = g.neighbours(v).iter().filter(|&&u| !before[u as usize]).count();
                    observed[free] += 1;
                    if after[v as usize] {
                        survived[free] += 1;
                    }
                }
            }
        }
    }
    for f in 0..g.n() {
        if observed[f] < 500 {
            continue;
        }
        let rate = survived[f] as f64 / observed[f] as f64;
        let bound = dt.powi(f as i32);
        let sigma = (rate * (1.0 - rate) / observed[f] as f64).sqrt().max(1e-6);
        assert!(
            rate >= bound - 3.0 * sigma,
            "survival {rate:.4} below {bound:.4} at f={f} ({} obs)",
            observed[f]
        );
    }
}

/// A converged engine keeps its colour vector byte for byte through a long
/// post-convergence window spanning many resets.
#[test]
fn proper_colouring_is_absorbing_across_resets() {
    let g = build(&GraphSpec::CompleteMultipartite(vec![4, 4, 4]), 0).unwrap();
    let d = g.max_degree() + 1;
    let mut e = Engine::new(&g, Variant::SimplifiedFcfl.config(&g, d), 31).unwrap();
    let res = e.run_until_proper(200_000);
    assert!(res.converged);
    let frozen = e.current_colouring().unwrap().colours().to_vec();
    for _ in 0..1200 {
        let rec = e.step();
        assert_eq!(rec.z, 0);
        assert!(rec.proper);
    }
    assert_eq!(e.current_colouring().unwrap().colours(), &frozen[..]);
}

/// The graph module's brute-force chromatic check agrees with a greedy
/// witness on instances small enough to enumerate.
#[test]
fn chromatic_bruteforce_brackets_greedy() {
    for (spec, expect) in [
        (GraphSpec::Complete(5), 5u32),
        (GraphSpec::CompleteMultipartite(vec![2, 2, 2]), 3),
        (GraphSpec::CompleteMultipartite(vec![3, 3]), 2),
    ] {
        let g = build(&spec, 0).unwrap();
        assert_eq!(chromatic_number_bruteforce(&g).unwrap(), expect);
        let witness = greedy_colouring(&g);
        let used = *witness.colours().iter().max().unwrap();
        assert!(used >= expect && used as usize <= g.max_degree() + 1);
        assert!(is_proper(&g, &witness).unwrap());
    }
}
