//! Randomized invariants across modules.

use std::collections::BTreeSet;

use codnet::baselines::{coded_energy, coded_weight, dst_approx, gen_with_terminals, synthetic_isp, GeoVariant};
use codnet::codec::{source_init, SinkDecoder};
use codnet::dist_opt::{run_subgradient, simplex_project, Recovery, StepSchedule, SubgradProblem};
use codnet::dynmulti::{admissible, membership_step, myopic_policy, random_instance, DynState, MembershipProcess};
use codnet::finmem::{loss_bound_from_sums, loss_upper_bound, steady_state, ChainParams};
use codnet::galois::{field, mat_rank, FieldMatrix};
use codnet::netmodel::{b_constants, max_flow_lp, min_cut_enumerate, reception_rates, FlowAssignment, Hypernet, LossModel};
use codnet::simulator::{run_session, tandem_net, Connection, SimConfig};
use codnet::subgraph_opt::{build_lossless, lm_smooth, solve_reference, MulticastSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(seed: u64, n: usize) -> (Hypernet, LossModel, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Hypernet::new(n);
    for i in 0..n {
        for _ in 0..rng.random_range(1..=2) {
            let fan = rng.random_range(1..=3.min(n - 1));
            let heads: BTreeSet<usize> =
                (0..fan).map(|_| (i + rng.random_range(1..n)) % n).collect();
            let heads: Vec<usize> = heads.into_iter().collect();
            let _ = net.add_arc(i, &heads);
        }
    }
    let p = net.arcs().iter().map(|a| (0..a.fanout()).map(|_| rng.random_range(0.2..1.0)).collect()).collect();
    let z = (0..net.num_arcs()).map(|_| rng.random_range(0.1..1.0)).collect();
    (net, LossModel::Iid(p), z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_axioms(m in 1u32..=16, a in any::<u32>(), b in any::<u32>(), c in any::<u32>()) {
        let f = field(m).unwrap();
        let mask = f.q() - 1;
        let (a, b, c) = ((a & mask) as u16, (b & mask) as u16, (c & mask) as u16);
        prop_assert_eq!(f.mul(a, f.mul(b, c)), f.mul(f.mul(a, b), c));
        prop_assert_eq!(f.mul(a, b), f.mul(b, a));
        prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        if a != 0 {
            prop_assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
        }
    }

    #[test]
    fn rank_of_transpose(m in prop::sample::select(vec![1u32, 2, 4, 8]), rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
        let f = field(m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FieldMatrix::random(f, rows, cols, &mut rng);
        prop_assert_eq!(mat_rank(f, &a), mat_rank(f, &a.transpose()));
    }

    #[test]
    fn decoding_recovers_messages(k in 1usize..8, lambda in 1usize..4, loss in 0.0f64..0.7, seed in any::<u64>()) {
        let f = field(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msgs: Vec<Vec<u16>> = (0..k).map(|_| f.random_vec(&mut rng, lambda)).collect();
        let src = source_init(f, 3, &msgs).unwrap();
        let mut sink = SinkDecoder::new(f, 3, k, lambda);
        for _ in 0..400 {
            let pkt = src.emit_coded(&mut rng).unwrap();
            if rng.random::<f64>() >= loss {
                sink.decode_incremental(&pkt);
            }
            if sink.is_complete() {
                break;
            }
        }
        prop_assert!(sink.is_complete());
        prop_assert_eq!(sink.decoded().unwrap(), msgs);
    }

    #[test]
    fn reception_mass(seed in any::<u64>(), n in 3usize..7) {
        let (net, loss, z) = random_net(seed, n);
        let rr = reception_rates(&net, &loss, &z).unwrap();
        let LossModel::Iid(p) = &loss else { unreachable!() };
        for a in 0..net.num_arcs() {
            let got: f64 = rr.zk[a].iter().map(|e| e.1).sum();
            let miss: f64 = p[a].iter().map(|v| 1.0 - v).product();
            prop_assert!((got - z[a] * (1.0 - miss)).abs() < 1e-12);
        }
    }

    #[test]
    fn min_cut_equals_max_flow(seed in any::<u64>(), n in 3usize..8) {
        let (net, loss, z) = random_net(seed, n);
        let rr = reception_rates(&net, &loss, &z).unwrap();
        let (cut, _) = min_cut_enumerate(&net, &rr, 0, n - 1);
        let (flow, _) = max_flow_lp(&net, &rr, 0, n - 1).unwrap();
        prop_assert!((cut - flow).abs() <= 1e-6 * cut.max(1.0), "cut {} flow {}", cut, flow);
    }

    #[test]
    fn projection_invariants(u in prop::collection::vec(-5.0f64..5.0, 1..7), s in 0.0f64..4.0) {
        let v = simplex_project(&u, s);
        prop_assert!((v.iter().sum::<f64>() - s).abs() <= 1e-10);
        let top = u.iter().zip(&v).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in u.iter().zip(&v) {
            prop_assert!(*b >= 0.0);
            if *b > 0.0 {
                prop_assert!((a - b - top).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn stationary_law_normalized(eps in 0.0f64..0.6, frac in 0.01f64..0.99, m in 1usize..40) {
        let p = ChainParams::new(frac * (1.0 - eps), eps, m).unwrap();
        prop_assert!((steady_state(&p).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!((loss_upper_bound(&p) - loss_bound_from_sums(&p)).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn objective_ignores_arc_order(seed in any::<u64>(), n in 4usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, _, _) = random_net(seed, n);
        let cost: Vec<f64> = (0..net.num_arcs()).map(|_| rng.random_range(0.5..3.0)).collect();
        let sinks = vec![n - 1, n - 2];
        let spec = MulticastSpec::linear(0, &sinks, 0.5, &cost);
        let Ok(sol) = solve_reference(&build_lossless(&net, &spec).unwrap()) else { return Ok(()) };
        let mut order: Vec<usize> = (0..net.num_arcs()).collect();
        order.reverse();
        let shift = seed as usize % order.len();
        order.rotate_left(shift);
        let mut net2 = Hypernet::new(n);
        for &a in &order {
            net2.add_arc(net.arc(a).tail, &net.arc(a).heads).unwrap();
        }
        let cost2: Vec<f64> = order.iter().map(|&a| cost[a]).collect();
        let sol2 = solve_reference(&build_lossless(&net2, &MulticastSpec::linear(0, &sinks, 0.5, &cost2)).unwrap()).unwrap();
        prop_assert!((sol.cost - sol2.cost).abs() <= 1e-7 * sol.cost.max(1.0));

        // The power mean over sinks falls toward the max as the order grows.
        let rr = b_constants(&net, &LossModel::Lossless).unwrap();
        let fa: FlowAssignment = sol.flows(&net, 0);
        let hi = lm_smooth(&net, &rr, &fa, 1000.0);
        for m in [1.0, 2.0, 4.0] {
            let lo = lm_smooth(&net, &rr, &fa, m);
            prop_assert!(lo.iter().zip(&hi).all(|(a, b)| a + 1e-9 >= *b));
        }
        prop_assert!(hi.iter().zip(&sol.z).all(|(h, z)| *h <= z * 1.01 + 1e-9));
    }

    #[test]
    fn trees_are_minimal_and_dominated(seed in any::<u64>(), k in 1usize..6) {
        let g = synthetic_isp(16, 1.5, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = rng.random_range(0..16);
        let pool: Vec<usize> = (0..16).filter(|&v| v != s).collect();
        let mut t: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
        t.sort_unstable();
        let tree = dst_approx(&g, s, &t, 2).unwrap();
        prop_assert!(tree.is_valid(s, &t));
        prop_assert!(tree.prunable_leaves(&t).is_empty());
        prop_assert!(coded_weight(&g, s, &t).unwrap() <= tree.cost + 1e-6);
    }

    #[test]
    fn subgradient_dual_below_optimum(seed in 0u64..1000) {
        let (geo, s, t, _) = gen_with_terminals(12, seed, GeoVariant::EnergyMulticast, 3).unwrap();
        let opt = coded_energy(&geo, s, &t).unwrap();
        let p = SubgradProblem::new(&geo.net, &MulticastSpec::linear(s, &t, 1.0, &geo.cost)).unwrap();
        let run = run_subgradient(&p, StepSchedule::Power { alpha: 0.8 }, Recovery::Modified, 60, None).unwrap();
        for r in &run.records {
            prop_assert!(r.dual_value <= opt + 1e-6 * opt.max(1.0), "n {} dual {} opt {}", r.n, r.dual_value, opt);
        }
    }

    #[test]
    fn myopic_steps_are_admissible(seed in 0u64..500) {
        let prob = random_instance(6, seed).unwrap();
        let proc = MembershipProcess { birth: 0.4, death: 0.2 };
        let pool = prob.candidates();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t0: BTreeSet<usize> = pool.iter().copied().take(1).collect();
        let mut st = DynState { z: prob.static_opt(&t0).unwrap(), sinks: t0, epoch: 0 };
        for _ in 0..8 {
            let next = membership_step(&proc, &pool, &st.sinks, &mut rng);
            if next.is_empty() {
                break;
            }
            let z = myopic_policy(&prob, &st, &next).unwrap();
            prop_assert!(admissible(&prob, &st.z, &next, &z).unwrap());
            st = DynState { z, sinks: next, epoch: st.epoch + 1 };
        }
    }

    #[test]
    fn sessions_are_deterministic_and_respect_cuts(seed in any::<u64>(), z1 in 0.3f64..1.0, z2 in 0.3f64..1.0) {
        let net = tandem_net(2);
        let conn = Connection { source: 0, sinks: vec![2], rate: 0.4 };
        let cfg = SimConfig { k: 24, seed, sample_every: 2.0, ..SimConfig::default() };
        let loss = LossModel::Iid(vec![vec![0.8], vec![0.9]]);
        let a = run_session(&net, &loss, &[z1, z2], &conn, &cfg).unwrap();
        let b = run_session(&net, &loss, &[z1, z2], &conn, &cfg).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        for (tau, row) in a.sample_times.iter().zip(&a.ranks) {
            let _ = tau;
            prop_assert!(row[1] as u64 <= a.arc_deliveries[0] && row[2] as u64 <= a.arc_deliveries[1]);
        }
        prop_assert!(a.sinks[0].rank as u64 <= a.arc_deliveries[0].min(a.arc_deliveries[1]));
    }
}
