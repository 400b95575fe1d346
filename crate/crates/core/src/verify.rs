//! The acceptance suite: one check per criterion, each reporting a status,
//! the measured quantities and its wall-clock time.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    coded_energy, coded_weight, dst_approx, gen_geometric, gen_with_terminals, mip_multicast, pick_terminals, synthetic_isp,
    unicast_cost, Approach, Digraph, GeoVariant,
};
use crate::dist_opt::{
    frank_wolfe, kkt_residual, run_primal_dual, run_subgradient, simplex_project, Gains, PdProblem, PdState, Recovery,
    StepSchedule, SubgradProblem,
};
use crate::dynmulti::{
    admissible, classify, episode_cost, myopic_policy, random_instance, routed_extension_exists, Cone, DynProblem,
    DynState, MembershipProcess, Policy,
};
use crate::finmem::{
    loss_upper_bound, simulate_isolated, simulate_tandem, steady_state, tandem_rate_loss, ChainParams, IsolatedMode,
    TandemParams,
};
use crate::instances::{buttvar, four_node};
use crate::netmodel::{flow_feasible, reception_rates, AlohaParams, LossModel, NodeId};
use crate::simulator::{
    estimate_error_exponent, run_session, tandem_net, track_innovation, Connection, ExponentConfig, SimConfig,
};
use crate::stats::sign_test_p;
use crate::subgraph_opt::{
    build_lossless, build_nested, recover_x, solve_aloha_relay, solve_reference, ArcCost, MulticastSpec, NestedReach,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: String,
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>3} {} {} ({:.1}s of {:.0}s): {}",
            self.id,
            self.status.label(),
            self.name,
            self.seconds,
            self.limit_seconds,
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str, f64); 13] = [
    (1, "aloha optimum", 1.0),
    (2, "steady-state identity", 120.0),
    (3, "tandem rate loss", 300.0),
    (4, "capacity achievement", 300.0),
    (5, "fluid limit", 60.0),
    (6, "error exponent", 600.0),
    (7, "nested equivalence", 120.0),
    (8, "projection", 60.0),
    (9, "subgradient convergence", 600.0),
    (10, "primal-dual", 600.0),
    (11, "baseline dominance", 900.0),
    (12, "unicast study", 900.0),
    (13, "dynamic multicast", 300.0),
];

/// Runs criterion `id`. The status is a failure when any check misses or
/// the time limit is exceeded.
pub fn run_criterion(id: u8) -> CriterionReport {
    let (_, name, limit) = *CRITERIA.iter().find(|c| c.0 == id).expect("known criterion id");
    let t0 = Instant::now();
    let res = match id {
        1 => crit_aloha(),
        2 => crit_steady_state(),
        3 => crit_tandem(),
        4 => crit_capacity(),
        5 => crit_fluid(),
        6 => crit_exponent(),
        7 => crit_nested(),
        8 => crit_projection(),
        9 => crit_subgradient(),
        10 => crit_primal_dual(),
        11 => crit_dominance(),
        12 => crit_unicast(),
        _ => crit_dynamic(),
    };
    let seconds = t0.elapsed().as_secs_f64();
    let (ok, mut detail) = match res {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if seconds > limit {
        detail.push_str("; time limit exceeded");
    }
    CriterionReport {
        id: id.to_string(),
        name: name.to_string(),
        status: if ok && seconds <= limit { Status::Pass } else { Status::Fail },
        detail,
        seconds,
        limit_seconds: limit,
    }
}

pub fn run_all(ids: &[u8]) -> Vec<CriterionReport> {
    ids.iter().map(|&id| run_criterion(id)).collect()
}

type Check = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn crit_aloha() -> Check {
    let s = solve_aloha_relay(&AlohaParams::reference(), 1.0 / 8.0).map_err(err)?;
    let ok = (s.z1 - 0.179).abs() <= 0.002 && (s.z2 - 0.141).abs() <= 0.002 && (s.cost - 0.320).abs() <= 0.004;
    Ok((ok, format!("z = ({:.4}, {:.4}), cost {:.4}", s.z1, s.z2, s.cost)))
}

/// Stationary law from the balance equations of the occupancy chain,
/// solved as a dense linear system.
pub fn balance_oracle(p: &ChainParams) -> Vec<f64> {
    let m = p.m;
    let (up, down, top) = (p.alpha(), p.beta(), 1.0 - p.eps);
    let mut t = vec![vec![0.0; m + 1]; m + 1];
    for i in 0..=m {
        if i < m {
            t[i][i + 1] = up;
        }
        if i == m {
            t[i][i - 1] = top;
        } else if i > 0 {
            t[i][i - 1] = down;
        }
        t[i][i] = 1.0 - t[i].iter().sum::<f64>();
    }
    // π (T - I) = 0 with the last equation replaced by Σ π = 1.
    let n = m + 1;
    let mut a = vec![vec![0.0; n + 1]; n];
    for (j, row) in a.iter_mut().enumerate() {
        for i in 0..n {
            row[i] = t[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[n - 1] = vec![1.0; n + 1];
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Checks a stationary-law implementation against the oracle on `draws`
/// random parameter sets. Returns the worst normalization and oracle errors.
pub fn check_steady_state(law: fn(&ChainParams) -> Vec<f64>, draws: usize, seed: u64) -> (bool, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_sum, mut worst_oracle) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        let eps = rng.random_range(0.0..0.5);
        let r = rng.random_range(0.01..(1.0 - eps - 0.01));
        let m = rng.random_range(1..=20);
        let p = ChainParams::new(r, eps, m).expect("valid draw");
        let pi = law(&p);
        let oracle = balance_oracle(&p);
        worst_sum = worst_sum.max((pi.iter().sum::<f64>() - 1.0).abs());
        let d = pi.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_oracle = worst_oracle.max(if pi.len() == oracle.len() { d } else { f64::INFINITY });
    }
    (worst_sum <= 1e-12 && worst_oracle <= 1e-9, worst_sum, worst_oracle)
}

fn crit_steady_state() -> Check {
    let (ok_law, ws, wo) = check_steady_state(steady_state, 1000, 2);
    let mut dominated = 0;
    let mut worst = f64::NEG_INFINITY;
    for r in [0.6, 0.8] {
        for m in 1..=10 {
            let p = ChainParams::new(r, 0.1, m).map_err(err)?;
            let mc = simulate_isolated(&p, 1 << 16, 200_000, IsolatedMode::ShiftRegister, 7 + m as u64).map_err(err)?;
            let slack = loss_upper_bound(&p) + 3.0 * mc.loss_se - mc.loss_rate;
            worst = worst.max(-slack);
            dominated += (slack >= 0.0) as usize;
        }
    }
    Ok((
        ok_law && dominated == 20,
        format!("|Σπ-1| <= {ws:.1e}, oracle error {wo:.1e}; bound dominates {dominated}/20 (worst excess {worst:.2e})"),
    ))
}

fn crit_tandem() -> Check {
    let mut within = 0;
    let mut ordered = 0;
    let mut worst_z = 0.0f64;
    for m in 1..=8 {
        let p = TandemParams::new(0.2, 0.1, m).map_err(err)?;
        let sim = simulate_tandem(&p, 65536.0, 1_000_000, 100 + m as u64);
        let z = (sim.rate_loss - tandem_rate_loss(&p)).abs() / sim.std_err;
        worst_z = worst_z.max(z);
        within += (z <= 3.0) as usize;
        let wins = (0..20u64)
            .filter(|&s| {
                let a = simulate_tandem(&p, 2.0, 100_000, 1000 * m as u64 + s);
                let b = simulate_tandem(&p, 256.0, 100_000, 1000 * m as u64 + s);
                a.rate_loss > b.rate_loss
            })
            .count() as u64;
        ordered += (sign_test_p(wins, 20) <= 0.05) as usize;
    }
    Ok((
        within == 8 && ordered == 8,
        format!("within 3 SE at {within}/8 memory sizes (worst {worst_z:.2} SE); q = 2 worse than q = 256 at {ordered}/8"),
    ))
}

fn crit_capacity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut summary = Vec::new();
    let mut ok = true;
    for links in [2usize, 3] {
        let net = tandem_net(links);
        for factor in [0.9, 1.1] {
            let mut decoded = 0;
            for seed in 0..100 {
                let z: Vec<f64> = (0..links).map(|_| rng.random_range(0.6..1.0)).collect();
                let c = z.iter().copied().fold(f64::INFINITY, f64::min);
                let conn = Connection { source: 0, sinks: vec![links], rate: factor * c };
                let cfg = SimConfig { k: 256, m: 8, lambda: 1, seed, ..SimConfig::default() };
                decoded += run_session(&net, &LossModel::Lossless, &z, &conn, &cfg).map_err(err)?.all_decoded() as usize;
            }
            ok &= if factor < 1.0 { decoded >= 99 } else { decoded <= 1 };
            summary.push(format!("{links} links at {factor}c: {decoded}/100"));
        }
    }
    Ok((ok, summary.join(", ")))
}

fn crit_fluid() -> Check {
    let net = tandem_net(2);
    let conn = Connection { source: 0, sinks: vec![2], rate: 0.3 };
    let k = 2000;
    let cfg = SimConfig { k, lambda: 0, seed: 9, sample_every: 10.0, duration: Some(k as f64 / 0.8), ..SimConfig::default() };
    let st = run_session(&net, &LossModel::Lossless, &[0.8, 0.4], &conn, &cfg).map_err(err)?;
    let r = track_innovation(&st, 1, 2, 0.8, 0.4, 1, 256.0).map_err(err)?;
    Ok((
        r.rel_error <= 0.10,
        format!("slope {:.4} vs {:.4} ({:.2}% off) over {} samples", r.fitted_slope, r.theory_slope, 100.0 * r.rel_error, r.points),
    ))
}

fn crit_exponent() -> Check {
    let rep = estimate_error_exponent(&ExponentConfig::default()).map_err(err)?;
    let used: Vec<f64> = rep.points.iter().filter(|p| p.failures > 0).map(|p| p.p_e).collect();
    let lo = used.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = used.iter().copied().fold(0.0, f64::max);
    let spans = lo <= 1e-3 && hi >= 1e-1;
    let rel = (rep.slope - rep.theory) / rep.theory;
    Ok((
        rel.abs() <= 0.25 && spans,
        format!("slope {:.4} vs {:.4} ({:+.1}%), p_e from {lo:.1e} to {hi:.1e}", rep.slope, rep.theory, 100.0 * rel),
    ))
}

fn crit_nested() -> Check {
    let mut worst = 0.0f64;
    let mut feasible = 0;
    for k in 0..50u64 {
        let n = 6 + (k % 10) as usize;
        let sinks = 1 + (k % 3) as usize;
        let (geo, s, ts, _) = gen_with_terminals(n, 500 + 1000 * k, GeoVariant::EnergyMulticast, sinks).map_err(err)?;
        let spec = MulticastSpec::linear(s, &ts, 1.0, &geo.cost);
        let full = solve_reference(&build_lossless(&geo.net, &spec).map_err(err)?).map_err(err)?;
        let reach = NestedReach::from_net(&geo.net, &spec.cost).map_err(err)?;
        let red = solve_reference(&build_nested(&geo.net, &spec, &reach).map_err(err)?).map_err(err)?;
        worst = worst.max((full.cost - red.cost).abs() / full.cost.max(1e-12));
        let fa = recover_x(&geo.net, &reach, s, &spec.sink_rates(), &red.xhat, &red.z).map_err(err)?;
        let rr = reception_rates(&geo.net, &LossModel::Lossless, &red.z).map_err(err)?;
        feasible += flow_feasible(&geo.net, &rr, &fa).feasible as usize;
    }
    Ok((
        worst <= 1e-6 && feasible == 50,
        format!("worst relative gap {worst:.1e}; recovered flows feasible on {feasible}/50"),
    ))
}

/// Projection found by maximizing the concave dual over the shift `c` on a
/// grid of spacing `h`; the primal point is `(u - c)^+`.
pub fn projection_grid_oracle(u: &[f64], s: f64, h: f64) -> Vec<f64> {
    let dual = |c: f64| -> f64 {
        u.iter()
            .map(|&x| {
                let v = (x - c).max(0.0);
                (v - x).powi(2) + 2.0 * c * v
            })
            .sum::<f64>()
            - 2.0 * c * s
    };
    let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min) - s;
    let steps = ((top - lo) / h).ceil() as usize;
    let c = (0..=steps).map(|k| lo + k as f64 * h).max_by(|&a, &b| dual(a).total_cmp(&dual(b))).unwrap();
    u.iter().map(|&x| (x - c).max(0.0)).collect()
}

/// Optimality condition of the projection: positive components have the
/// largest `u - v`.
pub fn projection_condition(u: &[f64], v: &[f64], tol: f64) -> bool {
    let gap_max = u.iter().zip(v).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    u.iter().zip(v).all(|(a, b)| *b >= -tol && (*b <= tol || a - b >= gap_max - tol))
}

fn crit_projection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst, mut cond) = (0.0f64, 0usize);
    let draws = 10_000;
    for _ in 0..draws {
        let k = rng.random_range(1..=6);
        let u: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = rng.random_range(0.01..3.0);
        let v = simplex_project(&u, s);
        let o = projection_grid_oracle(&u, s, 1e-3);
        worst = worst.max(v.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        cond += (projection_condition(&u, &v, 1e-12) && (v.iter().sum::<f64>() - s).abs() < 1e-9) as usize;
    }
    Ok((
        worst <= 1e-3 && cond == draws,
        format!("max deviation from grid oracle {worst:.1e}; optimality condition holds on {cond}/{draws}"),
    ))
}

fn crit_subgradient() -> Check {
    let (mut opt_sum, mut mod_sum) = (0.0, 0.0);
    let mut worst = 0.0f64;
    let (mut better, mut tied) = (0, 0);
    let mut later = 0;
    for seed in 0..20u64 {
        let geo = gen_geometric(30, 100 + seed, GeoVariant::EnergyMulticast).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, ts) = pick_terminals(&geo, 4, &mut rng).map_err(err)?;
        let spec = MulticastSpec::linear(s, &ts, 1.0, &geo.cost);
        let opt = coded_energy(&geo, s, &ts).map_err(err)?;
        let p = SubgradProblem::new(&geo.net, &spec).map_err(err)?;
        let m = run_subgradient(&p, StepSchedule::Power { alpha: 0.8 }, Recovery::Modified, 100, None).map_err(err)?;
        let o = run_subgradient(&p, StepSchedule::Power { alpha: 0.8 }, Recovery::Original, 100, None).map_err(err)?;
        let m100 = m.records[99].primal_cost;
        opt_sum += opt;
        mod_sum += m100;
        worst = worst.max(m100 / opt - 1.0);
        let (a, b) = (m.records[24].primal_cost, o.records[24].primal_cost);
        better += (a < b - 1e-9) as usize;
        tied += ((a - b).abs() <= 1e-9) as usize;
        later += (m100 < o.records[99].primal_cost - 1e-9) as usize;
    }
    let gap = mod_sum / opt_sum - 1.0;
    Ok((
        gap <= 0.05 && better >= 15,
        format!(
            "mean cost at 100 iterations {:.2}% above optimum, within 5%: {} (worst instance {:.2}%); modified beats \
             original at 25 iterations on {better}/20 ({tied} identical, both average uniformly before iteration 30), \
             at 100 on {later}/20",
            100.0 * gap,
            if gap <= 0.05 { "yes" } else { "no" },
            100.0 * worst
        ),
    ))
}

/// Small random smoothed instance: a 5-node digraph containing the path
/// 0-1-2-3-4, two sinks, quadratic costs and `l^4` smoothing.
pub fn smoothed_instance(seed: u64) -> PdProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 5;
    let mut net = crate::netmodel::Hypernet::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && (j == i + 1 || rng.random::<f64>() < 0.35) {
                net.add_arc(i, &[j]).expect("simple arc");
            }
        }
    }
    let cost = (0..net.num_arcs()).map(|_| ArcCost::Power { a: rng.random_range(0.5..2.0), exp: 2.0 }).collect();
    let spec = MulticastSpec { source: 0, sinks: vec![3, 4], rates: vec![1.0, 1.0], cost, zmax: None };
    PdProblem::new(&net, &spec, 4.0).expect("valid instance")
}

/// Flows plus the sink-relative prices of nodes that carry flow of that
/// sink; other prices are not pinned down by the optimality conditions.
fn identified_point(prob: &PdProblem, st: &PdState) -> Vec<f64> {
    let mut v: Vec<f64> = st.x.iter().flatten().flatten().copied().collect();
    let rel = st.relative_prices(prob);
    for (ti, xs) in st.x.iter().enumerate() {
        let mut through = vec![0.0; prob.net.num_nodes()];
        for (a, arc) in prob.net.arcs().iter().enumerate() {
            for (h, &j) in arc.heads.iter().enumerate() {
                through[arc.tail] += xs[a][h].max(0.0);
                through[j] += xs[a][h].max(0.0);
            }
        }
        for (i, &f) in through.iter().enumerate() {
            v.push(if f > 1e-4 { rel[ti][i] } else { 0.0 });
        }
    }
    v
}

fn crit_primal_dual() -> Check {
    let (mut spread, mut res, mut fw_gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut unconverged = 0;
    for inst in 0..10u64 {
        let prob = smoothed_instance(inst);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let mut first: Option<Vec<f64>> = None;
        let (_, reference) = frank_wolfe(&prob, 20_000, 1e-10).map_err(err)?;
        for _ in 0..20 {
            let st = PdState::random(&prob, 2.0, &mut rng);
            let run = run_primal_dual(&prob, st, &Gains::default(), 400_000, 1e-7, 10_000).map_err(err)?;
            unconverged += !run.converged as usize;
            res = res.max(kkt_residual(&prob, &run.state));
            let pt = identified_point(&prob, &run.state);
            if let Some(f) = &first {
                spread = spread.max(pt.iter().zip(f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            } else {
                fw_gap = fw_gap.max((prob.cost_of(&run.state.x) - reference).abs() / reference);
                first = Some(pt);
            }
        }
    }
    Ok((
        spread <= 1e-3 && res <= 1e-6 && unconverged == 0,
        format!(
            "spread across starts {spread:.1e}; worst KKT residual {res:.1e}; {unconverged} runs unconverged; \
             cost within {fw_gap:.1e} of the Frank-Wolfe reference"
        ),
    ))
}

/// Coded and tree costs for one wireline instance.
pub fn wireline_pair(g: &Digraph, s: NodeId, sinks: &[NodeId]) -> Result<(f64, f64), String> {
    let tree = dst_approx(g, s, sinks, 2).map_err(err)?;
    let coded = coded_weight(g, s, sinks).map_err(err)?;
    Ok((coded, tree.cost))
}

fn pick_sinks<R: Rng>(n: usize, k: usize, rng: &mut R) -> (NodeId, Vec<NodeId>) {
    let s = rng.random_range(0..n);
    let pool: Vec<NodeId> = (0..n).filter(|&v| v != s).collect();
    let mut t: Vec<NodeId> = rand::seq::index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    t.sort_unstable();
    (s, t)
}

fn crit_dominance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut wl_ok, mut wl_n) = (0, 0);
    for k in 0..100u64 {
        let g = synthetic_isp(30, 2.0, 300 + k);
        let (s, t) = pick_sinks(30, [2, 4, 8][k as usize % 3], &mut rng);
        let (coded, tree) = wireline_pair(&g, s, &t)?;
        wl_n += 1;
        wl_ok += (coded <= tree + 1e-6) as usize;
    }
    let (mut en_ok, mut en_n) = (0, 0);
    let (mut mip_sum, mut coded_sum) = (0.0, 0.0);
    for k in 0..108u64 {
        let n = [20, 30, 40, 50][k as usize % 4];
        let sinks = [2, 4, 8][(k as usize / 4) % 3];
        let (geo, s, t, _) = gen_with_terminals(n, 700 + 1000 * k, GeoVariant::EnergyMulticast, sinks).map_err(err)?;
        let mip = mip_multicast(&geo, s, &t).map_err(err)?.cost;
        let coded = coded_energy(&geo, s, &t).map_err(err)?;
        en_n += 1;
        en_ok += (coded <= mip + 1e-6) as usize;
        mip_sum += mip;
        coded_sum += coded;
    }
    let reduction = 1.0 - coded_sum / mip_sum;
    Ok((
        wl_ok == wl_n && en_ok == en_n && (0.10..=0.55).contains(&reduction),
        format!(
            "coded <= tree on {wl_ok}/{wl_n} wireline instances, coded <= MIP on {en_ok}/{en_n} wireless instances; \
             mean energy reduction {:.1}%",
            100.0 * reduction
        ),
    ))
}

fn crit_unicast() -> Check {
    let mut sums = [0.0; 5];
    let count = 200;
    for seed in 0..count {
        let geo = gen_geometric(9, seed, GeoVariant::FadingUnicast).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let (s, t) = pick_terminals(&geo, 1, &mut rng).map_err(err)?;
        for (k, a) in Approach::ALL.iter().enumerate() {
            sums[k] += unicast_cost(&geo, s, t[0], *a, a.default_selector()).map_err(err)?;
        }
    }
    let means = sums.map(|v| v / count as f64);
    let ratio = means[2] / means[4];
    let ordered = means.windows(2).all(|w| w[0] >= w[1]);
    Ok((
        (1.5..=2.5).contains(&ratio) && ordered,
        format!(
            "means {:.3}/{:.3}/{:.3}/{:.3}/{:.3} for approaches 1-5; link-by-link over full coding {ratio:.3}",
            means[0], means[1], means[2], means[3], means[4]
        ),
    ))
}

/// The four-node join/leave swap: returns the sequence of subgraphs and
/// cones chosen by the myopic policy.
pub fn four_node_sequence() -> Result<Vec<(Vec<f64>, Cone)>, String> {
    let prob = DynProblem::new(four_node(), LossModel::Lossless, 0, 1.0, vec![ArcCost::Linear(1.0); 4]);
    let t2: BTreeSet<NodeId> = [2, 3].into_iter().collect();
    let mut st = DynState { z: vec![1.0, 0.0, 1.0, 0.0], sinks: [1, 3].into_iter().collect(), epoch: 0 };
    let mut seq = Vec::new();
    for _ in 0..3 {
        let z = myopic_policy(&prob, &st, &t2).map_err(err)?;
        if !admissible(&prob, &st.z, &t2, &z).map_err(err)? {
            return Err("inadmissible step".into());
        }
        let cone = classify(&st.z, &z).expect("admissible steps lie in a cone");
        seq.push((z.clone(), cone));
        st = DynState { z, sinks: t2.clone(), epoch: st.epoch + 1 };
    }
    Ok(seq)
}

fn crit_dynamic() -> Check {
    let seq = four_node_sequence()?;
    let want = [
        (vec![1.0, 1.0, 1.0, 1.0], Cone::Up),
        (vec![0.0, 1.0, 0.0, 1.0], Cone::Down),
        (vec![0.0, 1.0, 0.0, 1.0], Cone::Stay),
    ];
    let example = seq == want;
    let proc = MembershipProcess { birth: 0.4, death: 0.3 };
    let (mut episodes, mut broken) = (0, 0);
    for inst in 0..10u64 {
        let prob = random_instance(6, inst).map_err(err)?;
        let t0: BTreeSet<NodeId> = [1 + inst as usize % 5].into_iter().collect();
        let est = episode_cost(&prob, &proc, Policy::Myopic, &t0, 40, 100, inst).map_err(err)?;
        episodes += est.episodes;
        broken += est.continuity_failures;
    }
    let net = buttvar();
    let arc = |i: usize, j: usize| net.find_arc(i - 1, &[j - 1]).expect("buttvar arc");
    let a = vec![arc(1, 3), arc(3, 4), arc(4, 5), arc(5, 6), arc(5, 7), arc(7, 8)];
    let b = vec![arc(1, 2), arc(2, 6), arc(6, 8)];
    let routed = routed_extension_exists(&net, 0, &[a.clone(), b.clone()], &[6, 7]).map_err(err)?;
    let mut z = vec![0.0; net.num_arcs()];
    for &e in a.iter().chain(&b) {
        z[e] += 1.0;
    }
    let prob = DynProblem::new(net.clone(), LossModel::Lossless, 0, 2.0, vec![ArcCost::Linear(1.0); net.num_arcs()])
        .with_zmax(Some(vec![1.0; net.num_arcs()]));
    let t2: BTreeSet<NodeId> = [6, 7].into_iter().collect();
    let coded = match prob.cone_opt(&z, &t2, Cone::Up).map_err(err)? {
        Some(up) => admissible(&prob, &z, &t2, &up).map_err(err)?,
        None => false,
    };
    Ok((
        example && broken == 0 && episodes >= 1000 && !routed && coded,
        format!(
            "four-node sequence {}; continuity kept on {}/{episodes} episodes; routed extension {}, coded increase {}",
            if example { "up, down, stay as expected" } else { "differs" },
            episodes - broken,
            if routed { "found" } else { "impossible" },
            if coded { "feasible" } else { "infeasible" }
        ),
    ))
}

/// Dominance on a supplied wireline topology; skipped without a file.
pub fn rocketfuel_dominance(text: Option<&str>, instances: usize, seed: u64) -> CriterionReport {
    let t0 = Instant::now();
    let mut report = CriterionReport {
        id: "11r".into(),
        name: "dominance on supplied topology".into(),
        status: Status::Skip,
        detail: "no topology file given".into(),
        seconds: 0.0,
        limit_seconds: 900.0,
    };
    let Some(text) = text else { return report };
    let res = (|| -> Check {
        let g = crate::baselines::load_rocketfuel(text).map_err(err)?;
        let n = g.num_nodes();
        if n < 3 {
            return Err("topology has fewer than three nodes".into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut ok, mut done) = (0, 0);
        for k in 0..instances {
            let (s, t) = pick_sinks(n, [2, 4, 8][k % 3].min(n - 1), &mut rng);
            match wireline_pair(&g, s, &t) {
                Ok((coded, tree)) => {
                    done += 1;
                    ok += (coded <= tree + 1e-6) as usize;
                }
                Err(_) => continue,
            }
        }
        Ok((done > 0 && ok == done, format!("coded <= tree on {ok}/{done} connected instances")))
    })();
    let (pass, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    report.status = if pass { Status::Pass } else { Status::Fail };
    report.detail = detail;
    report.seconds = t0.elapsed().as_secs_f64();
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_matches_closed_form() {
        let p = ChainParams::new(0.6, 0.1, 4).unwrap();
        let a = balance_oracle(&p);
        let b = steady_state(&p);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn perturbed_law_is_caught() {
        fn skewed(p: &ChainParams) -> Vec<f64> {
            let mut pi = steady_state(p);
            pi[0] *= 1.0 + 1e-6;
            pi
        }
        assert!(check_steady_state(steady_state, 50, 1).0);
        assert!(!check_steady_state(skewed, 50, 1).0);
    }

    #[test]
    fn projection_oracle_agrees() {
        let u = [0.1, 3.0, -2.0, 2.9];
        let v = simplex_project(&u, 2.0);
        let o = projection_grid_oracle(&u, 2.0, 1e-3);
        assert!(v.iter().zip(&o).all(|(a, b)| (a - b).abs() < 1e-3));
        assert!(projection_condition(&u, &v, 1e-12));
        assert!(!projection_condition(&u, &[1.0, 1.0, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn four_node_sequence_matches() {
        let seq = four_node_sequence().unwrap();
        assert_eq!(seq[0].1, Cone::Up);
        assert_eq!(seq[1].0, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_topology_is_skipped() {
        assert_eq!(rocketfuel_dominance(None, 10, 0).status, Status::Skip);
        let r = rocketfuel_dominance(Some("a b 1\nb c 1\na c 3\nc d 1\nb d 2\n"), 5, 0);
        assert_eq!(r.status, Status::Pass, "{}", r.detail);
    }

    #[test]
    fn fast_criteria_pass() {
        for id in [1, 8] {
            let r = run_criterion(id);
            assert_eq!(r.status, Status::Pass, "{}", r.line());
        }
    }
}
