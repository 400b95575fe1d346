//! The experiment studies. Each produces CSV tables plus checks evaluated
//! on its own data; instance `i` always uses `instance_seed(seed, i)`, so
//! results do not depend on parallel execution.

use std::collections::BTreeSet;

use anyhow::{anyhow, bail, Context, Result};
use codnet::baselines::{
    coded_energy, coded_weight, dst_approx, gen_with_terminals, load_rocketfuel, mip_multicast, summarize,
    synthetic_isp, unicast_cost, Approach, Digraph, GeoVariant,
};
use codnet::dist_opt::{
    frank_wolfe, records_to_csv, run_primal_dual, run_subgradient, Gains, IterRecord, PdState, Recovery,
    SubgradProblem, ITER_CSV_HEADER,
};
use codnet::dynmulti::{episode_cost, episode_csv, random_instance, run_episode, MembershipProcess, Policy};
use codnet::finmem::{
    loss_upper_bound, simulate_isolated, simulate_tandem, tandem_rate_loss, ChainParams, IsolatedMode, TandemParams,
};
use codnet::simulator::estimate_error_exponent;
use codnet::subgraph_opt::{solve_aloha_relay, MulticastSpec};
use codnet::verify::{smoothed_instance, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{instance_seed, recovery_name, Config, Method};

pub const STUDIES: [&str; 7] = ["wucast", "wmcast", "wenergy", "finmem", "aloha", "dynmulti", "exponent"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub file: String,
    /// Module whose output fills the numeric columns.
    pub module: String,
    #[serde(skip)]
    pub header: String,
    #[serde(skip)]
    pub rows: Vec<String>,
    pub row_count: usize,
}

impl Table {
    fn new(file: &str, module: &str, header: &str) -> Self {
        Table { file: file.into(), module: module.into(), header: header.into(), rows: Vec::new(), row_count: 0 }
    }

    fn push(&mut self, row: String) {
        self.rows.push(row);
        self.row_count += 1;
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", self.header);
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataCheck {
    pub criterion: String,
    pub status: Status,
    pub detail: String,
}

impl DataCheck {
    fn new(criterion: &str, ok: bool, detail: String) -> Self {
        DataCheck { criterion: criterion.into(), status: if ok { Status::Pass } else { Status::Fail }, detail }
    }

    fn skip(criterion: &str, detail: String) -> Self {
        DataCheck { criterion: criterion.into(), status: Status::Skip, detail }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StudyOutput {
    pub tables: Vec<Table>,
    pub checks: Vec<DataCheck>,
    pub instances: usize,
}

/// Evaluates `f` on `0..n`, in parallel when asked, keeping index order.
fn map_instances<T: Send>(n: usize, parallel: bool, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if parallel {
        (0..n).into_par_iter().map(&f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn run_study(name: &str, cfg: &Config) -> Result<StudyOutput> {
    cfg.validate()?;
    match name {
        "wucast" => wucast(cfg),
        "wmcast" => wmcast(cfg),
        "wenergy" => wenergy(cfg),
        "finmem" => finmem(cfg),
        "aloha" => aloha(cfg),
        "dynmulti" => dynmulti(cfg),
        "exponent" => exponent(cfg),
        "dist" => dist(cfg),
        _ => bail!("unknown study '{name}'; expected one of {}", STUDIES.join(", ")),
    }
    .with_context(|| format!("study {name}"))
}

fn wucast(cfg: &Config) -> Result<StudyOutput> {
    let c = &cfg.wucast;
    let names: Vec<&str> = Approach::ALL.iter().map(|a| a.name()).collect();
    let mut inst = Table::new("wucast_instances.csv", "baselines", &format!("instance,seed,nodes,source,sink,{}", names.join(",")));
    let mut summary = Table::new("wucast_summary.csv", "baselines", "nodes,approach,mean_transmissions,std_err,instances");
    let mut out = StudyOutput::default();
    let jobs: Vec<(usize, usize)> = c.nodes.iter().flat_map(|&n| (0..c.instances).map(move |k| (n, k))).collect();
    let results = map_instances(jobs.len(), cfg.parallel, |i| {
        let seed = instance_seed(cfg.seed, i);
        let (geo, s, t, seed) = gen_with_terminals(jobs[i].0, seed, GeoVariant::FadingUnicast, 1)?;
        let costs = Approach::ALL
            .iter()
            .map(|a| unicast_cost(&geo, s, t[0], *a, a.default_selector()))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok((seed, s, t[0], costs))
    })?;
    for (i, (seed, s, t, costs)) in results.iter().enumerate() {
        let cols: Vec<String> = costs.iter().map(|v| v.to_string()).collect();
        inst.push(format!("{i},{seed},{},{s},{t},{}", jobs[i].0, cols.join(",")));
    }
    for &n in &c.nodes {
        let group: Vec<&Vec<f64>> = results.iter().zip(&jobs).filter(|(_, j)| j.0 == n).map(|(r, _)| &r.3).collect();
        if group.is_empty() {
            if n == 9 {
                out.checks.push(DataCheck::skip("12", "no instances".into()));
            }
            continue;
        }
        let means: Vec<f64> = (0..5)
            .map(|k| {
                let v: Vec<f64> = group.iter().map(|c| c[k]).collect();
                let (m, se) = codnet::stats::mean_se(&v);
                summary.push(format!("{n},{},{m},{se},{}", names[k], v.len()));
                m
            })
            .collect();
        if n == 9 {
            let ratio = means[2] / means[4];
            let ordered = means.windows(2).all(|w| w[0] >= w[1]);
            let detail = format!("link-by-link over full coding {ratio:.3}, ordering {}", if ordered { "holds" } else { "broken" });
            out.checks.push(if group.len() >= 200 {
                DataCheck::new("12", (1.5..=2.5).contains(&ratio) && ordered, detail)
            } else {
                DataCheck::skip("12", format!("{} instances, 200 required; {detail}", group.len()))
            });
        }
    }
    out.instances = jobs.len();
    out.tables = vec![inst, summary];
    Ok(out)
}

fn pick_sinks(g: &Digraph, k: usize, rng: &mut ChaCha8Rng) -> Result<(usize, Vec<usize>)> {
    let n = g.num_nodes();
    for _ in 0..100 {
        let s = rng.random_range(0..n);
        let reach = closure_from(g, s);
        let pool: Vec<usize> = (0..n).filter(|&v| v != s && reach[v]).collect();
        if pool.len() >= k {
            let mut t: Vec<usize> = rand::seq::index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
            t.sort_unstable();
            return Ok((s, t));
        }
    }
    Err(anyhow!("no source reaches {k} other nodes"))
}

fn closure_from(g: &Digraph, s: usize) -> Vec<bool> {
    let mut seen = vec![false; g.num_nodes()];
    seen[s] = true;
    let mut stack = vec![s];
    while let Some(u) = stack.pop() {
        for &(a, b, _) in &g.arcs {
            if a == u && !seen[b] {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen
}

fn wmcast(cfg: &Config) -> Result<StudyOutput> {
    let c = &cfg.wmcast;
    let loaded = match &c.topology {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some((p.file_name().map_or("topology".into(), |f| f.to_string_lossy().into_owned()), load_rocketfuel(&text)?))
        }
        None => None,
    };
    let mut inst = Table::new("wmcast_instances.csv", "baselines", "instance,seed,graph,nodes,arcs,sinks,tree_cost,coded_cost");
    let mut table = Table::new("wmcast_table.csv", "baselines", "graph,sinks,approach,average_cost,instances");
    let jobs: Vec<usize> = c.sinks.iter().flat_map(|&k| std::iter::repeat_n(k, c.instances)).collect();
    let results = map_instances(jobs.len(), cfg.parallel, |i| {
        let seed = instance_seed(cfg.seed, i);
        let (name, g) = match &loaded {
            Some((name, g)) => (name.clone(), g.clone()),
            None => ("synthetic".to_string(), synthetic_isp(c.nodes, c.extra_degree, seed)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let (s, t) = pick_sinks(&g, jobs[i], &mut rng)?;
        let tree = dst_approx(&g, s, &t, c.level)?.cost;
        let coded = coded_weight(&g, s, &t)?;
        let sm = summarize(&g);
        Ok((seed, name, sm.nodes, sm.arcs, tree, coded))
    })?;
    let mut dominated = 0;
    for (i, (seed, name, n, a, tree, coded)) in results.iter().enumerate() {
        inst.push(format!("{i},{seed},{name},{n},{a},{},{tree},{coded}", jobs[i]));
        dominated += (*coded <= tree + 1e-6) as usize;
    }
    let graph = loaded.as_ref().map_or("synthetic".to_string(), |l| l.0.clone());
    for &k in &c.sinks {
        let rows: Vec<_> = results.iter().zip(&jobs).filter(|(_, &j)| j == k).map(|(r, _)| r).collect();
        if rows.is_empty() {
            continue;
        }
        let tree: Vec<f64> = rows.iter().map(|r| r.4).collect();
        let coded: Vec<f64> = rows.iter().map(|r| r.5).collect();
        table.push(format!("{graph},{k},tree,{},{}", mean(&tree), rows.len()));
        table.push(format!("{graph},{k},network coding,{},{}", mean(&coded), rows.len()));
    }
    let detail = format!("coded <= tree on {dominated}/{}", results.len());
    let check = if results.len() >= 100 {
        DataCheck::new("11", dominated == results.len(), detail)
    } else {
        DataCheck::skip("11", format!("{} instances, 100 required; {detail}", results.len()))
    };
    Ok(StudyOutput { tables: vec![inst, table], checks: vec![check], instances: jobs.len() })
}

fn wenergy(cfg: &Config) -> Result<StudyOutput> {
    let c = &cfg.wenergy;
    let mut inst = Table::new("wenergy_instances.csv", "baselines", "instance,seed,nodes,sinks,mip_energy,coded_energy");
    let sink_cols: Vec<String> = c.sinks.iter().map(|k| format!("sinks_{k}")).collect();
    let mut table = Table::new("wenergy_table.csv", "baselines", &format!("nodes,approach,{}", sink_cols.join(",")));
    let jobs: Vec<(usize, usize)> = c
        .sizes
        .iter()
        .flat_map(|&n| c.sinks.iter().flat_map(move |&k| std::iter::repeat_n((n, k), c.instances)))
        .collect();
    let results = map_instances(jobs.len(), cfg.parallel, |i| {
        let seed = instance_seed(cfg.seed, i);
        let (n, k) = jobs[i];
        let (geo, s, t, seed) = gen_with_terminals(n, seed, GeoVariant::EnergyMulticast, k)?;
        Ok((seed, mip_multicast(&geo, s, &t)?.cost, coded_energy(&geo, s, &t)?))
    })?;
    for (i, (seed, mip, coded)) in results.iter().enumerate() {
        inst.push(format!("{i},{seed},{},{},{mip},{coded}", jobs[i].0, jobs[i].1));
    }
    if c.instances > 0 {
        for &n in &c.sizes {
            for (label, col) in [("MIP", 1), ("network coding", 2)] {
                let vals: Vec<String> = c
                    .sinks
                    .iter()
                    .map(|&k| {
                        let v: Vec<f64> = results
                            .iter()
                            .zip(&jobs)
                            .filter(|(_, j)| **j == (n, k))
                            .map(|(r, _)| if col == 1 { r.1 } else { r.2 })
                            .collect();
                        mean(&v).to_string()
                    })
                    .collect();
                table.push(format!("{n},{label},{}", vals.join(",")));
            }
        }
    }
    let dominated = results.iter().filter(|r| r.2 <= r.1 + 1e-6).count();
    let in_range: Vec<_> = results.iter().zip(&jobs).filter(|(_, j)| (20..=50).contains(&j.0)).map(|(r, _)| r).collect();
    let reduction = 1.0 - in_range.iter().map(|r| r.2).sum::<f64>() / in_range.iter().map(|r| r.1).sum::<f64>();
    let detail = format!(
        "coded <= MIP on {dominated}/{}; mean reduction on 20-50 nodes {:.1}%",
        results.len(),
        100.0 * reduction
    );
    let check = if results.len() >= 100 && !in_range.is_empty() {
        DataCheck::new("11", dominated == results.len() && (0.10..=0.55).contains(&reduction), detail)
    } else {
        DataCheck::skip("11", format!("{} instances, 100 required; {detail}", results.len()))
    };
    Ok(StudyOutput { tables: vec![inst, table], checks: vec![check], instances: jobs.len() })
}

fn finmem(cfg: &Config) -> Result<StudyOutput> {
    let c = &cfg.finmem;
    let mut out = StudyOutput::default();
    let mut bound = Table::new("finmem_bound.csv", "finmem", "r,M,bound");
    let mut counter = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut compared = 0;
    for &r in &c.r {
        let mut loss = Table::new(&format!("finmem_loss_r{r}.csv"), "finmem", "M,q,loss,delay");
        for m in 1..=c.m_max {
            let p = ChainParams::new(r, c.eps, m)?;
            let b = loss_upper_bound(&p);
            bound.push(format!("{r},{m},{b}"));
            let base = counter;
            counter += c.q_bits.len();
            let rows = map_instances(c.q_bits.len(), cfg.parallel, |k| {
                let q = 1u64 << c.q_bits[k];
                let seed = instance_seed(cfg.seed, base + k);
                Ok((q, simulate_isolated(&p, q, c.epochs, IsolatedMode::ShiftRegister, seed)?))
            })?;
            for (q, res) in rows {
                loss.push(format!("{m},{q},{},{}", res.loss_rate, res.mean_delay));
                if q == 1 << 16 {
                    compared += 1;
                    worst = worst.max(res.loss_rate - b - 3.0 * res.loss_se);
                }
            }
        }
        out.tables.push(loss);
    }
    out.tables.push(bound);
    let mut rate = Table::new("finmem_rate_loss.csv", "finmem", "M,q,rate_loss");
    let mut formula = Table::new("finmem_rate_loss_formula.csv", "finmem", "M,rate_loss");
    for m in 1..=c.m_max {
        let p = TandemParams::new(c.delta, c.eps, m)?;
        formula.push(format!("{m},{}", tandem_rate_loss(&p)));
        let base = counter;
        counter += c.q_bits.len();
        let rows = map_instances(c.q_bits.len(), cfg.parallel, |k| {
            let q = 1u64 << c.q_bits[k];
            Ok((q, simulate_tandem(&p, q as f64, c.epochs, instance_seed(cfg.seed, base + k))))
        })?;
        for (q, res) in rows {
            rate.push(format!("{m},{q},{}", res.rate_loss));
        }
    }
    out.tables.push(rate);
    out.tables.push(formula);
    out.checks.push(if compared > 0 {
        DataCheck::new("2", worst <= 0.0, format!("bound dominates simulated loss at q = 65536 on {compared} points (3 SE)"))
    } else {
        DataCheck::skip("2", "no q = 65536 runs".into())
    });
    out.instances = counter;
    Ok(out)
}

fn aloha(cfg: &Config) -> Result<StudyOutput> {
    let mut t = Table::new("aloha.csv", "subgraph_opt", "rate,z1,z2,cost");
    let mut checks = Vec::new();
    for &r in &cfg.aloha.rates {
        let s = solve_aloha_relay(&cfg.aloha.params, r)?;
        t.push(format!("{r},{},{},{}", s.z1, s.z2, s.cost));
        if r == 0.125 && cfg.aloha.params == codnet::netmodel::AlohaParams::reference() {
            let ok = (s.z1 - 0.179).abs() <= 0.002 && (s.z2 - 0.141).abs() <= 0.002 && (s.cost - 0.320).abs() <= 0.004;
            checks.push(DataCheck::new("1", ok, format!("z = ({:.4}, {:.4}), cost {:.4}", s.z1, s.z2, s.cost)));
        }
    }
    Ok(StudyOutput { instances: cfg.aloha.rates.len(), tables: vec![t], checks })
}

fn dynmulti(cfg: &Config) -> Result<StudyOutput> {
    let c = &cfg.dynmulti;
    let proc = MembershipProcess { birth: c.birth, death: c.death };
    let mut summary = Table::new(
        "dynmulti_summary.csv",
        "dynmulti",
        "instance,seed,policy,mean_cost,std_err,episodes,truncated,continuity_failures",
    );
    let results = map_instances(c.instances, cfg.parallel, |i| {
        let seed = instance_seed(cfg.seed, i);
        let prob = random_instance(c.nodes, seed)?;
        let t0: BTreeSet<usize> = prob.candidates().into_iter().take(1).collect();
        let mut rows = Vec::new();
        for &pol in &c.policies {
            rows.push((pol, episode_cost(&prob, &proc, pol, &t0, c.horizon, c.episodes, seed)?));
        }
        let trace = if i == 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(episode_csv(&run_episode(&prob, &proc, Policy::Myopic, &t0, c.horizon, &mut rng)?))
        } else {
            None
        };
        Ok((seed, rows, trace))
    })?;
    let mut trace = Table::new("dynmulti_trace.csv", "dynmulti", codnet::dynmulti::EPISODE_CSV_HEADER);
    let (mut episodes, mut broken) = (0, 0);
    for (i, (seed, rows, tr)) in results.iter().enumerate() {
        for (pol, e) in rows {
            summary.push(format!(
                "{i},{seed},{},{},{},{},{},{}",
                pol.name(),
                e.mean,
                e.std_err,
                e.episodes,
                e.truncated,
                e.continuity_failures
            ));
            episodes += e.episodes;
            broken += e.continuity_failures;
        }
        if let Some(text) = tr {
            for line in text.lines().skip(1) {
                trace.push(line.to_string());
            }
        }
    }
    let detail = format!("continuity kept on {}/{episodes} episodes", episodes - broken);
    let check = if episodes > 0 { DataCheck::new("13", broken == 0, detail) } else { DataCheck::skip("13", detail) };
    Ok(StudyOutput { tables: vec![summary, trace], checks: vec![check], instances: c.instances })
}

fn exponent(cfg: &Config) -> Result<StudyOutput> {
    let mut ec = cfg.exponent.clone();
    ec.seed = cfg.seed;
    let rep = estimate_error_exponent(&ec)?;
    let mut pts = Table::new("exponent.csv", "simulator", "delta,k,trials,failures,p_e,wilson_lo,wilson_hi");
    for p in &rep.points {
        pts.push(format!("{},{},{},{},{},{},{}", p.delta, p.k, p.trials, p.failures, p.p_e, p.wilson_lo, p.wilson_hi));
    }
    let mut fit = Table::new("exponent_fit.csv", "simulator", "slope,slope_se,theory,dropped_points");
    fit.push(format!("{},{},{},{}", rep.slope, rep.slope_se, rep.theory, rep.dropped.len()));
    let rel = (rep.slope - rep.theory) / rep.theory;
    let check = DataCheck::new("6", rel.abs() <= 0.25, format!("slope {:.4} vs {:.4} ({:+.1}%)", rep.slope, rep.theory, 100.0 * rel));
    Ok(StudyOutput { tables: vec![pts, fit], checks: vec![check], instances: ec.deltas.len() })
}

/// Distributed optimizers: per-run iteration logs plus a long-format table.
fn dist(cfg: &Config) -> Result<StudyOutput> {
    let c = &cfg.dist;
    let mut out = StudyOutput { instances: c.instances, ..Default::default() };
    match c.method {
        Method::Subgradient => {
            let mut table =
                Table::new("dist_table.csv", "dist_opt", "instance,seed,recovery,n,primal_cost,optimal_cost");
            let results = map_instances(c.instances, cfg.parallel, |i| {
                let seed = instance_seed(cfg.seed, i);
                let (geo, s, t, seed) = gen_with_terminals(c.nodes, seed, GeoVariant::EnergyMulticast, c.sinks)?;
                let opt = coded_energy(&geo, s, &t)?;
                let p = SubgradProblem::new(&geo.net, &MulticastSpec::linear(s, &t, 1.0, &geo.cost))?;
                let mut runs = Vec::new();
                for rec in [Recovery::Original, Recovery::Modified] {
                    runs.push((rec, run_subgradient(&p, c.schedule, rec, c.iterations, None)?.records));
                }
                Ok((seed, opt, runs))
            })?;
            let mut within = (0, 0);
            for (i, (seed, opt, runs)) in results.iter().enumerate() {
                for (rec, records) in runs {
                    let name = recovery_name(*rec);
                    let mut log = Table::new(&format!("dist_log_{i}_{name}.csv"), "dist_opt", ITER_CSV_HEADER);
                    log.rows = records_to_csv(records).lines().skip(1).map(String::from).collect();
                    log.row_count = log.rows.len();
                    out.tables.push(log);
                    for r in records {
                        table.push(format!("{i},{seed},{name},{},{},{opt}", r.n, r.primal_cost));
                    }
                    if *rec == Recovery::Modified {
                        if let Some(last) = records.last() {
                            within.1 += 1;
                            within.0 += (last.primal_cost <= 1.05 * opt) as usize;
                        }
                    }
                }
            }
            out.tables.insert(0, table);
            out.checks.push(DataCheck::skip(
                "9",
                format!("final modified-recovery cost within 5% of optimum on {}/{} instances; run `verify` for the criterion", within.0, within.1),
            ));
        }
        Method::PrimalDual => {
            let mut table = Table::new("dist_table.csv", "dist_opt", "instance,seed,rounds,cost,reference_cost,converged");
            let results = map_instances(c.instances, cfg.parallel, |i| {
                let seed = instance_seed(cfg.seed, i);
                let mut prob = smoothed_instance(seed);
                prob.m = c.smoothing;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let st = PdState::random(&prob, 2.0, &mut rng);
                let run = run_primal_dual(&prob, st, &Gains::default(), c.iterations, 1e-7, 100)?;
                let (_, reference) = frank_wolfe(&prob, 20_000, 1e-10)?;
                Ok((seed, run.records, reference, run.converged))
            })?;
            for (i, (seed, records, reference, converged)) in results.iter().enumerate() {
                let mut log = Table::new(&format!("dist_log_{i}_primal_dual.csv"), "dist_opt", ITER_CSV_HEADER);
                log.rows = records_to_csv(records).lines().skip(1).map(String::from).collect();
                log.row_count = log.rows.len();
                out.tables.push(log);
                let last: &IterRecord = records.last().expect("at least one record");
                table.push(format!("{i},{seed},{},{},{reference},{converged}", last.n, last.primal_cost));
            }
            out.tables.insert(0, table);
        }
    }
    Ok(out)
}
