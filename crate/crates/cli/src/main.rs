use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use codnet::netmodel::{parse_hypernet, Hypernet, LossModel, NodeId};
use codnet::simulator::{run_session, Connection, SimConfig};
use codnet::subgraph_opt::{build_lossless, build_lossy, solve_reference, MulticastSpec};
use codnet::verify::{rocketfuel_dominance, run_criterion, Status, CRITERIA};
use codnet_cli::{parse_ids, run_study, write_study, write_verify, Config};

#[derive(Parser)]
#[command(name = "codnet", version, about = "Coded packet network experiments")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "CODNET_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "CODNET_OUT")]
    out: Option<PathBuf>,
    /// Run instances in parallel; results are identical either way.
    #[arg(long, global = true)]
    parallel: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Session {
    /// Hypergraph file: lines `i -> j1,j2 [z=..] [p=..,..] [a=..]`.
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    source: String,
    /// Comma-separated sink names.
    #[arg(long)]
    sinks: String,
    #[arg(long)]
    rate: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one coded session; writes stats JSON and rank samples.
    Sim(Session),
    /// Minimum-cost subgraph for one multicast connection.
    Opt(Session),
    /// Distributed optimizers on random instances.
    Dist,
    /// Finite-memory loss and rate-loss figure data.
    Finmem,
    /// Dynamic multicast episodes.
    Dyn,
    /// Run a study: wucast, wmcast, wenergy, finmem, aloha, dynmulti, exponent or dist.
    Exp { study: String },
    /// Run the acceptance criteria; exits nonzero on any failure.
    Verify {
        /// Comma-separated criterion ids; all when absent.
        #[arg(long)]
        only: Option<String>,
        /// Wireline topology for the dominance check on a supplied graph.
        #[arg(long)]
        topology: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    cfg.parallel |= cli.parallel;
    cfg.validate()?;
    let out = cfg.out.clone();
    match cli.cmd {
        Cmd::Sim(s) => sim(&cfg, &s, &out)?,
        Cmd::Opt(s) => opt(&s, &out)?,
        Cmd::Dist => study(&cfg, "dist", &out)?,
        Cmd::Finmem => study(&cfg, "finmem", &out)?,
        Cmd::Dyn => study(&cfg, "dynmulti", &out)?,
        Cmd::Exp { study: name } => study(&cfg, &name, &out)?,
        Cmd::Verify { only, topology } => return verify(&cfg, only.as_deref(), topology, &out),
    }
    Ok(ExitCode::SUCCESS)
}

fn study(cfg: &Config, name: &str, out: &Path) -> Result<()> {
    let res = run_study(name, cfg)?;
    for path in write_study(out, name, cfg, &res)? {
        println!("wrote {}", path.display());
    }
    for c in &res.checks {
        println!("check {} {}: {}", c.criterion, c.status.label(), c.detail);
    }
    Ok(())
}

fn verify(cfg: &Config, only: Option<&str>, topology: Option<PathBuf>, out: &Path) -> Result<ExitCode> {
    let ids = match only {
        Some(s) => parse_ids(s)?,
        None => CRITERIA.iter().map(|c| c.0).collect(),
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        bail!("unknown criterion {bad}");
    }
    let mut reports = Vec::new();
    for id in ids {
        let r = run_criterion(id);
        println!("{}", r.line());
        reports.push(r);
    }
    let topo = topology.or_else(|| cfg.wmcast.topology.clone());
    let text = match &topo {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let rf = rocketfuel_dominance(text.as_deref(), 100, cfg.seed);
    println!("{}", rf.line());
    reports.push(rf);
    println!("wrote {}", write_verify(out, cfg, &reports)?.display());
    let failed = reports.iter().filter(|r| r.status == Status::Fail).count();
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn load_session(s: &Session) -> Result<(codnet::netmodel::NetFile, NodeId, Vec<NodeId>)> {
    let text = std::fs::read_to_string(&s.net).with_context(|| format!("reading {}", s.net.display()))?;
    let file = parse_hypernet(&text).with_context(|| format!("parsing {}", s.net.display()))?;
    let node = |name: &str, net: &Hypernet| net.node_by_name(name.trim()).ok_or_else(|| anyhow!("unknown node '{name}'"));
    let source = node(&s.source, &file.net)?;
    let sinks = s.sinks.split(',').map(|t| node(t, &file.net)).collect::<Result<Vec<_>>>()?;
    Ok((file, source, sinks))
}

fn sim(cfg: &Config, s: &Session, out: &Path) -> Result<()> {
    let (file, source, sinks) = load_session(s)?;
    let z = file.rates(cfg.sim.default_z);
    let sc = SimConfig {
        k: cfg.sim.k,
        m: cfg.sim.q_bits,
        lambda: cfg.sim.lambda,
        sample_every: cfg.sim.sample_every,
        seed: cfg.seed,
        ..SimConfig::default()
    };
    let conn = Connection { source, sinks, rate: s.rate };
    let stats = run_session(&file.net, &file.loss_model(), &z, &conn, &sc)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("sim_stats.json"), stats.to_json() + "\n")?;
    std::fs::write(out.join("sim_ranks.csv"), stats.to_csv())?;
    for t in &stats.sinks {
        println!(
            "sink {}: rank {}/{}, decoded {}, correct {}",
            file.net.name(t.node),
            t.rank,
            stats.k,
            t.decoded,
            t.correct
        );
    }
    Ok(())
}

fn opt(s: &Session, out: &Path) -> Result<()> {
    let (file, source, sinks) = load_session(s)?;
    let costs: Vec<f64> = file.cost.iter().map(|c| c.unwrap_or(1.0)).collect();
    let spec = MulticastSpec::linear(source, &sinks, s.rate, &costs);
    let loss = file.loss_model();
    let problem = match loss {
        LossModel::Lossless => build_lossless(&file.net, &spec)?,
        _ => build_lossy(&file.net, &loss, &spec)?,
    };
    let sol = solve_reference(&problem)?;
    let mut csv = String::from("arc,tail,heads,z,cost\n");
    for (a, arc) in file.net.arcs().iter().enumerate() {
        let heads: Vec<String> = arc.heads.iter().map(|&h| file.net.name(h)).collect();
        csv.push_str(&format!(
            "{a},{},{},{},{}\n",
            file.net.name(arc.tail),
            heads.join(";"),
            sol.z[a],
            spec.cost[a].eval(sol.z[a])
        ));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("opt_subgraph.csv"), csv)?;
    let summary = serde_json::json!({
        "cost": sol.cost,
        "lp_objective": sol.lp_objective,
        "duality_gap": sol.duality_gap,
        "max_violation": sol.max_violation,
    });
    std::fs::write(out.join("opt.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("cost {}", sol.cost);
    Ok(())
}
