//! Browser bindings. Each export returns a JSON string; the `*_json`
//! functions hold the logic and are usable natively.

use codnet::baselines::{coded_energy, gen_with_terminals, GeoVariant};
use codnet::dist_opt::{run_subgradient, Recovery, StepSchedule, SubgradProblem};
use codnet::finmem::{loss_upper_bound, simulate_isolated, tandem_rate_loss, ChainParams, IsolatedMode, TandemParams};
use codnet::netmodel::AlohaParams;
use codnet::subgraph_opt::{solve_aloha_relay, MulticastSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct MemoryRow {
    m: usize,
    loss_bound: f64,
    loss_simulated: f64,
    rate_loss: f64,
}

/// Loss bound, simulated loss at field size `2^q_bits` and tandem rate loss
/// for memory sizes `1..=m_max`.
pub fn finmem_curves_json(r: f64, eps: f64, delta: f64, m_max: usize, q_bits: u32) -> Result<String, String> {
    if !(1..=16).contains(&q_bits) || m_max == 0 || m_max > 64 {
        return Err("need 1 <= q_bits <= 16 and 1 <= M <= 64".into());
    }
    let mut rows = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let p = ChainParams::new(r, eps, m).map_err(|e| e.to_string())?;
        let t = TandemParams::new(delta, eps, m).map_err(|e| e.to_string())?;
        let sim = simulate_isolated(&p, 1 << q_bits, 20_000, IsolatedMode::Accumulator, m as u64)
            .map_err(|e| e.to_string())?;
        rows.push(MemoryRow {
            m,
            loss_bound: loss_upper_bound(&p),
            loss_simulated: sim.loss_rate,
            rate_loss: tandem_rate_loss(&t),
        });
    }
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

/// Minimum-cost injection rates of the slotted Aloha relay channel.
pub fn aloha_optimum_json(rate: f64, p12: f64, p13: f64, p1both: f64, p233: f64) -> Result<String, String> {
    let params = AlohaParams { p12, p13, p1both, p233 };
    let s = solve_aloha_relay(&params, rate).map_err(|e| e.to_string())?;
    serde_json::to_string(&s).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Trace {
    nodes: usize,
    sinks: usize,
    seed: u64,
    optimal: f64,
    original: Vec<f64>,
    modified: Vec<f64>,
}

/// Primal cost per iteration of the subgradient method under both
/// recovery rules on a random wireless multicast instance.
pub fn subgradient_trace_json(nodes: usize, sinks: usize, iterations: usize, seed: u64) -> Result<String, String> {
    if !(2..=60).contains(&nodes) || sinks == 0 || sinks >= nodes || iterations == 0 || iterations > 2000 {
        return Err("need 2 <= nodes <= 60, 1 <= sinks < nodes, 1 <= iterations <= 2000".into());
    }
    let (geo, s, t, seed) =
        gen_with_terminals(nodes, seed, GeoVariant::EnergyMulticast, sinks).map_err(|e| e.to_string())?;
    let optimal = coded_energy(&geo, s, &t).map_err(|e| e.to_string())?;
    let p = SubgradProblem::new(&geo.net, &MulticastSpec::linear(s, &t, 1.0, &geo.cost)).map_err(|e| e.to_string())?;
    let costs = |rec| -> Result<Vec<f64>, String> {
        let run = run_subgradient(&p, StepSchedule::Power { alpha: 0.8 }, rec, iterations, None)
            .map_err(|e| e.to_string())?;
        Ok(run.records.iter().map(|r| r.primal_cost).collect())
    };
    let trace =
        Trace { nodes, sinks, seed, optimal, original: costs(Recovery::Original)?, modified: costs(Recovery::Modified)? };
    serde_json::to_string(&trace).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn finmem_curves(r: f64, eps: f64, delta: f64, m_max: usize, q_bits: u32) -> Result<String, JsValue> {
    finmem_curves_json(r, eps, delta, m_max, q_bits).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn aloha_optimum(rate: f64, p12: f64, p13: f64, p1both: f64, p233: f64) -> Result<String, JsValue> {
    aloha_optimum_json(rate, p12, p13, p1both, p233).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn subgradient_trace(nodes: usize, sinks: usize, iterations: usize, seed: u64) -> Result<String, JsValue> {
    subgradient_trace_json(nodes, sinks, iterations, seed).map_err(|e| JsValue::from_str(&e))
}
