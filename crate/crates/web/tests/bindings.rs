use codnet_web::{aloha_optimum_json, finmem_curves_json, subgradient_trace_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn finmem_rows_cover_each_memory_size() {
    let v = parse(finmem_curves_json(0.6, 0.1, 0.2, 5, 8));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let mut last = f64::INFINITY;
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row["m"], i + 1);
        let bound = row["loss_bound"].as_f64().unwrap();
        assert!(bound <= last && (0.0..=1.0).contains(&bound));
        last = bound;
        assert!(row["rate_loss"].as_f64().unwrap() > 0.0);
    }
    assert!(finmem_curves_json(0.95, 0.1, 0.2, 5, 8).is_err());
    assert!(finmem_curves_json(0.6, 0.1, 0.2, 5, 0).is_err());
}

#[test]
fn aloha_reference_point() {
    let v = parse(aloha_optimum_json(0.125, 0.5625, 0.0625, 0.1875, 0.75));
    assert!((v["z1"].as_f64().unwrap() - 0.1790).abs() < 1e-3, "{v}");
    assert!((v["z2"].as_f64().unwrap() - 0.1405).abs() < 1e-3, "{v}");
}

#[test]
fn traces_stay_above_the_optimum() {
    let v = parse(subgradient_trace_json(12, 3, 40, 3));
    let opt = v["optimal"].as_f64().unwrap();
    for key in ["original", "modified"] {
        let costs = v[key].as_array().unwrap();
        assert_eq!(costs.len(), 40);
        assert!(costs.iter().all(|c| c.as_f64().unwrap() >= opt * (1.0 - 1e-6)));
    }
    assert_eq!(v.to_string(), parse(subgradient_trace_json(12, 3, 40, 3)).to_string());
    assert!(subgradient_trace_json(12, 12, 40, 3).is_err());
}
