use mudalloc_wasm::{compare, project, tradeoff};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).expect("valid json")
}

#[test]
fn compare_reports_every_allocator() {
    let out = parse(compare(r#"{"users": 6, "res": 4, "sats": 3, "q_s": 2, "seed": 7}"#));
    assert!(out.get("error").is_none(), "{out}");
    assert_eq!(out["users"].as_array().unwrap().len(), 6);
    assert_eq!(out["sats"].as_array().unwrap().len(), 3);
    let allocs = out["allocations"].as_array().unwrap();
    let names: Vec<&str> = allocs.iter().map(|a| a["allocator"].as_str().unwrap()).collect();
    assert_eq!(names, ["proposed", "greedy", "round_robin", "centralized"]);

    let full = &allocs[3];
    for a in allocs {
        let m = a["matching"].as_array().unwrap();
        assert_eq!(m.len(), 6);
        assert!(a["sum_rate"].as_f64().unwrap() <= full["sum_rate"].as_f64().unwrap() + 1e-9);
        if a["allocator"] != "centralized" {
            for j in 0..3 {
                let col: u64 = m.iter().map(|row| row[j].as_u64().unwrap()).sum();
                assert!(col <= 2, "column {j} of {} over capacity", a["allocator"]);
            }
        }
    }
}

#[test]
fn compare_fills_defaults_and_reports_errors() {
    let out = parse(compare("{}"));
    assert_eq!(out["allocations"][0]["matching"].as_array().unwrap().len(), 8);

    let out = parse(compare(r#"{"users": 0}"#));
    assert!(out["error"].is_string());
    let out = parse(compare("not json"));
    assert!(out["error"].is_string());
}

#[test]
fn tradeoff_ends_at_full_detection() {
    let out = parse(tradeoff(r#"{"users": 5, "res": 4, "sats": 2, "seed": 3}"#));
    let pts = out["points"].as_array().unwrap();
    assert_eq!(pts.len(), 5);
    let last = &pts[4];
    assert!((last["rate_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((last["load_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    for p in pts {
        assert!(p["load_ratio"].as_f64().unwrap() <= 1.0 + 1e-9);
    }
}

#[test]
fn project_lands_inside_polytope() {
    let out = parse(project(
        r#"{"q_s": 2, "q_l": 1, "point": [[0.9, 0.8, 0.1], [1.4, -0.2, 0.3], [0, 0, 0], [0.7, 0.9, 1.2]]}"#,
    ));
    assert!(out["violation_before"].as_f64().unwrap() > 0.1);
    assert!(out["violation_after"].as_f64().unwrap() < 1e-8);
    let y = out["projection"].as_array().unwrap();
    for row in y {
        let s: f64 = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!(s >= 1.0 - 1e-8);
    }
}

#[test]
fn project_rejects_ragged_and_infeasible_input() {
    assert!(parse(project(r#"{"q_s": 1, "q_l": 1, "point": [[1, 0], [0]]}"#))["error"].is_string());
    assert!(parse(project(r#"{"q_s": 1, "q_l": 2, "point": [[1, 0], [0, 1], [1, 1]]}"#))["error"].is_string());
}
