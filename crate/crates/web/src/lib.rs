//! Browser bindings: each export takes a problem file as JSON text and
//! returns JSON text, or throws the error message.

use pradius_core::simulate::DEFAULT_TAIL_FRACTION;
use pradius_core::{
    empirical_rate, exact_value, lambda_w, lower_reports, simulate, stability_verdict, upper_reports, Effort, Limits,
    LowerRequest, OptimizerConfig, ProblemFile, ScalarSearch, SwitchedSystem, WeightSet,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest grid accepted by [`landscape`].
pub const MAX_RESOLUTION: usize = 201;

fn load(problem: &str) -> Result<(SwitchedSystem, u32), String> {
    let file = ProblemFile::parse(problem).map_err(|e| e.to_string())?;
    let system = file.system().map_err(|e| e.to_string())?;
    Ok((system, file.p))
}

fn pick_p(file_p: u32, p: u32) -> u32 {
    if p == 0 {
        file_p
    } else {
        p
    }
}

/// The `h_k` curve, lower bounds at interactive effort, the exact value
/// where one exists and the verdict. `p = 0` uses the file's `p`.
pub fn analyze_json(problem: &str, p: u32, k_max: usize) -> Result<String, String> {
    let (system, file_p) = load(problem)?;
    let p = pick_p(file_p, p);
    let limits = Limits::default();
    let upper = upper_reports(&system, p, k_max, &limits).map_err(|e| e.to_string())?;
    let request = LowerRequest {
        scalar_search: ScalarSearch::with_grid(11),
        optimizer: OptimizerConfig {
            restarts: 8,
            samples_per_iter: Some(1),
            ..OptimizerConfig::default()
        },
        ..LowerRequest::default()
    };
    let mut lower = Vec::new();
    let mut skipped = Vec::new();
    for outcome in lower_reports(&system, p, &request) {
        match outcome {
            Ok(r) => lower.push(r),
            Err((name, e)) => skipped.push(format!("{name}: {e}")),
        }
    }
    let exact = exact_value(&system, p, &limits).ok();
    let effort = Effort {
        k_max,
        ..Effort::default()
    };
    let verdict = stability_verdict(&system, p, &effort).map_err(|e| e.to_string())?;
    Ok(json!({
        "p": p,
        "upper": upper,
        "lower": lower,
        "exact": exact,
        "skipped": skipped,
        "verdict": verdict,
    })
    .to_string())
}

/// `λ_W` for scalar weights `(w_1, w_2)` on a `resolution × resolution`
/// grid over `[-1, 1]²`, remaining weights fixed at 1. Rows run over `w_2`.
pub fn landscape_json(problem: &str, resolution: usize) -> Result<String, String> {
    let (system, _) = load(problem)?;
    let family = match &system {
        SwitchedSystem::Iid(f) if f.len() >= 2 => f,
        _ => return Err("the landscape needs an i.i.d. family with at least two matrices".into()),
    };
    if !(2..=MAX_RESOLUTION).contains(&resolution) {
        return Err(format!("resolution must be between 2 and {MAX_RESOLUTION}"));
    }
    let limits = Limits::default();
    let axis: Vec<f64> = (0..resolution)
        .map(|i| -1.0 + 2.0 * i as f64 / (resolution - 1) as f64)
        .collect();
    let mut weights = vec![1.0; family.len()];
    let mut grid = Vec::with_capacity(resolution);
    let (mut best, mut at) = (f64::NEG_INFINITY, (0.0, 0.0));
    for &w2 in &axis {
        let mut row = Vec::with_capacity(resolution);
        for &w1 in &axis {
            weights[0] = w1;
            weights[1] = w2;
            let set = WeightSet::scalars(&weights).map_err(|e| e.to_string())?;
            let v = lambda_w(family, &set, &limits).map_err(|e| e.to_string())?;
            if v > best {
                best = v;
                at = (w1, w2);
            }
            row.push(v);
        }
        grid.push(row);
    }
    Ok(json!({"axis": axis, "values": grid, "best": best, "best_at": [at.0, at.1]}).to_string())
}

/// Per-step Monte Carlo moments and the empirical rate. `p = 0` uses the
/// file's `p`.
pub fn moments_json(problem: &str, p: u32, horizon: usize, samples: usize, seed: u64) -> Result<String, String> {
    let (system, file_p) = load(problem)?;
    let p = pick_p(file_p, p);
    let ensemble = simulate(&system, p, horizon, samples, seed, None).map_err(|e| e.to_string())?;
    let rate: Value = match empirical_rate(&ensemble, DEFAULT_TAIL_FRACTION) {
        Ok(r) => json!(r),
        Err(e) => json!({"error": e.to_string()}),
    };
    Ok(json!({"ensemble": ensemble, "rate": rate}).to_string())
}

#[wasm_bindgen]
pub fn analyze(problem: &str, p: u32, k_max: usize) -> Result<String, JsValue> {
    analyze_json(problem, p, k_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn landscape(problem: &str, resolution: usize) -> Result<String, JsValue> {
    landscape_json(problem, resolution).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn moments(problem: &str, p: u32, horizon: usize, samples: usize, seed: u64) -> Result<String, JsValue> {
    moments_json(problem, p, horizon, samples, seed).map_err(|e| JsValue::from_str(&e))
}
