//! Browser demo. Each export takes plain numbers and returns a JSON string;
//! the same computations are available as ordinary functions in [`demo`].

pub mod demo;

use wasm_bindgen::prelude::*;

fn to_js<T: serde::Serialize>(r: sian::Result<T>) -> Result<String, JsValue> {
    let value = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsValue::from_str(&e.to_string()))
}

/// Trains an additive model of the given order on a synthetic regression
/// task and returns its learned shapes.
#[wasm_bindgen]
pub fn train_demo(seed: u64, order: usize, epochs: usize) -> Result<String, JsValue> {
    to_js(demo::train(seed, order, epochs))
}

/// Runs interaction selection on a fixed test function of six inputs.
#[wasm_bindgen]
pub fn fis_demo(seed: u64, theta: f64, tau: f64, max_order: usize) -> Result<String, JsValue> {
    to_js(demo::select(seed, theta, tau, max_order))
}

/// Share of a random smooth function's variance at each interaction order.
#[wasm_bindgen]
pub fn theory_demo(d: usize, k: f64) -> Result<String, JsValue> {
    to_js(demo::spectrum(d, k))
}
