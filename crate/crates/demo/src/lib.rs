//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function has a plain Rust twin in [`ops`] that the native
//! tests call.

use wasm_bindgen::prelude::*;

pub mod ops;

fn js(e: sagl::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `D_f(p0 || q_lambda)` on the two-mode target for `points` evenly spaced
/// values of the per-bit probability `lambda`.
#[wasm_bindgen]
pub fn divergence_curve(kind: &str, points: usize) -> Result<Vec<f64>, JsError> {
    ops::divergence_curve(kind, points).map_err(js)
}

/// `[L, I_1, .., I_kmax, log p(x)]` for a random small belief network.
#[wasm_bindgen]
pub fn bound_chain(seed: u32, k_max: usize) -> Result<Vec<f64>, JsError> {
    ops::bound_chain(seed as u64, k_max).map_err(js)
}

/// Trains a table generator on the two-mode target; rows of
/// `[step, KL(p0||p), KL(p||p0)]`, flattened.
#[wasm_bindgen]
pub fn vdm_run(kind: &str, steps: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    ops::vdm_run(kind, steps as u64, seed as u64).map_err(js)
}
