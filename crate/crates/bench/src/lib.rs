//! Fixtures shared by the criterion benches.

use mergeplan_core::{AllReduceModel, LayerProfile, ModelTrace};

/// Deterministic trace of `layers` layers with varied sizes and times.
pub fn fixture_trace(layers: usize) -> ModelTrace {
    let profiles = (0..layers)
        .map(|i| {
            let params = 64 + ((i * 7919) % 997) as u64 * 1024;
            let t_b = 1e-4 + ((i * 104_729) % 613) as f64 * 1e-6;
            LayerProfile::new(format!("l{i}"), params, t_b)
        })
        .collect();
    ModelTrace::new(profiles, 0.05, 4).expect("valid fixture")
}

pub fn fixture_model() -> AllReduceModel {
    AllReduceModel::new(9.72e-4, 1.97e-9).expect("valid model")
}
