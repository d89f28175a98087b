//! FLOPs of conv and dense layers after structured pruning.
//!
//! Convention: 2 FLOPs per multiply-accumulate, biases and activations not
//! counted. An output unit (filter or neuron) is alive when its weight norm
//! exceeds `tol`. An input unit counts when the unit feeding it is alive and
//! its own weight slice is nonzero, so removed filters shrink the next
//! layer's input channels.

use serde::{Deserialize, Serialize};

use crate::chain::{feeds, input_norms, unit_norms};
use crate::error::{NnError, Result};
use crate::models::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub label: String,
    pub outputs: usize,
    pub alive_outputs: usize,
    pub inputs: usize,
    pub alive_inputs: usize,
    pub dense_flops: u64,
    pub flops: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub layers: Vec<LayerFlops>,
    pub dense_flops: u64,
    pub flops: u64,
    pub ratio: f64,
    pub warnings: Vec<String>,
}

/// FLOPs of `model`'s architecture evaluated at the flat parameters `theta`.
pub fn flops_estimate(model: &Model, theta: &[f64], tol: f64) -> Result<FlopsReport> {
    if theta.len() != model.num_params() {
        return Err(NnError::DimensionMismatch { expected: model.num_params(), actual: theta.len() });
    }
    let layout = model.layout();
    let mut alive_out: Vec<Vec<bool>> = Vec::with_capacity(model.layers.len());
    let mut layers = Vec::with_capacity(model.layers.len());
    let mut warnings = Vec::new();
    for ((layer, block), feed) in model.layers.iter().zip(&layout).zip(feeds(model)) {
        let w = &theta[block.weight.clone()];
        let (units, inputs) = (layer.out_units(), layer.in_units());
        let out_alive: Vec<bool> = unit_norms(w, units).into_iter().map(|n| n > tol).collect();
        let in_norms = input_norms(w, units, inputs);
        let in_alive: Vec<bool> = (0..inputs)
            .map(|c| {
                let fed = feed.source.is_none_or(|s| alive_out[s][c / feed.fan]);
                fed && in_norms[c] > tol
            })
            .collect();
        let per_pair = (layer.slice_len() * feed.positions) as u64 * 2;
        let n_out = out_alive.iter().filter(|&&a| a).count();
        let n_in = in_alive.iter().filter(|&&a| a).count();
        let dense_flops = per_pair * (units * inputs) as u64;
        let flops = per_pair * (n_out * n_in) as u64;
        if n_out == 0 {
            warnings.push(format!("every output unit of {} is pruned; later layers see a constant input", layer.label));
        }
        layers.push(LayerFlops {
            label: layer.label.clone(),
            outputs: units,
            alive_outputs: n_out,
            inputs,
            alive_inputs: n_in,
            dense_flops,
            flops,
            ratio: flops as f64 / dense_flops as f64,
        });
        alive_out.push(out_alive);
    }
    let dense_flops = layers.iter().map(|l| l.dense_flops).sum();
    let flops = layers.iter().map(|l| l.flops).sum();
    let ratio = if dense_flops == 0 { 1.0 } else { flops as f64 / dense_flops as f64 };
    Ok(FlopsReport { layers, dense_flops, flops, ratio, warnings })
}
