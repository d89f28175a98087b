//! Structural compaction: physically removes pruned filters and neurons.
//!
//! A unit whose weights are all zero outputs its bias everywhere. That
//! constant passes through relu and pooling unchanged up to the relu, so its
//! effect on the next layer is folded into the next layer's bias and the unit
//! is dropped together with the matching input slices of the next layer.
//! Output units of the last layer are always kept. A unit feeding a padded
//! convolution is kept unless its constant is zero, since zero padding makes
//! the constant's contribution position dependent.

use serde::{Deserialize, Serialize};

use crate::chain::{feeds, unit_norms, Feed};
use crate::error::{NnError, Result};
use crate::models::{Layer, LayerKind, Model, ModelSpec, Stage};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCompaction {
    pub label: String,
    pub outputs: usize,
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

/// JSON sidecar of a pruned export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactionRecord {
    pub spec: ModelSpec,
    pub layers: Vec<LayerCompaction>,
    pub original_params: usize,
    pub compact_params: usize,
}

fn constant_through(mut c: f64, stages: &[Stage]) -> f64 {
    for s in stages {
        if *s == Stage::Relu {
            c = c.max(0.0);
        }
    }
    c
}

/// Compacts `model`, treating units with weight norm `<= tol` as removed.
/// With `tol = 0` the compact model computes the same function.
pub fn compact(model: &Model, tol: f64) -> Result<(Model, CompactionRecord)> {
    let feeds = feeds(model);
    let last = model.layers.len().saturating_sub(1);
    let mut folded = model.clone();
    let mut kept_all = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let units = layer.out_units();
        if i == last {
            kept_all.push((0..units).collect::<Vec<_>>());
            continue;
        }
        let next = &feeds[i + 1];
        let padded = matches!(model.layers[i + 1].kind, LayerKind::Conv { pad, .. } if pad > 0);
        let norms = unit_norms(layer.weight.data(), units);
        let mut kept = Vec::new();
        for (u, &norm) in norms.iter().enumerate() {
            let c = constant_through(layer.bias.data()[u], &next.between);
            if norm > tol || (padded && c != 0.0) {
                kept.push(u);
            } else if c != 0.0 {
                fold_constant(&model.layers[i + 1], &mut folded.layers[i + 1], next, u, c);
            }
        }
        kept_all.push(kept);
    }
    let compacted = shrink(&folded, &kept_all)?;
    let record = CompactionRecord {
        spec: model.spec.clone(),
        layers: model
            .layers
            .iter()
            .zip(&kept_all)
            .map(|(l, kept)| LayerCompaction {
                label: l.label.clone(),
                outputs: l.out_units(),
                kept: kept.clone(),
                removed: (0..l.out_units()).filter(|u| kept.binary_search(u).is_err()).collect(),
            })
            .collect(),
        original_params: model.num_params(),
        compact_params: compacted.num_params(),
    };
    Ok((compacted, record))
}

/// Adds the contribution of source unit `u` held at constant `c` to the bias of `dst`.
fn fold_constant(orig: &Layer, dst: &mut Layer, feed: &Feed, u: usize, c: f64) {
    let unit = orig.unit_len();
    let slice = orig.slice_len();
    let w = orig.weight.data();
    for o in 0..orig.out_units() {
        let row = &w[o * unit..(o + 1) * unit];
        let s: f64 = row[u * feed.fan * slice..(u + 1) * feed.fan * slice].iter().sum();
        dst.bias.data_mut()[o] += c * s;
    }
}

/// Keeps only the listed output units of every layer and the input units they feed.
fn shrink(model: &Model, kept: &[Vec<usize>]) -> Result<Model> {
    if kept.len() != model.layers.len() {
        return Err(NnError::InvalidSpec(format!("{} kept lists for {} layers", kept.len(), model.layers.len())));
    }
    let feeds = feeds(model);
    let mut layers = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let units = layer.out_units();
        if kept[i].iter().any(|&u| u >= units) || kept[i].windows(2).any(|w| w[0] >= w[1]) {
            return Err(NnError::InvalidSpec(format!("bad kept units for {}", layer.label)));
        }
        let feed = &feeds[i];
        let inputs: Vec<usize> = match feed.source {
            None => (0..layer.in_units()).collect(),
            Some(s) => kept[s].iter().flat_map(|&u| u * feed.fan..(u + 1) * feed.fan).collect(),
        };
        let (unit, slice) = (layer.unit_len(), layer.slice_len());
        let w = layer.weight.data();
        let mut data = Vec::with_capacity(kept[i].len() * inputs.len() * slice);
        for &o in &kept[i] {
            for &c in &inputs {
                let s = o * unit + c * slice;
                data.extend_from_slice(&w[s..s + slice]);
            }
        }
        let mut shape = layer.weight.shape().to_vec();
        shape[0] = kept[i].len();
        shape[1] = inputs.len();
        if shape[0] == 0 || shape[1] == 0 {
            return Err(NnError::InvalidSpec(format!("{} would have no units left", layer.label)));
        }
        let bias: Vec<f64> = kept[i].iter().map(|&o| layer.bias.data()[o]).collect();
        layers.push(Layer {
            label: layer.label.clone(),
            kind: layer.kind,
            weight: Tensor::new(shape, data)?,
            bias: Tensor::from_vec(bias),
        });
    }
    Ok(Model { spec: model.spec.clone(), layers, stages: model.stages.clone() })
}

/// A model in the compact shape described by `record`, parameters zeroed;
/// fill it with `scatter_params` from the pruned export.
pub fn compact_shape(record: &CompactionRecord) -> Result<Model> {
    let kept: Vec<Vec<usize>> = record.layers.iter().map(|l| l.kept.clone()).collect();
    let mut model = shrink(&Model::build(&record.spec)?, &kept)?;
    let zeros = vec![0.0; model.num_params()];
    model.scatter_params(&zeros)?;
    Ok(model)
}
