//! How each layer's input units are fed by the previous layer's output units.

use crate::models::{Model, Stage};

/// Input wiring of one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Feed {
    /// Previous parametric layer, `None` for the model input.
    pub source: Option<usize>,
    /// Input units of this layer per output unit of the source (spatial
    /// positions after a flatten, otherwise 1).
    pub fan: usize,
    /// Non-parametric stages between the source and this layer.
    pub between: Vec<Stage>,
    /// Output positions per output unit (`Ho * Wo` for conv, 1 for dense).
    pub positions: usize,
}

pub(crate) fn feeds(model: &Model) -> Vec<Feed> {
    let shapes = model.stage_shapes();
    let mut out = Vec::with_capacity(model.layers.len());
    let mut source: Option<usize> = None;
    let mut between = Vec::new();
    for (pos, stage) in model.stages.iter().enumerate() {
        match *stage {
            Stage::Layer(i) => {
                let layer = &model.layers[i];
                let fan = match source {
                    Some(s) => layer.in_units() / model.layers[s].out_units(),
                    None => 1,
                };
                let after = &shapes[pos + 1];
                let positions = after[1..].iter().product::<usize>().max(1);
                out.push(Feed { source, fan: fan.max(1), between: std::mem::take(&mut between), positions });
                source = Some(i);
            }
            other => between.push(other),
        }
    }
    out
}

/// Norms of each output unit's weights (`||W[u, ...]||`).
pub(crate) fn unit_norms(weights: &[f64], units: usize) -> Vec<f64> {
    let len = weights.len() / units;
    weights.chunks(len).map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

/// Norms of each input unit's weights across all output units.
pub(crate) fn input_norms(weights: &[f64], units: usize, inputs: usize) -> Vec<f64> {
    let unit = weights.len() / units;
    let slice = unit / inputs;
    let mut sq = vec![0.0; inputs];
    for w in weights.chunks(unit) {
        for (c, s) in w.chunks(slice).enumerate() {
            sq[c] += s.iter().map(|v| v * v).sum::<f64>();
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}
