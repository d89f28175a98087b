//! Group structures over a model's flat parameter vector.
//!
//! [`make_groups`] returns one [`Region`] per grouped layer (per-layer mode);
//! global mode concatenates them with [`Region::concat`]. Group weights use
//! the default `1/|s_j|`. Biases are left out of every group unless
//! `include_bias` is set, in which case a filter's or neuron's bias joins its
//! group and unstructured grouping adds one singleton per bias.

use serde::{Deserialize, Serialize};
use wgsef_core::groups::GroupPartition;
use wgsef_core::optim::Region;

use crate::error::{NnError, Result};
use crate::models::{LayerKind, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupingScheme {
    /// One group per convolution filter (all input channels of it).
    PerFilter,
    /// One group per (conv layer, input channel): that channel's slice of every filter.
    PerChannel,
    /// One group per dense-layer output neuron (its weight row).
    PerNeuron,
    /// Every weight is its own group.
    Unstructured,
    /// Filter groups with a sparsity level per conv layer.
    PerLayerFilters { k: Vec<usize> },
    /// Explicit groups of flat-vector indices; need not cover every parameter.
    Custom {
        groups: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl GroupingScheme {
    /// Per-layer sparsity levels carried by the scheme itself.
    pub fn per_layer_k(&self) -> Option<&[usize]> {
        match self {
            GroupingScheme::PerLayerFilters { k } => Some(k),
            _ => None,
        }
    }
}

fn region(label: &str, groups: Vec<Vec<usize>>, weights: Option<Vec<f64>>) -> Result<Region<f64>> {
    let mut indices: Vec<usize> = groups.iter().flatten().copied().collect();
    indices.sort_unstable();
    let local = |i: usize| indices.binary_search(&i).unwrap();
    let local_groups: Vec<Vec<usize>> = groups.iter().map(|g| g.iter().map(|&i| local(i)).collect()).collect();
    let partition = GroupPartition::new(indices.len(), local_groups, weights)?;
    Ok(Region::new(label, indices, partition)?)
}

pub fn make_groups(model: &Model, scheme: &GroupingScheme, include_bias: bool) -> Result<Vec<Region<f64>>> {
    let layout = model.layout();
    let convs: Vec<usize> = (0..model.layers.len())
        .filter(|&i| matches!(model.layers[i].kind, LayerKind::Conv { .. }))
        .collect();
    let denses: Vec<usize> = (0..model.layers.len())
        .filter(|&i| model.layers[i].kind == LayerKind::Dense)
        .collect();
    let mut regions = Vec::new();
    match scheme {
        GroupingScheme::PerFilter | GroupingScheme::PerLayerFilters { .. } => {
            if convs.is_empty() {
                return Err(NnError::SchemeNotApplicable("filter groups need convolution layers".into()));
            }
            if let Some(k) = scheme.per_layer_k() {
                if k.len() != convs.len() {
                    return Err(NnError::SchemeNotApplicable(format!(
                        "{} per-layer k values for {} conv layers",
                        k.len(),
                        convs.len()
                    )));
                }
            }
            for &li in &convs {
                regions.push(unit_groups(model, li, &layout[li], include_bias)?);
            }
        }
        GroupingScheme::PerNeuron => {
            if denses.is_empty() {
                return Err(NnError::SchemeNotApplicable("neuron groups need dense layers".into()));
            }
            for &li in &denses {
                regions.push(unit_groups(model, li, &layout[li], include_bias)?);
            }
        }
        GroupingScheme::PerChannel => {
            if convs.is_empty() {
                return Err(NnError::SchemeNotApplicable("channel groups need convolution layers".into()));
            }
            if include_bias {
                return Err(NnError::SchemeNotApplicable("biases belong to filters, not input channels".into()));
            }
            for &li in &convs {
                let l = &model.layers[li];
                let (unit, slice) = (l.unit_len(), l.slice_len());
                let start = layout[li].weight.start;
                let groups = (0..l.in_units())
                    .map(|c| {
                        (0..l.out_units())
                            .flat_map(|f| {
                                let s = start + f * unit + c * slice;
                                s..s + slice
                            })
                            .collect()
                    })
                    .collect();
                regions.push(region(&l.label, groups, None)?);
            }
        }
        GroupingScheme::Unstructured => {
            for (l, block) in model.layers.iter().zip(&layout) {
                let mut groups: Vec<Vec<usize>> = block.weight.clone().map(|i| vec![i]).collect();
                if include_bias {
                    groups.extend(block.bias.clone().map(|i| vec![i]));
                }
                regions.push(region(&l.label, groups, None)?);
            }
        }
        GroupingScheme::Custom { groups, weights } => {
            let n = model.num_params();
            if let Some(&bad) = groups.iter().flatten().find(|&&i| i >= n) {
                return Err(NnError::SchemeNotApplicable(format!("custom index {bad} outside {n} parameters")));
            }
            regions.push(region("custom", groups.clone(), weights.clone())?);
        }
    }
    Ok(regions)
}

/// One group per output unit (filter or neuron) of layer `li`.
fn unit_groups(model: &Model, li: usize, block: &crate::models::ParamBlock, include_bias: bool) -> Result<Region<f64>> {
    let l = &model.layers[li];
    let unit = l.unit_len();
    let groups = (0..l.out_units())
        .map(|u| {
            let s = block.weight.start + u * unit;
            let mut g: Vec<usize> = (s..s + unit).collect();
            if include_bias {
                g.push(block.bias.start + u);
            }
            g
        })
        .collect();
    region(&l.label, groups, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Architecture, ModelSpec};

    fn lenet() -> Model {
        Model::build(&ModelSpec { architecture: Architecture::LeNet5, input_shape: vec![1, 32, 32], outputs: 10, seed: 0 })
            .unwrap()
    }

    fn linear(n: usize) -> Model {
        Model::build(&ModelSpec { architecture: Architecture::Linear, input_shape: vec![n], outputs: 1, seed: 0 }).unwrap()
    }

    #[test]
    fn lenet_filter_groups() {
        let m = lenet();
        let r = make_groups(&m, &GroupingScheme::PerFilter, false).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].partition.len(), 6);
        assert!(r[0].partition.groups().iter().all(|g| g.len() == 25));
        assert_eq!(r[1].partition.len(), 16);
        assert!(r[1].partition.groups().iter().all(|g| g.len() == 150));
        // conv1 weights start at 0, conv2 weights after conv1's 150 weights and 6 biases.
        assert_eq!(r[0].indices[r[0].partition.group(2)[0]], 50);
        assert_eq!(r[1].indices[r[1].partition.group(0)[0]], 156);
        assert_eq!(r[1].indices[r[1].partition.group(1)[0]], 306);
        let global = Region::concat("global", &r).unwrap();
        assert_eq!(global.partition.len(), 22);
    }

    #[test]
    fn include_bias_adds_bias_to_filter() {
        let m = lenet();
        let r = make_groups(&m, &GroupingScheme::PerFilter, true).unwrap();
        let g = r[0].partition.group(1);
        assert_eq!(g.len(), 26);
        assert_eq!(r[0].indices[*g.last().unwrap()], 151);
    }

    #[test]
    fn unstructured_linear_is_singletons() {
        let r = make_groups(&linear(10), &GroupingScheme::Unstructured, false).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].partition.len(), 10);
        assert_eq!(r[0].indices, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn channel_groups_span_filters() {
        let m = lenet();
        let r = make_groups(&m, &GroupingScheme::PerChannel, false).unwrap();
        assert_eq!(r[0].partition.len(), 1);
        assert_eq!(r[1].partition.len(), 6);
        assert!(r[1].partition.groups().iter().all(|g| g.len() == 16 * 25));
        // Channel 1 of conv2 filter 0 starts 25 weights into the filter.
        assert_eq!(r[1].indices[r[1].partition.group(1)[0]], 156 + 25);
    }

    #[test]
    fn scheme_errors() {
        assert!(matches!(
            make_groups(&linear(4), &GroupingScheme::PerFilter, false),
            Err(NnError::SchemeNotApplicable(_))
        ));
        assert!(make_groups(&lenet(), &GroupingScheme::PerLayerFilters { k: vec![3] }, false).is_err());
        let bad = GroupingScheme::Custom { groups: vec![vec![0, 99]], weights: None };
        assert!(make_groups(&linear(4), &bad, false).is_err());
    }

    #[test]
    fn custom_blocks() {
        let s = GroupingScheme::Custom { groups: vec![vec![0, 1], vec![2, 3]], weights: None };
        let r = make_groups(&linear(4), &s, false).unwrap();
        assert_eq!(r[0].indices, vec![0, 1, 2, 3]);
        assert_eq!(r[0].partition.weights(), &[0.5, 0.5]);
        let json = serde_json::to_string(&GroupingScheme::PerLayerFilters { k: vec![3, 8] }).unwrap();
        assert_eq!(json, r#"{"kind":"per_layer_filters","k":[3,8]}"#);
    }
}
