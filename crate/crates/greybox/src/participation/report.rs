//! Per-mode, per-node report assembly in the shape of the JSON interchange
//! schema: layer1 {mode -> node -> value}, layer2 {mode -> node ->
//! {re, im, re_norm, im_norm}}, layer3 {mode -> node -> parameter -> {re, im}}.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use super::{
    impedance_participation, layer1_index, layer2_index, parameter_participation,
};
use crate::error::ParticipationError;
use crate::lti::ComplexFrequency;
use crate::system::WholeSystemModel;

#[derive(Debug, Clone, Serialize)]
pub struct ModeEntry {
    pub index: usize,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub freq_hz: f64,
    pub damping_ratio: f64,
}

impl ModeEntry {
    pub fn from_lambda(index: usize, lambda: Complex64) -> Self {
        let mag = lambda.norm();
        Self {
            index,
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            freq_hz: lambda.im / (2.0 * std::f64::consts::PI),
            damping_ratio: if mag > 0.0 { -lambda.re / mag } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Layer2Entry {
    pub re: f64,
    pub im: f64,
    pub re_norm: f64,
    pub im_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterEntry {
    pub re: f64,
    pub im: f64,
}

/// Layer-1/2/3 indices for a set of modes over a set of nodes. Keys are
/// zero-padded decimal strings so lexicographic and numeric orders agree.
#[derive(Debug, Clone, Serialize)]
pub struct LayerReport {
    pub modes: Vec<ModeEntry>,
    pub layer1: BTreeMap<String, BTreeMap<String, f64>>,
    pub layer2: BTreeMap<String, BTreeMap<String, Layer2Entry>>,
    pub layer3: BTreeMap<String, BTreeMap<String, BTreeMap<String, ParameterEntry>>>,
}

pub fn mode_key(index: usize) -> String {
    format!("{index:03}")
}

pub fn node_key(node: usize) -> String {
    format!("{node:03}")
}

impl LayerReport {
    /// Compute the three layers for `modes` over `nodes`. Layer-3 covers
    /// every catalog parameter of each apparatus node (placeholders are
    /// skipped) and can be disabled for speed.
    pub fn analyze(
        model: &WholeSystemModel,
        modes: &[usize],
        nodes: &[usize],
        with_layer3: bool,
    ) -> Result<Self, ParticipationError> {
        let mode_entries = modes
            .iter()
            .map(|&m| ModeEntry::from_lambda(m, model.modes().value(m)))
            .collect();

        let mut layer1 = BTreeMap::new();
        let mut layer2 = BTreeMap::new();
        let mut layer3 = BTreeMap::new();

        for &mode in modes {
            let lambda = model.modes().value(mode);
            let lam = ComplexFrequency::new(lambda).map_err(ParticipationError::Lti)?;
            let mut l1_row = BTreeMap::new();
            let mut l2_raw: Vec<(usize, Complex64)> = Vec::new();
            let mut l3_row = BTreeMap::new();

            for &node in nodes {
                let pf = impedance_participation(model, node, mode)?;
                let z = model
                    .terminal(node)?
                    .impedance_at(lambda)
                    .map_err(ParticipationError::Lti)?;
                l1_row.insert(node_key(node), layer1_index(&pf, &z));
                l2_raw.push((node, layer2_index(&pf, &z)?));

                if with_layer3 {
                    if let Some(instance) = model.terminal(node)?.instance() {
                        let mut per_param = BTreeMap::new();
                        for name in instance.parameter_names() {
                            let sens = instance.parameter_sensitivity(name, lam)?;
                            let value = parameter_participation(&pf, &sens)?;
                            per_param.insert(
                                name.to_string(),
                                ParameterEntry {
                                    re: value.re,
                                    im: value.im,
                                },
                            );
                        }
                        l3_row.insert(node_key(node), per_param);
                    }
                }
            }

            // Normalization to the sum of absolute values across nodes.
            let base: f64 = l2_raw.iter().map(|(_, v)| v.norm()).sum();
            let mut l2_row = BTreeMap::new();
            for (node, v) in l2_raw {
                let (re_norm, im_norm) = if base > 0.0 {
                    (v.re / base, v.im / base)
                } else {
                    (0.0, 0.0)
                };
                l2_row.insert(
                    node_key(node),
                    Layer2Entry {
                        re: v.re,
                        im: v.im,
                        re_norm,
                        im_norm,
                    },
                );
            }

            let key = mode_key(mode);
            layer1.insert(key.clone(), l1_row);
            layer2.insert(key.clone(), l2_row);
            if with_layer3 {
                layer3.insert(key, l3_row);
            }
        }

        Ok(Self {
            modes: mode_entries,
            layer1,
            layer2,
            layer3,
        })
    }
}
