//! System description files: JSON with per-unit bases, nodes, branches and
//! apparatus entries.
//!
//! ```json
//! {
//!   "base": {"f0_hz": 60.0, "s_base": 1.0, "v_base": 1.0},
//!   "nodes": [{"id": 1, "r": 20.0}, {"id": 2, "c": 1.0e-4}],
//!   "branches": [{"from": 1, "to": 2, "r": 0.01, "l": 2.65e-4, "c": 1.06e-4}],
//!   "apparatus": [{"node": 1, "model": "swing_sg",
//!                  "params": {"h": 3.5, "d_damp": 2.0, "xp": 0.25, "e_ref": 1.05},
//!                  "setpoint": {"p": 0.35, "v": 1.0, "angle": 0.0}}]
//! }
//! ```
//!
//! `l` and `c` are per-unit inductance/capacitance (reactance and susceptance
//! at the base frequency divided by `omega0`). Apparatus impedances are
//! expressed in the global synchronous frame.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::apparatus::{ApparatusInstance, Setpoint};
use crate::error::{ConfigError, NetError};
use crate::network::{Branch, NetworkDescription, Shunt};
use crate::system::WholeSystemModel;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseSection {
    f0_hz: f64,
    #[serde(default = "one")]
    s_base: f64,
    #[serde(default = "one")]
    v_base: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    id: usize,
    #[serde(default)]
    r: Option<f64>,
    #[serde(default)]
    l: Option<f64>,
    #[serde(default)]
    c: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchEntry {
    from: usize,
    to: usize,
    #[serde(default)]
    r: f64,
    #[serde(default)]
    l: f64,
    #[serde(default)]
    c: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetpointEntry {
    #[serde(default)]
    p: f64,
    #[serde(default)]
    q: f64,
    #[serde(default = "one")]
    v: f64,
    #[serde(default)]
    angle: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApparatusEntry {
    node: usize,
    model: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default)]
    setpoint: Option<SetpointEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFileJson {
    base: BaseSection,
    #[serde(default)]
    nodes: Vec<NodeEntry>,
    #[serde(default)]
    branches: Vec<BranchEntry>,
    #[serde(default)]
    apparatus: Vec<ApparatusEntry>,
}

/// One apparatus request from a system file.
#[derive(Debug, Clone)]
pub struct ApparatusSpec {
    pub node: usize,
    pub kind: String,
    pub params: BTreeMap<String, f64>,
    pub setpoint: Setpoint,
}

/// Parsed and validated system description.
#[derive(Debug, Clone)]
pub struct SystemFile {
    pub network: NetworkDescription,
    pub apparatus: Vec<ApparatusSpec>,
}

/// Parse and validate a system JSON file, with field-path diagnostics on
/// malformed input.
pub fn load_system(path: &Path) -> Result<SystemFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let parsed: SystemFileJson =
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Json {
            path: path.display().to_string(),
            location: format!(
                "{} (line {}, column {})",
                e.path(),
                e.inner().line(),
                e.inner().column()
            ),
            message: e.inner().to_string(),
        })?;

    let invalid = |message: String| ConfigError::Json {
        path: path.display().to_string(),
        location: "<validation>".into(),
        message,
    };

    if !(parsed.base.f0_hz > 0.0 && parsed.base.f0_hz.is_finite()) {
        return Err(invalid(format!("base.f0_hz must be positive, got {}", parsed.base.f0_hz)));
    }
    let omega0 = 2.0 * std::f64::consts::PI * parsed.base.f0_hz;

    let mut node_count = 0usize;
    for n in &parsed.nodes {
        node_count = node_count.max(n.id);
    }
    for b in &parsed.branches {
        node_count = node_count.max(b.from).max(b.to);
    }
    for a in &parsed.apparatus {
        node_count = node_count.max(a.node);
    }
    if node_count == 0 {
        return Err(invalid("system declares no nodes".into()));
    }

    let branches = parsed
        .branches
        .iter()
        .map(|b| Branch {
            from: b.from,
            to: b.to,
            r: b.r,
            l: b.l,
            c: b.c,
        })
        .collect();
    let shunts = parsed
        .nodes
        .iter()
        .filter(|n| n.r.is_some() || n.l.is_some() || n.c.is_some())
        .map(|n| Shunt {
            node: n.id,
            r: n.r,
            l: n.l,
            c: n.c,
        })
        .collect();
    let network = NetworkDescription::new(node_count, omega0, branches, shunts)
        .and_then(|net| net.with_bases(parsed.base.s_base, parsed.base.v_base))
        .map_err(|e| invalid(e.to_string()))?;

    let mut seen = vec![false; node_count + 1];
    let mut apparatus = Vec::new();
    for a in &parsed.apparatus {
        if a.node == 0 || a.node > node_count {
            return Err(invalid(format!("apparatus node {} out of range", a.node)));
        }
        if seen[a.node] {
            return Err(invalid(format!("node {} has more than one apparatus", a.node)));
        }
        seen[a.node] = true;
        let sp = a.setpoint.clone().unwrap_or(SetpointEntry {
            p: 0.0,
            q: 0.0,
            v: 1.0,
            angle: 0.0,
        });
        apparatus.push(ApparatusSpec {
            node: a.node,
            kind: a.model.clone(),
            params: a.params.clone(),
            setpoint: Setpoint {
                p: sp.p,
                q: sp.q,
                v: sp.v,
                angle: sp.angle,
            },
        });
    }

    Ok(SystemFile {
        network,
        apparatus,
    })
}

impl SystemFile {
    /// Solve every apparatus equilibrium and assemble the whole-system model.
    pub fn assemble(&self) -> Result<WholeSystemModel, NetError> {
        let omega0 = self.network.omega0();
        let mut instances = Vec::new();
        for spec in &self.apparatus {
            let inst = ApparatusInstance::build(&spec.kind, &spec.params, spec.setpoint, omega0)
                .map_err(NetError::Apparatus)?;
            instances.push((spec.node, inst));
        }
        WholeSystemModel::assemble(&self.network, instances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_round_trip() {
        let dir = std::env::temp_dir().join("greybox-sysfile-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mini.json");
        std::fs::write(
            &path,
            r#"{
  "base": {"f0_hz": 60.0},
  "nodes": [{"id": 1, "r": 1.0}, {"id": 2, "r": 2.0}],
  "branches": [{"from": 1, "to": 2, "r": 0.01, "l": 0.0003}],
  "apparatus": [{"node": 1, "model": "rl_branch", "params": {"r": 1.0, "l": 0.001}}]
}"#,
        )
        .unwrap();
        let sys = load_system(&path).unwrap();
        assert_eq!(sys.network.node_count(), 2);
        assert_eq!(sys.apparatus.len(), 1);
        let model = sys.assemble().unwrap();
        assert_eq!(model.node_count(), 2);
        assert!(model.terminal(2).unwrap().is_placeholder());
    }

    #[test]
    fn parse_error_reports_path() {
        let dir = std::env::temp_dir().join("greybox-sysfile-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("broken.json");
        std::fs::write(
            &path,
            r#"{"base": {"f0_hz": "sixty"}, "nodes": [], "branches": [], "apparatus": []}"#,
        )
        .unwrap();
        match load_system(&path) {
            Err(ConfigError::Json { location, .. }) => {
                assert!(location.contains("base.f0_hz"), "location {location}")
            }
            other => panic!("expected json error, got {other:?}"),
        }
    }
}
