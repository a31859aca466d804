//! Validated network data: nodes, branches, shunts, per-unit bases.

use crate::error::NetError;

/// Series RL branch with line-charging capacitance split equally between its
/// end nodes (pi model). `l` and `c` are per-unit inductance/capacitance, so
/// the series impedance is `r + s l + j omega0 l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub l: f64,
    pub c: f64,
}

/// Parallel R/L/C shunt from a node to ground. Absent elements are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shunt {
    pub node: usize,
    pub r: Option<f64>,
    pub l: Option<f64>,
    pub c: Option<f64>,
}

/// Network topology and element data. Node indices are 1-based.
#[derive(Debug, Clone)]
pub struct NetworkDescription {
    node_count: usize,
    omega0: f64,
    s_base: f64,
    v_base: f64,
    branches: Vec<Branch>,
    shunts: Vec<Shunt>,
}

impl NetworkDescription {
    pub fn new(
        node_count: usize,
        omega0: f64,
        branches: Vec<Branch>,
        shunts: Vec<Shunt>,
    ) -> Result<Self, NetError> {
        let net = Self {
            node_count,
            omega0,
            s_base: 1.0,
            v_base: 1.0,
            branches,
            shunts,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn with_bases(mut self, s_base: f64, v_base: f64) -> Result<Self, NetError> {
        if !(s_base > 0.0 && s_base.is_finite() && v_base > 0.0 && v_base.is_finite()) {
            return Err(NetError::Description(
                "per-unit bases must be positive and finite".into(),
            ));
        }
        self.s_base = s_base;
        self.v_base = v_base;
        Ok(self)
    }

    fn validate(&self) -> Result<(), NetError> {
        if self.node_count == 0 {
            return Err(NetError::Description("network has no nodes".into()));
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(NetError::Description(format!(
                "base angular frequency must be positive, got {}",
                self.omega0
            )));
        }
        for b in &self.branches {
            for node in [b.from, b.to] {
                if node == 0 || node > self.node_count {
                    return Err(NetError::NodeOutOfRange {
                        node,
                        count: self.node_count,
                    });
                }
            }
            if b.from == b.to {
                return Err(NetError::Description(format!(
                    "branch connects node {} to itself",
                    b.from
                )));
            }
            if !(b.r >= 0.0 && b.l >= 0.0 && b.c >= 0.0)
                || !b.r.is_finite()
                || !b.l.is_finite()
                || !b.c.is_finite()
            {
                return Err(NetError::Description(format!(
                    "branch {}-{} has negative or non-finite elements",
                    b.from, b.to
                )));
            }
            if b.r == 0.0 && b.l == 0.0 {
                return Err(NetError::Description(format!(
                    "branch {}-{} has neither resistance nor inductance",
                    b.from, b.to
                )));
            }
        }
        for s in &self.shunts {
            if s.node == 0 || s.node > self.node_count {
                return Err(NetError::NodeOutOfRange {
                    node: s.node,
                    count: self.node_count,
                });
            }
            for (name, v) in [("r", s.r), ("l", s.l), ("c", s.c)] {
                if let Some(v) = v {
                    if v <= 0.0 || !v.is_finite() {
                        return Err(NetError::Description(format!(
                            "shunt {name} at node {} must be positive and finite, got {v}",
                            s.node
                        )));
                    }
                }
            }
            if s.r.is_none() && s.l.is_none() && s.c.is_none() {
                return Err(NetError::Description(format!(
                    "shunt at node {} declares no element",
                    s.node
                )));
            }
        }

        // Every node must touch the network somewhere.
        let mut touched = vec![false; self.node_count + 1];
        for b in &self.branches {
            touched[b.from] = true;
            touched[b.to] = true;
        }
        for s in &self.shunts {
            touched[s.node] = true;
        }
        if let Some(node) = (1..=self.node_count).find(|&k| !touched[k]) {
            return Err(NetError::IsolatedNode { node });
        }

        // Branch graph connectivity (single-node networks are trivially
        // connected through their shunts).
        if self.node_count > 1 {
            let mut parent: Vec<usize> = (0..=self.node_count).collect();
            fn find(parent: &mut [usize], mut x: usize) -> usize {
                while parent[x] != x {
                    parent[x] = parent[parent[x]];
                    x = parent[x];
                }
                x
            }
            for b in &self.branches {
                let (a, c) = (find(&mut parent, b.from), find(&mut parent, b.to));
                parent[a] = c;
            }
            let root = find(&mut parent, 1);
            for node in 2..=self.node_count {
                if find(&mut parent, node) != root {
                    return Err(NetError::Description(format!(
                        "network graph is not connected: node {node} is unreachable from node 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Synchronous base frequency, rad/s.
    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn s_base(&self) -> f64 {
        self.s_base
    }

    pub fn v_base(&self) -> f64 {
        self.v_base
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn shunts(&self) -> &[Shunt] {
        &self.shunts
    }

    /// Total shunt capacitance collected at each node (node shunts plus the
    /// pi-model halves of branch charging), 1-based index 0 unused.
    pub(crate) fn node_capacitance(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.node_count + 1];
        for s in &self.shunts {
            if let Some(cs) = s.c {
                c[s.node] += cs;
            }
        }
        for b in &self.branches {
            c[b.from] += 0.5 * b.c;
            c[b.to] += 0.5 * b.c;
        }
        c
    }

    /// Shunt conductance per node (1-based).
    pub(crate) fn node_conductance(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.node_count + 1];
        for s in &self.shunts {
            if let Some(r) = s.r {
                g[s.node] += 1.0 / r;
            }
        }
        g
    }
}
