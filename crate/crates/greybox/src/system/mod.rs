//! Whole-system assembly: the network impedance face in feedback with the
//! apparatus admittances, giving a state-space realization whose transfer
//! function from series voltage injections to apparatus currents is
//! `(I + Y_net Z)^{-1} Y_net` and whose A-matrix eigenvalues are the system
//! modes.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::apparatus::{invert_small, ApparatusInstance};
use crate::error::{LtiError, NetError};
use crate::lti::{
    eigen_decompose, frobenius_norm, to_complex, ComplexFrequency, EigenSystem, SampledSpectrum,
    StateSpaceForm,
};
use crate::network::{build_network_impedance, build_nodal_admittance, NetworkDescription,
    NodalAdmittance};

const LOOP_COND_LIMIT: f64 = 1e12;
const CONSTRUCTION_CHECK_RTOL: f64 = 1e-8;
const CONSTRUCTION_CHECK_POINTS: usize = 20;

/// Resistance of the placeholder apparatus at passive nodes, in per unit.
/// Large enough that no mode moves by more than 1e-9 relative.
pub const PLACEHOLDER_RESISTANCE: f64 = 1e10;

/// One apparatus port of the assembled system.
pub struct Terminal {
    admittance: StateSpaceForm,
    source: TerminalSource,
}

pub enum TerminalSource {
    /// Bare admittance block, used by test fixtures and perturbation rebuilds.
    Raw,
    /// High-impedance resistive placeholder at a passive node.
    Placeholder,
    /// Full catalog apparatus with equilibrium and parameters.
    Model(Box<ApparatusInstance>),
}

impl Terminal {
    pub fn raw(admittance: StateSpaceForm) -> Self {
        Self {
            admittance,
            source: TerminalSource::Raw,
        }
    }

    pub fn placeholder(block: usize) -> Self {
        Self {
            admittance: StateSpaceForm::static_gain(
                DMatrix::identity(block, block) / PLACEHOLDER_RESISTANCE,
            ),
            source: TerminalSource::Placeholder,
        }
    }

    pub fn model(instance: ApparatusInstance) -> Self {
        Self {
            admittance: instance.terminal().admittance.clone(),
            source: TerminalSource::Model(Box::new(instance)),
        }
    }

    pub fn admittance(&self) -> &StateSpaceForm {
        &self.admittance
    }

    pub fn source(&self) -> &TerminalSource {
        &self.source
    }

    pub fn instance(&self) -> Option<&ApparatusInstance> {
        match &self.source {
            TerminalSource::Model(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_placeholder(&self) -> bool {
        matches!(self.source, TerminalSource::Placeholder)
    }

    pub fn admittance_at(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        self.admittance.eval_c(s)
    }

    /// Terminal impedance, evaluated pointwise as the admittance inverse.
    pub fn impedance_at(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        let y = self.admittance.eval_c(s)?;
        invert_small(&y).ok_or_else(|| LtiError::SolveFailed(format!(
            "terminal admittance singular at s = {s}"
        )))
    }
}

/// Which part of the model owns a global state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateOwner {
    Network,
    Apparatus { node: usize, local: usize },
}

pub(crate) struct Blocks<T: ComplexField> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
}

impl Blocks<f64> {
    fn from_ss(ss: &StateSpaceForm) -> Self {
        Self {
            a: ss.a().clone(),
            b: ss.b().clone(),
            c: ss.c().clone(),
            d: ss.d().clone(),
        }
    }

    fn to_complex(&self) -> Blocks<Complex64> {
        Blocks {
            a: to_complex(&self.a),
            b: to_complex(&self.b),
            c: to_complex(&self.c),
            d: to_complex(&self.d),
        }
    }
}

fn block_diag<T: ComplexField>(blocks: &[&Blocks<T>]) -> Blocks<T> {
    let n: usize = blocks.iter().map(|b| b.a.nrows()).sum();
    let p: usize = blocks.iter().map(|b| b.b.ncols()).sum();
    let q: usize = blocks.iter().map(|b| b.c.nrows()).sum();
    let mut a = DMatrix::<T>::zeros(n, n);
    let mut b = DMatrix::<T>::zeros(n, p);
    let mut c = DMatrix::<T>::zeros(q, n);
    let mut d = DMatrix::<T>::zeros(q, p);
    let (mut in_, mut ip, mut iq) = (0usize, 0usize, 0usize);
    for blk in blocks {
        let (bn, bp, bq) = (blk.a.nrows(), blk.b.ncols(), blk.c.nrows());
        a.view_mut((in_, in_), (bn, bn)).copy_from(&blk.a);
        b.view_mut((in_, ip), (bn, bp)).copy_from(&blk.b);
        c.view_mut((iq, in_), (bq, bn)).copy_from(&blk.c);
        d.view_mut((iq, ip), (bq, bp)).copy_from(&blk.d);
        in_ += bn;
        ip += bp;
        iq += bq;
    }
    Blocks { a, b, c, d }
}

/// Closed-loop matrices with both port families: series voltage injections
/// `v` (inputs) with apparatus currents `i` (outputs), and parallel current
/// injections `j` (inputs) with node voltages `u` (outputs).
pub(crate) struct Closed<T: ComplexField> {
    pub a: DMatrix<T>,
    pub b_inj: DMatrix<T>,
    pub b_series: DMatrix<T>,
    pub c_current: DMatrix<T>,
    pub c_voltage: DMatrix<T>,
    // The full 2x2 port feedthrough; the cross blocks are part of the map
    // even where no current caller reads them.
    #[allow(dead_code)]
    pub d_cur_inj: DMatrix<T>,
    pub d_cur_series: DMatrix<T>,
    pub d_volt_inj: DMatrix<T>,
    #[allow(dead_code)]
    pub d_volt_series: DMatrix<T>,
}

/// Negative feedback of the network impedance face around the apparatus
/// admittance block-diagonal. The loop matrix `I + D_n D_a` must be
/// invertible (well-posedness).
pub(crate) fn close_loop<T: ComplexField>(
    net: &Blocks<T>,
    apps: &Blocks<T>,
) -> Result<Closed<T>, NetError> {
    let ports = net.c.nrows();
    let eye = DMatrix::<T>::identity(ports, ports);
    let loop_matrix = &eye + &net.d * &apps.d;
    let w = loop_matrix
        .clone()
        .try_inverse()
        .ok_or(NetError::IllPosed {
            node: 0,
            cond: f64::INFINITY,
            limit: LOOP_COND_LIMIT,
        })?;

    let wc = &w * &net.c; // ports x n_net
    let wdn = &w * &net.d; // ports x ports
    let wdnca = &wdn * &apps.c;
    let wdnda = &wdn * &apps.d;

    let c_i_n = &apps.d * &wc;
    let c_i_a = &apps.c - &apps.d * &wdnca;
    let d_i_j = &apps.d * &wdn;
    let d_i_v = &apps.d - &apps.d * &wdnda;

    let c_u_n = wc.clone();
    let c_u_a = -&wdnca;
    let d_u_j = wdn.clone();
    let d_u_v = -&wdnda;

    let n_net = net.a.nrows();
    let n_app = apps.a.nrows();
    let n = n_net + n_app;
    let mut a = DMatrix::<T>::zeros(n, n);
    a.view_mut((0, 0), (n_net, n_net))
        .copy_from(&(&net.a - &net.b * &c_i_n));
    a.view_mut((0, n_net), (n_net, n_app))
        .copy_from(&(-(&net.b * &c_i_a)));
    a.view_mut((n_net, 0), (n_app, n_net))
        .copy_from(&(&apps.b * &c_u_n));
    a.view_mut((n_net, n_net), (n_app, n_app))
        .copy_from(&(&apps.a + &apps.b * &c_u_a));

    let mut b_inj = DMatrix::<T>::zeros(n, ports);
    b_inj
        .view_mut((0, 0), (n_net, ports))
        .copy_from(&(&net.b - &net.b * &d_i_j));
    b_inj
        .view_mut((n_net, 0), (n_app, ports))
        .copy_from(&(&apps.b * &d_u_j));

    let mut b_series = DMatrix::<T>::zeros(n, ports);
    b_series
        .view_mut((0, 0), (n_net, ports))
        .copy_from(&(-(&net.b * &d_i_v)));
    b_series
        .view_mut((n_net, 0), (n_app, ports))
        .copy_from(&(&apps.b + &apps.b * &d_u_v));

    let mut c_current = DMatrix::<T>::zeros(ports, n);
    c_current
        .view_mut((0, 0), (ports, n_net))
        .copy_from(&c_i_n);
    c_current
        .view_mut((0, n_net), (ports, n_app))
        .copy_from(&c_i_a);

    let mut c_voltage = DMatrix::<T>::zeros(ports, n);
    c_voltage
        .view_mut((0, 0), (ports, n_net))
        .copy_from(&c_u_n);
    c_voltage
        .view_mut((0, n_net), (ports, n_app))
        .copy_from(&c_u_a);

    Ok(Closed {
        a,
        b_inj,
        b_series,
        c_current,
        c_voltage,
        d_cur_inj: d_i_j,
        d_cur_series: d_i_v,
        d_volt_inj: d_u_j,
        d_volt_series: d_u_v,
    })
}

/// Assembled whole-system model over `k` nodes with `block` channels per node
/// (2 in the dq frame).
pub struct WholeSystemModel {
    block: usize,
    nodes: usize,
    closed: Closed<f64>,
    eigen: EigenSystem,
    net_z: StateSpaceForm,
    net_y: Option<NodalAdmittance>,
    terminals: Vec<Terminal>,
    state_owner: Vec<StateOwner>,
    omega0: f64,
}

impl std::fmt::Debug for WholeSystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WholeSystemModel")
            .field("nodes", &self.nodes)
            .field("block", &self.block)
            .field("order", &self.closed.a.nrows())
            .finish()
    }
}

impl WholeSystemModel {
    /// Build from a network description and catalog apparatus. Nodes without
    /// an apparatus get the high-impedance resistive placeholder.
    pub fn assemble(
        net: &NetworkDescription,
        apparatus: Vec<(usize, ApparatusInstance)>,
    ) -> Result<Self, NetError> {
        let k = net.node_count();
        let mut slots: Vec<Option<Terminal>> = (0..k).map(|_| None).collect();
        for (node, inst) in apparatus {
            if node == 0 || node > k {
                return Err(NetError::NodeOutOfRange { node, count: k });
            }
            if slots[node - 1].is_some() {
                return Err(NetError::Description(format!(
                    "node {node} has more than one apparatus"
                )));
            }
            slots[node - 1] = Some(Terminal::model(inst));
        }
        let terminals: Vec<Terminal> = slots
            .into_iter()
            .map(|s| s.unwrap_or_else(|| Terminal::placeholder(2)))
            .collect();
        let net_z = build_network_impedance(net)?;
        let net_y = build_nodal_admittance(net)?;
        Self::from_parts_inner(net_z, Some(net_y), terminals, 2, net.omega0())
    }

    /// Build from raw parts: a network impedance-face realization and one
    /// admittance block per node. `block` is the channel count per node.
    pub fn from_parts(
        net_z: StateSpaceForm,
        terminals: Vec<Terminal>,
        block: usize,
    ) -> Result<Self, NetError> {
        Self::from_parts_inner(net_z, None, terminals, block, 1.0)
    }

    fn from_parts_inner(
        net_z: StateSpaceForm,
        net_y: Option<NodalAdmittance>,
        terminals: Vec<Terminal>,
        block: usize,
        omega0: f64,
    ) -> Result<Self, NetError> {
        let k = terminals.len();
        let ports = block * k;
        if net_z.n_inputs() != ports || net_z.n_outputs() != ports {
            return Err(NetError::Description(format!(
                "network realization has {}x{} ports, expected {ports}x{ports}",
                net_z.n_outputs(),
                net_z.n_inputs()
            )));
        }
        for (i, t) in terminals.iter().enumerate() {
            if t.admittance.n_inputs() != block || t.admittance.n_outputs() != block {
                return Err(NetError::Description(format!(
                    "apparatus at node {} has {}x{} ports, expected {block}x{block}",
                    i + 1,
                    t.admittance.n_outputs(),
                    t.admittance.n_inputs()
                )));
            }
        }

        let net_blocks = Blocks::from_ss(&net_z);
        let app_blocks: Vec<Blocks<f64>> = terminals
            .iter()
            .map(|t| Blocks::from_ss(&t.admittance))
            .collect();
        let app_refs: Vec<&Blocks<f64>> = app_blocks.iter().collect();
        let composite = block_diag(&app_refs);

        check_well_posed(&net_blocks.d, &terminals, block)?;
        let closed = close_loop(&net_blocks, &composite)?;

        let mut state_owner = vec![StateOwner::Network; net_z.order()];
        for (node0, t) in terminals.iter().enumerate() {
            for local in 0..t.admittance.order() {
                state_owner.push(StateOwner::Apparatus {
                    node: node0 + 1,
                    local,
                });
            }
        }

        let eigen = eigen_decompose(&closed.a)?;
        let model = Self {
            block,
            nodes: k,
            closed,
            eigen,
            net_z,
            net_y,
            terminals,
            state_owner,
            omega0,
        };
        model.construction_check()?;
        Ok(model)
    }

    /// Spot-check the realization against the direct admittance formula
    /// `(I + Y_net Z)^{-1} Y_net` at deterministic pseudo-random frequencies
    /// away from the poles.
    fn construction_check(&self) -> Result<(), NetError> {
        let mut checked = 0usize;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            // splitmix64
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        };
        let mut uniform = move || (next() >> 11) as f64 / (1u64 << 53) as f64;
        let mut attempts = 0;
        while checked < CONSTRUCTION_CHECK_POINTS && attempts < 400 {
            attempts += 1;
            let mag = 10f64.powf(-1.0 + 5.0 * uniform());
            let arg = std::f64::consts::PI * (0.1 + 0.35 * uniform());
            let s = Complex64::from_polar(mag, arg);
            if self
                .eigen
                .values()
                .iter()
                .any(|l| (l - s).norm() < 1e-3 * (1.0 + l.norm()))
            {
                continue;
            }
            let Some(direct) = self.direct_admittance_formula(s) else {
                continue;
            };
            let closed = match self.eval_admittance_full(s) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let scale = frobenius_norm(&direct);
            let err = frobenius_norm(&(closed - &direct)) / scale.max(1e-300);
            if err > CONSTRUCTION_CHECK_RTOL {
                return Err(NetError::AssemblyCheck {
                    s,
                    error: err,
                    bound: CONSTRUCTION_CHECK_RTOL,
                });
            }
            checked += 1;
        }
        Ok(())
    }

    /// `(I + Y_net Z)^{-1} Y_net` evaluated directly from the element faces.
    /// `None` when the point is unusable (singular terminal admittance or
    /// network face).
    fn direct_admittance_formula(&self, s: Complex64) -> Option<DMatrix<Complex64>> {
        let ports = self.ports();
        let y_net = match &self.net_y {
            Some(y) => y.eval_c(s).ok()?,
            None => invert_small(&self.net_z.eval_c(s).ok()?)?,
        };
        let mut z = DMatrix::<Complex64>::zeros(ports, ports);
        for (i, t) in self.terminals.iter().enumerate() {
            let zi = t.impedance_at(s).ok()?;
            z.view_mut((i * self.block, i * self.block), (self.block, self.block))
                .copy_from(&zi);
        }
        let eye = DMatrix::<Complex64>::identity(ports, ports);
        let m = &eye + &y_net * &z;
        Some(invert_small(&m)? * y_net)
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn ports(&self) -> usize {
        self.block * self.nodes
    }

    pub fn order(&self) -> usize {
        self.closed.a.nrows()
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.closed.a
    }

    pub fn modes(&self) -> &EigenSystem {
        &self.eigen
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn terminals(&self) -> &[Terminal] {
        &self.terminals
    }

    pub fn terminal(&self, node: usize) -> Result<&Terminal, NetError> {
        self.check_node(node)?;
        Ok(&self.terminals[node - 1])
    }

    pub fn state_owners(&self) -> &[StateOwner] {
        &self.state_owner
    }

    /// Global state index of apparatus-local state `local` at `node`.
    pub fn global_state_index(&self, node: usize, local: usize) -> Option<usize> {
        self.state_owner
            .iter()
            .position(|&o| o == StateOwner::Apparatus { node, local })
    }

    pub fn network_impedance_face(&self) -> &StateSpaceForm {
        &self.net_z
    }

    pub fn nodal_admittance(&self) -> Option<&NodalAdmittance> {
        self.net_y.as_ref()
    }

    fn check_node(&self, node: usize) -> Result<(), NetError> {
        if node == 0 || node > self.nodes {
            return Err(NetError::NodeOutOfRange {
                node,
                count: self.nodes,
            });
        }
        Ok(())
    }

    fn port_range(&self, node: usize) -> std::ops::Range<usize> {
        (node - 1) * self.block..node * self.block
    }

    /// Realization of the whole-system admittance block `Y_kk` (series
    /// voltage injection at `node` to apparatus current at `node`).
    pub fn admittance_block(&self, node: usize) -> Result<StateSpaceForm, NetError> {
        self.check_node(node)?;
        let r = self.port_range(node);
        Ok(StateSpaceForm::new(
            self.closed.a.clone(),
            self.closed.b_series.columns(r.start, self.block).into_owned(),
            self.closed.c_current.rows(r.start, self.block).into_owned(),
            self.closed
                .d_cur_series
                .view((r.start, r.start), (self.block, self.block))
                .into_owned(),
        )?)
    }

    /// Realization of the whole-system impedance block `Z_kk` (parallel
    /// current injection at `node` to node voltage at `node`).
    pub fn impedance_block(&self, node: usize) -> Result<StateSpaceForm, NetError> {
        self.check_node(node)?;
        let r = self.port_range(node);
        Ok(StateSpaceForm::new(
            self.closed.a.clone(),
            self.closed.b_inj.columns(r.start, self.block).into_owned(),
            self.closed.c_voltage.rows(r.start, self.block).into_owned(),
            self.closed
                .d_volt_inj
                .view((r.start, r.start), (self.block, self.block))
                .into_owned(),
        )?)
    }

    /// Full v-to-i admittance matrix at one complex frequency.
    pub fn eval_admittance(&self, s: ComplexFrequency) -> Result<DMatrix<Complex64>, NetError> {
        Ok(self.eval_admittance_full(s.value())?)
    }

    fn eval_admittance_full(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        let n = self.order();
        if n == 0 {
            return Ok(to_complex(&self.closed.d_cur_series));
        }
        let mut m = to_complex(&self.closed.a).map(|x| -x);
        for i in 0..n {
            m[(i, i)] += s;
        }
        let lu = m.full_piv_lu();
        let x = lu
            .solve(&to_complex(&self.closed.b_series))
            .ok_or_else(|| LtiError::SolveFailed("(sI - A) X = B".into()))?;
        Ok(to_complex(&self.closed.d_cur_series) + to_complex(&self.closed.c_current) * x)
    }

    /// `Y_kk(s)` for one node.
    pub fn admittance_block_at(
        &self,
        node: usize,
        s: Complex64,
    ) -> Result<DMatrix<Complex64>, NetError> {
        self.check_node(node)?;
        let r = self.port_range(node);
        let full = self.eval_admittance_full(s)?;
        Ok(full.view((r.start, r.start), (self.block, self.block)).into_owned())
    }

    /// Residue matrix of the admittance block `Y_kk` at mode `mode`, from the
    /// eigenvector formula `(C phi)(psi B)`.
    pub fn admittance_residue(&self, node: usize, mode: usize) -> Result<DMatrix<Complex64>, NetError> {
        self.check_node(node)?;
        let r = self.port_range(node);
        let phi = self.eigen.right_vector(mode);
        let psi = self.eigen.left_vector(mode);
        let c = to_complex(&self.closed.c_current.rows(r.start, self.block).into_owned());
        let b = to_complex(&self.closed.b_series.columns(r.start, self.block).into_owned());
        Ok((c * phi) * (psi * b))
    }

    /// Residue matrix of the impedance block `Z_kk` at mode `mode`.
    pub fn impedance_residue(&self, node: usize, mode: usize) -> Result<DMatrix<Complex64>, NetError> {
        self.check_node(node)?;
        let r = self.port_range(node);
        let phi = self.eigen.right_vector(mode);
        let psi = self.eigen.left_vector(mode);
        let c = to_complex(&self.closed.c_voltage.rows(r.start, self.block).into_owned());
        let b = to_complex(&self.closed.b_inj.columns(r.start, self.block).into_owned());
        Ok((c * phi) * (psi * b))
    }

    /// Grid-side impedance seen by the apparatus at `node`: the driving-point
    /// impedance with that apparatus open-circuited.
    pub fn grid_impedance_seen(&self, node: usize) -> Result<StateSpaceForm, NetError> {
        self.check_node(node)?;
        let closed = self
            .closed_with_replacement(node, &StateSpaceForm::static_gain(DMatrix::zeros(
                self.block, self.block,
            )))
            .map_err(|e| NetError::Topology {
                node,
                reason: e.to_string(),
            })?;
        let r = self.port_range(node);
        Ok(StateSpaceForm::new(
            closed.a.clone(),
            closed.b_inj.columns(r.start, self.block).into_owned(),
            closed.c_voltage.rows(r.start, self.block).into_owned(),
            closed
                .d_volt_inj
                .view((r.start, r.start), (self.block, self.block))
                .into_owned(),
        )?)
    }

    /// Close the loop with the terminal at `node` replaced by another
    /// admittance realization.
    pub(crate) fn closed_with_replacement(
        &self,
        node: usize,
        admittance: &StateSpaceForm,
    ) -> Result<Closed<f64>, NetError> {
        let net_blocks = Blocks::from_ss(&self.net_z);
        let app_blocks: Vec<Blocks<f64>> = self
            .terminals
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i + 1 == node {
                    Blocks::from_ss(admittance)
                } else {
                    Blocks::from_ss(&t.admittance)
                }
            })
            .collect();
        let refs: Vec<&Blocks<f64>> = app_blocks.iter().collect();
        close_loop(&net_blocks, &block_diag(&refs))
    }

    /// Eigenvalues after replacing the terminal at `node`, canonical order.
    pub fn eigenvalues_with_replacement(
        &self,
        node: usize,
        admittance: &StateSpaceForm,
    ) -> Result<Vec<Complex64>, NetError> {
        self.check_node(node)?;
        let a = self.closed_with_replacement(node, admittance)?.a;
        let mut vals: Vec<Complex64> = a.complex_eigenvalues().iter().cloned().collect();
        crate::lti::canonical_mode_order(&mut vals);
        Ok(vals)
    }

    /// Eigenvalues of the system with the impedance of apparatus `node`
    /// scaled by `factor` (admittance output scaled by `1/factor`).
    pub fn eigenvalues_with_scaled_impedance(
        &self,
        node: usize,
        factor: f64,
    ) -> Result<Vec<Complex64>, NetError> {
        self.check_node(node)?;
        let t = &self.terminals[node - 1].admittance;
        let scaled = StateSpaceForm::new(
            t.a().clone(),
            t.b().clone(),
            t.c() / factor,
            t.d() / factor,
        )?;
        self.eigenvalues_with_replacement(node, &scaled)
    }

    /// Complex closed-loop A with a constant (complex) series impedance
    /// perturbation `dz` added to apparatus `node`.
    pub fn complex_a_with_series_perturbation(
        &self,
        node: usize,
        dz: &DMatrix<Complex64>,
    ) -> Result<DMatrix<Complex64>, NetError> {
        self.check_node(node)?;
        if dz.shape() != (self.block, self.block) {
            return Err(NetError::Description(format!(
                "series perturbation must be {0}x{0}",
                self.block
            )));
        }
        let net_blocks = Blocks::from_ss(&self.net_z).to_complex();
        let app_blocks: Vec<Blocks<Complex64>> = self
            .terminals
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let blk = Blocks::from_ss(&t.admittance).to_complex();
                if i + 1 != node {
                    return Ok(blk);
                }
                // Series element: y = Y (v - dz*y), a static feedback with
                // the complex gain dz.
                let eye = DMatrix::<Complex64>::identity(self.block, self.block);
                let v = (&eye + &blk.d * dz).try_inverse().ok_or_else(|| {
                    NetError::Description("series perturbation makes the terminal ill-posed".into())
                })?;
                let c_new = &v * &blk.c;
                let d_new = &v * &blk.d;
                let a_new = &blk.a - &blk.b * dz * &c_new;
                let b_new = &blk.b - &blk.b * dz * &d_new;
                Ok(Blocks {
                    a: a_new,
                    b: b_new,
                    c: c_new,
                    d: d_new,
                })
            })
            .collect::<Result<_, NetError>>()?;
        let refs: Vec<&Blocks<Complex64>> = app_blocks.iter().collect();
        let closed = close_loop(&net_blocks, &block_diag(&refs))?;
        Ok(closed.a)
    }

    /// Sorted eigenvalues of the complex perturbed loop (see
    /// [`Self::complex_a_with_series_perturbation`]).
    pub fn eigenvalues_with_series_perturbation(
        &self,
        node: usize,
        dz: &DMatrix<Complex64>,
    ) -> Result<Vec<Complex64>, NetError> {
        let a = self.complex_a_with_series_perturbation(node, dz)?;
        let vals = a
            .eigenvalues()
            .ok_or_else(|| NetError::Lti(LtiError::SolveFailed(
                "complex eigenvalue iteration did not converge".into(),
            )))?;
        let mut vals: Vec<Complex64> = vals.iter().cloned().collect();
        crate::lti::canonical_mode_order(&mut vals);
        Ok(vals)
    }

    /// Sweep `Y_kk` over a frequency grid (rad/s), in parallel.
    pub fn sweep_admittance_block(
        &self,
        node: usize,
        omegas: &[f64],
    ) -> Result<SampledSpectrum, NetError> {
        self.check_node(node)?;
        let block_ss = self.admittance_block(node)?;
        let samples: Vec<Result<DMatrix<Complex64>, LtiError>> = omegas
            .par_iter()
            .map(|&w| block_ss.eval_c(Complex64::new(0.0, w)))
            .collect();
        let samples = samples.into_iter().collect::<Result<Vec<_>, _>>()?;
        SampledSpectrum::new(omegas.to_vec(), samples).map_err(NetError::Lti)
    }
}

/// Localized well-posedness check on the loop feedthrough.
fn check_well_posed(
    d_net: &DMatrix<f64>,
    terminals: &[Terminal],
    block: usize,
) -> Result<(), NetError> {
    let ports = d_net.nrows();
    let mut d_app = DMatrix::<f64>::zeros(ports, ports);
    for (i, t) in terminals.iter().enumerate() {
        d_app
            .view_mut((i * block, i * block), (block, block))
            .copy_from(t.admittance.d());
    }
    let loop_matrix = DMatrix::identity(ports, ports) + d_net * &d_app;
    let cond = condition_number(&loop_matrix);
    if cond < LOOP_COND_LIMIT {
        return Ok(());
    }
    // Find a node whose feedthrough removal fixes the loop.
    for (i, _) in terminals.iter().enumerate() {
        let mut trial = d_app.clone();
        trial
            .view_mut((i * block, i * block), (block, block))
            .fill(0.0);
        let m = DMatrix::identity(ports, ports) + d_net * &trial;
        if condition_number(&m) < LOOP_COND_LIMIT {
            return Err(NetError::IllPosed {
                node: i + 1,
                cond,
                limit: LOOP_COND_LIMIT,
            });
        }
    }
    Err(NetError::IllPosed {
        node: 0,
        cond,
        limit: LOOP_COND_LIMIT,
    })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
