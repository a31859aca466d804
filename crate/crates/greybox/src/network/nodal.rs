//! The two faces of the network: the nodal admittance `Y_net` (voltage in,
//! current out) and its impedance realization `Z_net` (current in, voltage
//! out) used to close the whole-system loop.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{embed_complex, NetworkDescription};
use crate::error::{LtiError, NetError};
use crate::lti::{ComplexFrequency, StateSpaceForm};

/// Nodal admittance `Y_net` with its improper (capacitive) part split off:
/// `Y_net(s) = proper(s) + s * capacitive`.
///
/// Shunt capacitance contributes `s C` per node, which no proper state-space
/// form can carry; everything else lives in `proper`.
#[derive(Debug, Clone)]
pub struct NodalAdmittance {
    proper: StateSpaceForm,
    capacitive: DMatrix<f64>,
}

impl NodalAdmittance {
    pub fn proper(&self) -> &StateSpaceForm {
        &self.proper
    }

    /// Coefficient of `s` (real, diagonal blocks from shunt capacitance).
    pub fn capacitive(&self) -> &DMatrix<f64> {
        &self.capacitive
    }

    pub fn channels(&self) -> usize {
        self.capacitive.nrows()
    }

    pub fn eval(&self, s: ComplexFrequency) -> Result<DMatrix<Complex64>, LtiError> {
        self.eval_c(s.value())
    }

    pub(crate) fn eval_c(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        Ok(self.proper.eval_c(s)? + self.capacitive.map(|x| s * x))
    }
}

struct Elements {
    k: usize,
    omega0: f64,
    /// Conductance matrix from shunt resistors and zero-inductance branches.
    g: DMatrix<f64>,
    /// Inductive branches (from, to, r, l), 0-based nodes.
    lbranches: Vec<(usize, usize, f64, f64)>,
    /// Shunt inductors (node, l), 0-based.
    lshunts: Vec<(usize, f64)>,
    /// Total shunt capacitance per node, 0-based.
    cap: Vec<f64>,
}

fn collect(net: &NetworkDescription) -> Elements {
    let k = net.node_count();
    let mut g = DMatrix::zeros(k, k);
    let gnode = net.node_conductance();
    for (node, gn) in gnode.iter().enumerate().skip(1) {
        g[(node - 1, node - 1)] += gn;
    }
    let mut lbranches = Vec::new();
    for b in net.branches() {
        let (f, t) = (b.from - 1, b.to - 1);
        if b.l > 0.0 {
            lbranches.push((f, t, b.r, b.l));
        } else {
            let gb = 1.0 / b.r;
            g[(f, f)] += gb;
            g[(t, t)] += gb;
            g[(f, t)] -= gb;
            g[(t, f)] -= gb;
        }
    }
    let mut lshunts = Vec::new();
    for s in net.shunts() {
        if let Some(l) = s.l {
            lshunts.push((s.node - 1, l));
        }
    }
    let capv = net.node_capacitance();
    let cap = (1..=k).map(|n| capv[n]).collect();
    Elements {
        k,
        omega0: net.omega0(),
        g,
        lbranches,
        lshunts,
        cap,
    }
}

/// Assemble `Y_net` by standard nodal stamping: every element's dq block adds
/// to the diagonal blocks of its end nodes and subtracts from the off-diagonal
/// blocks.
pub fn build_nodal_admittance(net: &NetworkDescription) -> Result<NodalAdmittance, NetError> {
    let el = collect(net);
    let (k, w0) = (el.k, el.omega0);
    let nb = el.lbranches.len();
    let ns = el.lshunts.len();
    let n = nb + ns;
    let j = Complex64::new(0.0, 1.0);

    let mut a = DMatrix::<Complex64>::zeros(n, n);
    let mut b = DMatrix::<Complex64>::zeros(n, k);
    let mut c = DMatrix::<Complex64>::zeros(k, n);
    let mut d = el.g.map(|x| Complex64::new(x, 0.0));

    for (bi, &(f, t, r, l)) in el.lbranches.iter().enumerate() {
        a[(bi, bi)] = Complex64::new(-r / l, -w0);
        b[(bi, f)] = Complex64::new(1.0 / l, 0.0);
        b[(bi, t)] = Complex64::new(-1.0 / l, 0.0);
        c[(f, bi)] = Complex64::new(1.0, 0.0);
        c[(t, bi)] = Complex64::new(-1.0, 0.0);
    }
    for (si, &(node, l)) in el.lshunts.iter().enumerate() {
        let row = nb + si;
        a[(row, row)] = -j * w0;
        b[(row, node)] = Complex64::new(1.0 / l, 0.0);
        c[(node, row)] = Complex64::new(1.0, 0.0);
    }
    let mut cap = DMatrix::<f64>::zeros(k, k);
    for (node, &cv) in el.cap.iter().enumerate() {
        cap[(node, node)] = cv;
        d[(node, node)] += j * (w0 * cv);
    }

    let proper = StateSpaceForm::new(
        embed_complex(&a),
        embed_complex(&b),
        embed_complex(&c),
        embed_complex(&d),
    )?;
    Ok(NodalAdmittance {
        proper,
        capacitive: embed_complex(&cap.map(|x| Complex64::new(x, 0.0))),
    })
}

/// Impedance-face realization of the network: inputs are currents injected
/// into the nodes, outputs are node voltages.
///
/// Capacitor voltages and inductor currents are the states. Nodes without
/// capacitance are algebraic and eliminated through the conductance Schur
/// complement; a node with neither capacitance nor a resistive path has no
/// defined voltage and is rejected.
pub fn build_network_impedance(net: &NetworkDescription) -> Result<StateSpaceForm, NetError> {
    let el = collect(net);
    let (k, w0) = (el.k, el.omega0);
    let j = Complex64::new(0.0, 1.0);

    let cap_nodes: Vec<usize> = (0..k).filter(|&n| el.cap[n] > 0.0).collect();
    let alg_nodes: Vec<usize> = (0..k).filter(|&n| el.cap[n] == 0.0).collect();
    let (nc, na) = (cap_nodes.len(), alg_nodes.len());
    let nb = el.lbranches.len();
    let ns = el.lshunts.len();
    let n = nc + nb + ns;

    // Incidence of inductive branches: +1 leaving `from`, -1 entering `to`.
    let mut inc = DMatrix::<f64>::zeros(k, nb);
    for (bi, &(f, t, _, _)) in el.lbranches.iter().enumerate() {
        inc[(f, bi)] = 1.0;
        inc[(t, bi)] = -1.0;
    }
    let mut sh = DMatrix::<f64>::zeros(k, ns);
    for (si, &(node, _)) in el.lshunts.iter().enumerate() {
        sh[(node, si)] = 1.0;
    }

    // u_alg from the algebraic KCL rows: G_xx u_x = I_x - Sh_x j - Inc_x f - G_xc u_c.
    let g_xx = DMatrix::from_fn(na, na, |i, jx| el.g[(alg_nodes[i], alg_nodes[jx])]);
    let g_xc = DMatrix::from_fn(na, nc, |i, jc| el.g[(alg_nodes[i], cap_nodes[jc])]);
    let m_inv = if na > 0 {
        match g_xx.clone().try_inverse() {
            Some(m) => m,
            None => {
                // Point at a concrete node: one whose conductance row is
                // numerically empty, else the first algebraic node.
                let bad = alg_nodes
                    .iter()
                    .position(|&nx| el.g.row(nx).amax() < 1e-300)
                    .unwrap_or(0);
                return Err(NetError::SingularAlgebraicNode {
                    node: alg_nodes[bad] + 1,
                });
            }
        }
    } else {
        DMatrix::zeros(0, 0)
    };

    // u_full = ux_mat * x + ui_mat * I, complex K x (n | k).
    let sel = |rows: &[usize], cols: usize, f: &dyn Fn(usize, usize) -> f64| {
        DMatrix::from_fn(rows.len(), cols, |i, jx| f(rows[i], jx))
    };
    let inc_a = sel(&alg_nodes, nb, &|r, cix| inc[(r, cix)]);
    let sh_a = sel(&alg_nodes, ns, &|r, cix| sh[(r, cix)]);

    let mut ux = DMatrix::<f64>::zeros(k, n);
    let mut ui = DMatrix::<f64>::zeros(k, k);
    for (ci, &node) in cap_nodes.iter().enumerate() {
        ux[(node, ci)] = 1.0;
    }
    if na > 0 {
        let mgxc = -&m_inv * &g_xc; // na x nc
        let minc = -&m_inv * &inc_a; // na x nb
        let msh = -&m_inv * &sh_a; // na x ns
        for (ai, &node) in alg_nodes.iter().enumerate() {
            for ci in 0..nc {
                ux[(node, ci)] = mgxc[(ai, ci)];
            }
            for bi in 0..nb {
                ux[(node, nc + bi)] = minc[(ai, bi)];
            }
            for si in 0..ns {
                ux[(node, nc + nb + si)] = msh[(ai, si)];
            }
            for (aj, &src) in alg_nodes.iter().enumerate() {
                ui[(node, src)] = m_inv[(ai, aj)];
            }
        }
    }
    let ux_c = ux.map(|x| Complex64::new(x, 0.0));
    let ui_c = ui.map(|x| Complex64::new(x, 0.0));

    let mut a = DMatrix::<Complex64>::zeros(n, n);
    let mut b = DMatrix::<Complex64>::zeros(n, k);

    // Capacitor node rows: C u' = I - j w0 C u - [G u]_node - Sh j - Inc f.
    for (ci, &node) in cap_nodes.iter().enumerate() {
        let cval = el.cap[node];
        a[(ci, ci)] -= j * w0;
        for col in 0..n {
            let mut acc = Complex64::default();
            for nn in 0..k {
                acc += el.g[(node, nn)] * ux_c[(nn, col)];
            }
            a[(ci, col)] -= acc / cval;
        }
        for src in 0..k {
            let mut acc = if src == node {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            };
            let mut gu = Complex64::default();
            for nn in 0..k {
                gu += el.g[(node, nn)] * ui_c[(nn, src)];
            }
            acc -= gu;
            b[(ci, src)] = acc / cval;
        }
        for (bi, &(f, t, _, _)) in el.lbranches.iter().enumerate() {
            let w = if f == node {
                1.0
            } else if t == node {
                -1.0
            } else {
                0.0
            };
            if w != 0.0 {
                a[(ci, nc + bi)] -= Complex64::new(w / cval, 0.0);
            }
        }
        for (si, &(snode, _)) in el.lshunts.iter().enumerate() {
            if snode == node {
                a[(ci, nc + nb + si)] -= Complex64::new(1.0 / cval, 0.0);
            }
        }
    }

    // Branch rows: l f' = (u_from - u_to) - (r + j w0 l) f.
    for (bi, &(f, t, r, l)) in el.lbranches.iter().enumerate() {
        let row = nc + bi;
        for col in 0..n {
            a[(row, col)] += (ux_c[(f, col)] - ux_c[(t, col)]) / l;
        }
        for src in 0..k {
            b[(row, src)] += (ui_c[(f, src)] - ui_c[(t, src)]) / l;
        }
        a[(row, row)] -= Complex64::new(r / l, w0);
    }

    // Shunt inductor rows: l j' = u_node - j w0 l j.
    for (si, &(node, l)) in el.lshunts.iter().enumerate() {
        let row = nc + nb + si;
        for col in 0..n {
            a[(row, col)] += ux_c[(node, col)] / l;
        }
        for src in 0..k {
            b[(row, src)] += ui_c[(node, src)] / l;
        }
        a[(row, row)] -= j * w0;
    }

    Ok(StateSpaceForm::new(
        embed_complex(&a),
        embed_complex(&b),
        embed_complex(&ux_c),
        embed_complex(&ui_c),
    )?)
}
