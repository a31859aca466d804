//! The bundled apparatus kinds.
//!
//! All models are small explicit ODE systems in the global synchronous dq
//! frame, written in per-unit with time in seconds. Inductive and capacitive
//! parameters (`l`, `l_f`, `l_g`, `c_f`) are quoted as per-unit reactance and
//! susceptance at the base frequency and divided by `omega0` internally, so
//! catalog values stay order-one.
//!
//! Terminal convention: `v` is the terminal voltage, the output current flows
//! *into* the apparatus, and power injected into the grid is `-v . i_out`.
//! See `docs/apparatus.md` for every state equation written out.

use std::collections::BTreeMap;

use nalgebra::{DVector, Matrix2, Vector2};

use super::{ApparatusDynamics, Setpoint};
use crate::error::ApparatusError;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Catalog bounds entry for one parameter. `default` is `None` for required
/// parameters.
#[derive(Debug, Clone, Copy)]
pub struct ParameterBound {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub default: Option<f64>,
}

const RL_BOUNDS: &[ParameterBound] = &[
    ParameterBound {
        name: "r",
        lo: 0.0,
        hi: 1e6,
        default: None,
    },
    // Reactance at base frequency, per unit.
    ParameterBound {
        name: "l",
        lo: 1e-6,
        hi: 1e3,
        default: None,
    },
];

const SWING_BOUNDS: &[ParameterBound] = &[
    ParameterBound {
        name: "h",
        lo: 0.01,
        hi: 100.0,
        default: None,
    },
    ParameterBound {
        name: "d_damp",
        lo: 0.0,
        hi: 1e3,
        default: None,
    },
    ParameterBound {
        name: "xp",
        lo: 1e-4,
        hi: 10.0,
        default: None,
    },
    ParameterBound {
        name: "e_ref",
        lo: 0.1,
        hi: 5.0,
        default: None,
    },
    ParameterBound {
        name: "r_a",
        lo: 0.0,
        hi: 1.0,
        default: Some(0.005),
    },
    ParameterBound {
        name: "k_f",
        lo: 0.0,
        hi: 1e4,
        default: Some(0.0),
    },
    ParameterBound {
        name: "t_avr",
        lo: 1e-3,
        hi: 100.0,
        default: Some(0.5),
    },
];

const GFL_BOUNDS: &[ParameterBound] = &[
    ParameterBound {
        name: "f_i",
        lo: 1.0,
        hi: 5000.0,
        default: None,
    },
    ParameterBound {
        name: "f_pll",
        lo: 0.1,
        hi: 1000.0,
        default: None,
    },
    ParameterBound {
        name: "l_f",
        lo: 1e-9,
        hi: 1e3,
        default: None,
    },
    ParameterBound {
        name: "r_f",
        lo: 1e-6,
        hi: 1e3,
        default: None,
    },
];

const GFM_BOUNDS: &[ParameterBound] = &[
    ParameterBound {
        name: "k_d",
        lo: 1e-4,
        hi: 1.0,
        default: None,
    },
    ParameterBound {
        name: "f_v",
        lo: 1.0,
        hi: 2000.0,
        default: None,
    },
    ParameterBound {
        name: "l_f",
        lo: 1e-9,
        hi: 1e3,
        default: None,
    },
    ParameterBound {
        name: "c_f",
        lo: 1e-9,
        hi: 1e3,
        default: None,
    },
    ParameterBound {
        name: "r_f",
        lo: 1e-6,
        hi: 1e3,
        default: Some(0.008),
    },
    ParameterBound {
        name: "l_g",
        lo: 1e-9,
        hi: 1e3,
        default: None, // resolved to l_f / 2 when absent
    },
    ParameterBound {
        name: "r_g",
        lo: 1e-6,
        hi: 1e3,
        default: Some(0.004),
    },
    ParameterBound {
        name: "r_c",
        lo: 0.0,
        hi: 10.0,
        default: Some(0.05),
    },
    ParameterBound {
        name: "f_lp",
        lo: 0.1,
        hi: 200.0,
        default: Some(10.0),
    },
];

pub fn catalog_kinds() -> &'static [&'static str] {
    &["rl_branch", "swing_sg", "gfl_inverter", "gfm_droop"]
}

pub fn parameter_bounds(kind: &str) -> Result<&'static [ParameterBound], ApparatusError> {
    match kind {
        "rl_branch" => Ok(RL_BOUNDS),
        "swing_sg" => Ok(SWING_BOUNDS),
        "gfl_inverter" => Ok(GFL_BOUNDS),
        "gfm_droop" => Ok(GFM_BOUNDS),
        other => Err(ApparatusError::UnknownKind(other.into())),
    }
}

fn resolve_params(
    kind: &str,
    given: &BTreeMap<String, f64>,
    check_bounds: bool,
) -> Result<BTreeMap<String, f64>, ApparatusError> {
    let bounds = parameter_bounds(kind)?;
    for name in given.keys() {
        if !bounds.iter().any(|b| b.name == name) {
            return Err(ApparatusError::UnknownParameter {
                kind: kind.into(),
                name: name.clone(),
            });
        }
    }
    let mut out = BTreeMap::new();
    for b in bounds {
        let value = match given.get(b.name) {
            Some(&v) => v,
            None => match b.default {
                Some(d) => d,
                None if kind == "gfm_droop" && b.name == "l_g" => {
                    given.get("l_f").copied().map(|l| l / 2.0).ok_or_else(|| {
                        ApparatusError::MissingParameter {
                            kind: kind.into(),
                            name: "l_f".into(),
                        }
                    })?
                }
                None => {
                    return Err(ApparatusError::MissingParameter {
                        kind: kind.into(),
                        name: b.name.into(),
                    })
                }
            },
        };
        if !value.is_finite() {
            return Err(ApparatusError::ParameterOutOfBounds {
                kind: kind.into(),
                name: b.name.into(),
                value,
                lo: b.lo,
                hi: b.hi,
            });
        }
        if check_bounds && !(value >= b.lo && value <= b.hi) {
            return Err(ApparatusError::ParameterOutOfBounds {
                kind: kind.into(),
                name: b.name.into(),
                value,
                lo: b.lo,
                hi: b.hi,
            });
        }
        out.insert(b.name.to_string(), value);
    }
    Ok(out)
}

/// Build dynamics for a catalog kind. `check_bounds` is disabled for internal
/// perturbation rebuilds, which may step slightly outside the catalog range.
pub(crate) fn build(
    kind: &str,
    params: &BTreeMap<String, f64>,
    setpoint: Setpoint,
    omega0: f64,
    check_bounds: bool,
) -> Result<Box<dyn ApparatusDynamics>, ApparatusError> {
    let p = resolve_params(kind, params, check_bounds)?;
    match kind {
        "rl_branch" => Ok(Box::new(RlBranch::new(&p, setpoint, omega0))),
        "swing_sg" => Ok(Box::new(SwingSg::new(&p, setpoint, omega0))),
        "gfl_inverter" => Ok(Box::new(GflInverter::new(&p, setpoint, omega0))),
        "gfm_droop" => Ok(Box::new(GfmDroop::new(&p, setpoint, omega0))),
        other => Err(ApparatusError::UnknownKind(other.into())),
    }
}

fn rebuild_with(
    model: &dyn ApparatusDynamics,
    setpoint: Setpoint,
    omega0: f64,
    name: &str,
    value: f64,
) -> Result<Box<dyn ApparatusDynamics>, ApparatusError> {
    let mut params = BTreeMap::new();
    for pname in model.parameter_names() {
        params.insert(pname.to_string(), model.parameter(pname).unwrap());
    }
    if !params.contains_key(name) {
        return Err(ApparatusError::UnknownParameter {
            kind: model.kind().into(),
            name: name.into(),
        });
    }
    params.insert(name.to_string(), value);
    build(model.kind(), &params, setpoint, omega0, false)
}

/// Multiplication by `j` in dq coordinates.
fn jrot(x: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-x[1], x[0])
}

/// Rotation by `theta`: local-frame vector to global.
fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn v2(x: &DVector<f64>, at: usize) -> Vector2<f64> {
    Vector2::new(x[at], x[at + 1])
}

// ---------------------------------------------------------------------------
// rl_branch: static series RL load.
// ---------------------------------------------------------------------------

struct RlBranch {
    r: f64,
    l: f64,
    /// Inductance in per-unit seconds: `l / omega0`.
    lh: f64,
    omega0: f64,
    setpoint: Setpoint,
}

impl RlBranch {
    fn new(p: &BTreeMap<String, f64>, setpoint: Setpoint, omega0: f64) -> Self {
        Self {
            r: p["r"],
            l: p["l"],
            lh: p["l"] / omega0,
            omega0,
            setpoint,
        }
    }
}

impl ApparatusDynamics for RlBranch {
    fn kind(&self) -> &'static str {
        "rl_branch"
    }

    fn state_count(&self) -> usize {
        2
    }

    fn state_names(&self) -> Vec<String> {
        vec!["i_d".into(), "i_q".into()]
    }

    fn parameter_names(&self) -> Vec<&'static str> {
        vec!["r", "l"]
    }

    fn parameter(&self, name: &str) -> Option<f64> {
        match name {
            "r" => Some(self.r),
            "l" => Some(self.l),
            _ => None,
        }
    }

    fn derivatives(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let i = v2(x, 0);
        let vt = v2(v, 0);
        let di = (vt - i.scale(self.r)) / self.lh - jrot(i).scale(self.omega0);
        DVector::from_vec(vec![di[0], di[1]])
    }

    fn output_current(&self, x: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0], x[1]])
    }

    fn initial_guess(&self, v: &DVector<f64>) -> Result<DVector<f64>, ApparatusError> {
        // i0 = Zdq(0)^{-1} v0 with Zdq(0) = [[r, -x], [x, r]].
        let z = Matrix2::new(self.r, -self.l, self.l, self.r);
        let i = z.try_inverse().ok_or(ApparatusError::InfeasibleSetpoint {
            kind: "rl_branch".into(),
            reason: "steady-state impedance is singular".into(),
        })? * v2(v, 0);
        Ok(DVector::from_vec(vec![i[0], i[1]]))
    }

    fn with_parameter(
        &self,
        name: &str,
        value: f64,
    ) -> Result<Box<dyn ApparatusDynamics>, ApparatusError> {
        rebuild_with(self, self.setpoint, self.omega0, name, value)
    }
}

// ---------------------------------------------------------------------------
// swing_sg: classic swing machine behind a transient reactance, optional
// first-order voltage regulator.
// ---------------------------------------------------------------------------

struct SwingSg {
    h: f64,
    d_damp: f64,
    xp: f64,
    e_ref: f64,
    r_a: f64,
    k_f: f64,
    t_avr: f64,
    omega0: f64,
    setpoint: Setpoint,
    p_m: f64,
    v_ref: f64,
}

impl SwingSg {
    fn new(p: &BTreeMap<String, f64>, setpoint: Setpoint, omega0: f64) -> Self {
        Self {
            h: p["h"],
            d_damp: p["d_damp"],
            xp: p["xp"],
            e_ref: p["e_ref"],
            r_a: p["r_a"],
            k_f: p["k_f"],
            t_avr: p["t_avr"],
            omega0,
            setpoint,
            p_m: setpoint.p,
            v_ref: setpoint.v,
        }
    }

    fn has_avr(&self) -> bool {
        self.k_f > 0.0
    }

    /// EMF magnitude: the AVR state when present, else the fixed setting.
    fn emf(&self, x: &DVector<f64>) -> f64 {
        if self.has_avr() {
            x[2]
        } else {
            self.e_ref
        }
    }

    fn stator_current_out(&self, x: &DVector<f64>, v: &DVector<f64>) -> Vector2<f64> {
        let delta = x[0];
        let e = self.emf(x) * Vector2::new(delta.cos(), delta.sin());
        // i_out = (e - v) / (r_a + j xp), current injected into the grid.
        let den = self.r_a * self.r_a + self.xp * self.xp;
        let diff = e - v2(v, 0);
        (diff.scale(self.r_a) - jrot(diff).scale(self.xp)) / den
    }
}

impl ApparatusDynamics for SwingSg {
    fn kind(&self) -> &'static str {
        "swing_sg"
    }

    fn state_count(&self) -> usize {
        if self.has_avr() {
            3
        } else {
            2
        }
    }

    fn state_names(&self) -> Vec<String> {
        let mut names = vec!["delta".into(), "omega".into()];
        if self.has_avr() {
            names.push("e_p".into());
        }
        names
    }

    fn parameter_names(&self) -> Vec<&'static str> {
        vec!["h", "d_damp", "xp", "e_ref", "r_a", "k_f", "t_avr"]
    }

    fn parameter(&self, name: &str) -> Option<f64> {
        match name {
            "h" => Some(self.h),
            "d_damp" => Some(self.d_damp),
            "xp" => Some(self.xp),
            "e_ref" => Some(self.e_ref),
            "r_a" => Some(self.r_a),
            "k_f" => Some(self.k_f),
            "t_avr" => Some(self.t_avr),
            _ => None,
        }
    }

    fn derivatives(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let delta = x[0];
        let omega = x[1];
        let e_mag = self.emf(x);
        let e = e_mag * Vector2::new(delta.cos(), delta.sin());
        let i_out = self.stator_current_out(x, v);
        let p_e = e.dot(&i_out);
        let ddelta = self.omega0 * (omega - 1.0);
        let domega = (self.p_m - p_e - self.d_damp * (omega - 1.0)) / (2.0 * self.h);
        if self.has_avr() {
            let vmag = v2(v, 0).norm();
            let de = (self.k_f * (self.v_ref - vmag) + self.e_ref - e_mag) / self.t_avr;
            DVector::from_vec(vec![ddelta, domega, de])
        } else {
            DVector::from_vec(vec![ddelta, domega])
        }
    }

    fn output_current(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let i = -self.stator_current_out(x, v);
        DVector::from_vec(vec![i[0], i[1]])
    }

    fn initial_guess(&self, v: &DVector<f64>) -> Result<DVector<f64>, ApparatusError> {
        let vt = v2(v, 0);
        let vmag = vt.norm();
        let sin_arg = self.p_m * self.xp / (self.e_ref * vmag);
        if sin_arg.abs() > 1.0 {
            return Err(ApparatusError::InfeasibleSetpoint {
                kind: "swing_sg".into(),
                reason: format!(
                    "|P X' / (E' V)| = {:.3} exceeds 1: no rotor angle delivers P = {}",
                    sin_arg.abs(),
                    self.p_m
                ),
            });
        }
        let delta0 = vt[1].atan2(vt[0]) + sin_arg.asin();
        let mut x = vec![delta0, 1.0];
        if self.has_avr() {
            x.push(self.e_ref);
        }
        Ok(DVector::from_vec(x))
    }

    fn with_parameter(
        &self,
        name: &str,
        value: f64,
    ) -> Result<Box<dyn ApparatusDynamics>, ApparatusError> {
        rebuild_with(self, self.setpoint, self.omega0, name, value)
    }
}

// ---------------------------------------------------------------------------
// gfl_inverter: L-filter, PI current control in the PLL frame, 2nd-order PLL.
// ---------------------------------------------------------------------------

struct GflInverter {
    f_i: f64,
    f_pll: f64,
    l_f: f64,
    /// Filter inductance in per-unit seconds: `l_f / omega0`.
    lh_f: f64,
    r_f: f64,
    omega0: f64,
    setpoint: Setpoint,
    k_pi: f64,
    k_ii: f64,
    k_pp: f64,
    k_ip: f64,
    i_ref: Vector2<f64>,
    v_nom: f64,
}

impl GflInverter {
    fn new(p: &BTreeMap<String, f64>, setpoint: Setpoint, omega0: f64) -> Self {
        let f_i = p["f_i"];
        let f_pll = p["f_pll"];
        let l_f = p["l_f"];
        let lh_f = l_f / omega0;
        let r_f = p["r_f"];
        let w_i = TWO_PI * f_i;
        let w_pll = TWO_PI * f_pll;
        let zeta = std::f64::consts::FRAC_1_SQRT_2;
        let v_nom = setpoint.v;
        Self {
            f_i,
            f_pll,
            l_f,
            lh_f,
            r_f,
            omega0,
            setpoint,
            k_pi: w_i * lh_f,
            // Complex closed-loop current poles: keeps the d and q loop modes
            // off the real axis so the whole-system spectrum stays simple.
            k_ii: 0.35 * w_i * w_i * lh_f,
            k_pp: 2.0 * zeta * w_pll,
            k_ip: w_pll * w_pll,
            i_ref: Vector2::new(setpoint.p / v_nom, -setpoint.q / v_nom),
            v_nom,
        }
    }
}

impl ApparatusDynamics for GflInverter {
    fn kind(&self) -> &'static str {
        "gfl_inverter"
    }

    fn state_count(&self) -> usize {
        6
    }

    fn state_names(&self) -> Vec<String> {
        ["i_d", "i_q", "gamma_d", "gamma_q", "theta_pll", "x_pll"]
            .map(String::from)
            .to_vec()
    }

    fn parameter_names(&self) -> Vec<&'static str> {
        vec!["f_i", "f_pll", "l_f", "r_f"]
    }

    fn parameter(&self, name: &str) -> Option<f64> {
        match name {
            "f_i" => Some(self.f_i),
            "f_pll" => Some(self.f_pll),
            "l_f" => Some(self.l_f),
            "r_f" => Some(self.r_f),
            _ => None,
        }
    }

    fn derivatives(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let i = v2(x, 0);
        let gamma = v2(x, 2);
        let theta = x[4];
        let xp = x[5];
        let vt = v2(v, 0);

        let to_pll = rot(-theta);
        let i_c = to_pll * i;
        let v_c = to_pll * vt;

        let err = self.i_ref - i_c;
        let dgamma = err.scale(self.k_ii);
        // Bridge voltage command: PI + cross decoupling, no voltage
        // feedforward (the grid voltage enters the plant directly).
        let v_i_c = jrot(i_c).scale(self.l_f) + err.scale(self.k_pi) + gamma;
        let v_i = rot(theta) * v_i_c;

        let di = (v_i - vt - i.scale(self.r_f)) / self.lh_f - jrot(i).scale(self.omega0);

        let e_pll = v_c[1] / self.v_nom;
        let dtheta = self.k_pp * e_pll + xp;
        let dxp = self.k_ip * e_pll;

        DVector::from_vec(vec![di[0], di[1], dgamma[0], dgamma[1], dtheta, dxp])
    }

    fn output_current(&self, x: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-x[0], -x[1]])
    }

    fn initial_guess(&self, v: &DVector<f64>) -> Result<DVector<f64>, ApparatusError> {
        let vt = v2(v, 0);
        let theta = vt[1].atan2(vt[0]);
        let i0 = rot(theta) * self.i_ref;
        let v_c = rot(-theta) * vt;
        let gamma0 = v_c + self.i_ref.scale(self.r_f);
        Ok(DVector::from_vec(vec![
            i0[0], i0[1], gamma0[0], gamma0[1], theta, 0.0,
        ]))
    }

    fn with_parameter(
        &self,
        name: &str,
        value: f64,
    ) -> Result<Box<dyn ApparatusDynamics>, ApparatusError> {
        rebuild_with(self, self.setpoint, self.omega0, name, value)
    }
}

// ---------------------------------------------------------------------------
// gfm_droop: droop-controlled voltage source behind an LCL filter with a
// single-loop voltage PI.
// ---------------------------------------------------------------------------

struct GfmDroop {
    k_d: f64,
    f_v: f64,
    l_f: f64,
    c_f: f64,
    r_f: f64,
    l_g: f64,
    r_g: f64,
    r_c: f64,
    f_lp: f64,
    /// Element values in per-unit seconds/farads: reactance and susceptance
    /// divided by omega0.
    lh_f: f64,
    ch_f: f64,
    lh_g: f64,
    omega0: f64,
    setpoint: Setpoint,
    k_pv: f64,
    k_iv: f64,
    w_lp: f64,
    v_set: f64,
    p_set: f64,
}

impl GfmDroop {
    fn new(p: &BTreeMap<String, f64>, setpoint: Setpoint, omega0: f64) -> Self {
        let f_v = p["f_v"];
        let w_v = TWO_PI * f_v;
        Self {
            k_d: p["k_d"],
            f_v,
            l_f: p["l_f"],
            c_f: p["c_f"],
            r_f: p["r_f"],
            l_g: p["l_g"],
            r_g: p["r_g"],
            r_c: p["r_c"],
            f_lp: p["f_lp"],
            lh_f: p["l_f"] / omega0,
            ch_f: p["c_f"] / omega0,
            lh_g: p["l_g"] / omega0,
            omega0,
            setpoint,
            k_pv: 0.7,
            k_iv: 0.7 * w_v,
            w_lp: TWO_PI * p["f_lp"],
            v_set: setpoint.v,
            p_set: setpoint.p,
        }
    }
}

impl ApparatusDynamics for GfmDroop {
    fn kind(&self) -> &'static str {
        "gfm_droop"
    }

    fn state_count(&self) -> usize {
        10
    }

    fn state_names(&self) -> Vec<String> {
        [
            "i_f_d", "i_f_q", "v_c_d", "v_c_q", "i_g_d", "i_g_q", "gv_d", "gv_q", "theta", "p_f",
        ]
        .map(String::from)
        .to_vec()
    }

    fn parameter_names(&self) -> Vec<&'static str> {
        vec![
            "k_d", "f_v", "l_f", "c_f", "r_f", "l_g", "r_g", "r_c", "f_lp",
        ]
    }

    fn parameter(&self, name: &str) -> Option<f64> {
        match name {
            "k_d" => Some(self.k_d),
            "f_v" => Some(self.f_v),
            "l_f" => Some(self.l_f),
            "c_f" => Some(self.c_f),
            "r_f" => Some(self.r_f),
            "l_g" => Some(self.l_g),
            "r_g" => Some(self.r_g),
            "r_c" => Some(self.r_c),
            "f_lp" => Some(self.f_lp),
            _ => None,
        }
    }

    fn derivatives(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let i_f = v2(x, 0);
        let v_c = v2(x, 2);
        let i_g = v2(x, 4);
        let g_v = v2(x, 6);
        let theta = x[8];
        let p_f = x[9];
        let vt = v2(v, 0);

        let v_m = v_c + (i_f - i_g).scale(self.r_c);
        let v_ref_c = Vector2::new(self.v_set, 0.0);
        let v_c_c = rot(-theta) * v_c;
        let err = v_ref_c - v_c_c;
        let dg_v = err.scale(self.k_iv);
        let v_i_c = v_c_c + err.scale(self.k_pv) + g_v;
        let v_i = rot(theta) * v_i_c;

        let di_f = (v_i - v_m - i_f.scale(self.r_f)) / self.lh_f - jrot(i_f).scale(self.omega0);
        let dv_c = (i_f - i_g) / self.ch_f - jrot(v_c).scale(self.omega0);
        let di_g = (v_m - vt - i_g.scale(self.r_g)) / self.lh_g - jrot(i_g).scale(self.omega0);

        let p_inst = vt.dot(&i_g);
        let dtheta = self.omega0 * self.k_d * (self.p_set - p_f);
        let dp_f = self.w_lp * (p_inst - p_f);

        DVector::from_vec(vec![
            di_f[0], di_f[1], dv_c[0], dv_c[1], di_g[0], di_g[1], dg_v[0], dg_v[1], dtheta, dp_f,
        ])
    }

    fn output_current(&self, x: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-x[4], -x[5]])
    }

    fn initial_guess(&self, v: &DVector<f64>) -> Result<DVector<f64>, ApparatusError> {
        use num_complex::Complex64;
        let j = Complex64::new(0.0, 1.0);
        let vt = Complex64::new(v[0], v[1]);
        let zg = Complex64::new(self.r_g, self.l_g);
        let cap_rot = 1.0 + j * (self.c_f * self.r_c);

        // Scalar pre-solve for the droop angle so that delivered power equals
        // the setpoint.
        let p_of = |theta: f64| -> (f64, Complex64, Complex64, Complex64) {
            let v_c = Complex64::from_polar(self.v_set, theta);
            let v_m = v_c * cap_rot;
            let i_g = (v_m - vt) / zg;
            let p = (vt * i_g.conj()).re;
            (p, v_c, v_m, i_g)
        };
        let mut theta = vt.arg()
            + (self.p_set * self.l_g / (self.v_set * vt.norm()))
                .clamp(-1.0, 1.0)
                .asin();
        for _ in 0..30 {
            let (p, _, _, _) = p_of(theta);
            let h = 1e-7;
            let (p1, _, _, _) = p_of(theta + h);
            let slope = (p1 - p) / h;
            if slope.abs() < 1e-12 {
                break;
            }
            let step = (p - self.p_set) / slope;
            theta -= step;
            if step.abs() < 1e-13 {
                break;
            }
        }
        let (_, v_c, v_m, i_g) = p_of(theta);
        let i_f = i_g + j * self.c_f * v_c;
        let v_i = v_m + Complex64::new(self.r_f, self.l_f) * i_f;
        let v_i_c = v_i * Complex64::from_polar(1.0, -theta);
        let g_v = Vector2::new(v_i_c.re - self.v_set, v_i_c.im);

        Ok(DVector::from_vec(vec![
            i_f.re, i_f.im, v_c.re, v_c.im, i_g.re, i_g.im, g_v[0], g_v[1], theta, self.p_set,
        ]))
    }

    fn with_parameter(
        &self,
        name: &str,
        value: f64,
    ) -> Result<Box<dyn ApparatusDynamics>, ApparatusError> {
        rebuild_with(self, self.setpoint, self.omega0, name, value)
    }
}
