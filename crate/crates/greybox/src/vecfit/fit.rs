//! The fitting engine.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::FitError;
use crate::lti::{canonical_mode_order, PoleResidueForm, SampledSpectrum};

/// Sample weighting for the least-squares stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Uniform,
    /// Weight each frequency row by the inverse Frobenius norm of the sample.
    InverseMagnitude,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Number of poles.
    pub order: usize,
    /// Pole-relocation passes.
    pub iterations: usize,
    /// Starting poles; log-spaced imaginary-dominant conjugate pairs over the
    /// sample band when absent.
    pub initial_poles: Option<Vec<Complex64>>,
    /// Reflect unstable relocated poles into the left half-plane. Off by
    /// default: unstable system poles are exactly what the analysis hunts.
    pub enforce_stability: bool,
    pub weighting: Weighting,
}

impl FitConfig {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            iterations: 10,
            initial_poles: None,
            enforce_stability: false,
            weighting: Weighting::Uniform,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: PoleResidueForm,
    /// Relative rms error over all samples and elements.
    pub rms_rel: f64,
    /// Pole set after each relocation pass.
    pub pole_history: Vec<Vec<Complex64>>,
    /// Whether pole relocation settled before the iteration cap.
    pub converged: bool,
    pub warning: Option<String>,
}

/// Basis bookkeeping: real poles contribute one column, conjugate pairs two
/// (symmetric and antisymmetric combinations with real coefficients).
#[derive(Debug, Clone)]
enum BasisPole {
    Real(f64),
    /// Upper-half-plane member of a conjugate pair.
    Pair(Complex64),
}

impl BasisPole {
    fn columns(&self) -> usize {
        match self {
            BasisPole::Real(_) => 1,
            BasisPole::Pair(_) => 2,
        }
    }
}

fn basis_from_poles(poles: &[Complex64]) -> Vec<BasisPole> {
    let mut out = Vec::new();
    for p in poles {
        if p.im > 0.0 {
            out.push(BasisPole::Pair(*p));
        } else if p.im == 0.0 {
            out.push(BasisPole::Real(p.re));
        }
        // negative-imaginary members are the implicit mirror halves
    }
    out
}

fn poles_of_basis(basis: &[BasisPole]) -> Vec<Complex64> {
    let mut out = Vec::new();
    for b in basis {
        match b {
            BasisPole::Real(a) => out.push(Complex64::new(*a, 0.0)),
            BasisPole::Pair(a) => {
                out.push(*a);
                out.push(a.conj());
            }
        }
    }
    canonical_mode_order(&mut out);
    out
}

fn initial_basis(order: usize, w_lo: f64, w_hi: f64) -> Vec<BasisPole> {
    let mut basis = Vec::new();
    let pairs = order / 2;
    for k in 0..pairs {
        let t = if pairs == 1 {
            0.5
        } else {
            k as f64 / (pairs - 1) as f64
        };
        let beta = w_lo * (w_hi / w_lo).powf(t);
        basis.push(BasisPole::Pair(Complex64::new(-beta / 100.0, beta)));
    }
    if order % 2 == 1 {
        basis.push(BasisPole::Real(-(w_lo * w_hi).sqrt()));
    }
    basis
}

/// Value of every basis column at one frequency point.
fn basis_row(basis: &[BasisPole], s: Complex64, out: &mut Vec<Complex64>) {
    // Reuses the caller's buffer across sample points.
    out.clear();
    for b in basis {
        match b {
            BasisPole::Real(a) => out.push((s - Complex64::new(*a, 0.0)).inv()),
            BasisPole::Pair(a) => {
                let r1 = (s - a).inv();
                let r2 = (s - a.conj()).inv();
                out.push(r1 + r2);
                out.push(Complex64::new(0.0, 1.0) * (r1 - r2));
            }
        }
    }
}

fn weights(spectrum: &SampledSpectrum, weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Uniform => vec![1.0; spectrum.len()],
        Weighting::InverseMagnitude => {
            let norms: Vec<f64> = spectrum
                .samples()
                .iter()
                .map(|m| m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
                .collect();
            let floor = 1e-12 * norms.iter().cloned().fold(0.0, f64::max).max(1e-300);
            norms.iter().map(|n| 1.0 / n.max(floor)).collect()
        }
    }
}

/// Solve an overdetermined real least-squares system with column
/// equilibration; returns the solution and the R-diagonal ratio (rank
/// indicator).
fn solve_ls(
    mut a: DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64), FitError> {
    let cols = a.ncols();
    let mut scale = vec![1.0f64; cols];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = a.column(j).norm();
        if norm > 0.0 {
            *s = 1.0 / norm;
            a.column_mut(j).scale_mut(*s);
        }
    }
    let qr = a.qr();
    let r = qr.r();
    let mut diag_min = f64::INFINITY;
    let mut diag_max = 0.0f64;
    for j in 0..cols {
        let d = r[(j, j)].abs();
        diag_min = diag_min.min(d);
        diag_max = diag_max.max(d);
    }
    let ratio = if diag_max > 0.0 { diag_min / diag_max } else { 0.0 };
    if ratio < 1e-12 {
        return Err(FitError::RankDeficient { ratio });
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, cols).into_owned();
    let x = r
        .view((0, 0), (cols, cols))
        .into_owned()
        .solve_upper_triangular(&rhs)
        .ok_or(FitError::RankDeficient { ratio })?;
    let mut x = x;
    for (j, s) in scale.iter().enumerate() {
        x.row_mut(j).scale_mut(*s);
    }
    Ok((x, ratio))
}

/// One pole-relocation pass. Returns the new basis and the sigma scaling
/// coefficients used (for diagnostics).
fn relocate_poles(
    spectrum: &SampledSpectrum,
    basis: &[BasisPole],
    w: &[f64],
    relaxed: bool,
) -> Result<Vec<BasisPole>, FitError> {
    let m = spectrum.len();
    let n: usize = basis.iter().map(|b| b.columns()).sum();
    let (rows_el, cols_el) = (spectrum.shape().0, spectrum.shape().1);
    let elements = rows_el * cols_el;

    // Columns: numerator [phi | 1 | s] (n + 2), sigma [phi | 1] (n + 1,
    // the trailing column is the relaxation constant d~).
    let num_cols = n + 2;
    let sig_cols = if relaxed { n + 1 } else { n };

    // Compressed per-element equations: QR each element block and keep the
    // rows that couple only to the sigma unknowns.
    let mut stacked = DMatrix::<f64>::zeros(elements * sig_cols + 1, sig_cols);
    let mut rhs = DMatrix::<f64>::zeros(elements * sig_cols + 1, 1);
    let mut phi = Vec::with_capacity(n);

    // Pre-evaluate the basis at all points.
    let mut phi_all: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    for i in 0..m {
        let s = Complex64::new(0.0, spectrum.omegas()[i]);
        basis_row(basis, s, &mut phi);
        phi_all.push(phi.clone());
    }

    let data_scale: f64 = {
        let mut acc = 0.0;
        for (i, sample) in spectrum.samples().iter().enumerate() {
            acc += sample.iter().map(|z| (w[i] * z.norm()).powi(2)).sum::<f64>();
        }
        acc.sqrt().max(1e-300)
    };

    for (el, (er, ec)) in (0..elements)
        .map(|e| (e, (e / cols_el, e % cols_el)))
    {
        let mut block = DMatrix::<f64>::zeros(2 * m, num_cols + sig_cols);
        let mut rhs_block = DMatrix::<f64>::zeros(2 * m, 1);
        for i in 0..m {
            let s = Complex64::new(0.0, spectrum.omegas()[i]);
            let g = spectrum.sample(i)[(er, ec)];
            let wi = w[i];
            for (j, &p) in phi_all[i].iter().enumerate() {
                let v = p * wi;
                block[(2 * i, j)] = v.re;
                block[(2 * i + 1, j)] = v.im;
            }
            block[(2 * i, n)] = wi;
            block[(2 * i + 1, n)] = 0.0;
            let se = s * wi;
            block[(2 * i, n + 1)] = se.re;
            block[(2 * i + 1, n + 1)] = se.im;
            for (j, &p) in phi_all[i].iter().enumerate() {
                let v = -(g * p) * wi;
                block[(2 * i, num_cols + j)] = v.re;
                block[(2 * i + 1, num_cols + j)] = v.im;
            }
            if relaxed {
                let v = -g * wi;
                block[(2 * i, num_cols + n)] = v.re;
                block[(2 * i + 1, num_cols + n)] = v.im;
            } else {
                // sigma = 1 + sum y phi: move the constant to the right side.
                let v = g * wi;
                rhs_block[(2 * i, 0)] = v.re;
                rhs_block[(2 * i + 1, 0)] = v.im;
            }
        }
        // QR-compress: rows (num_cols..) of R couple only to sigma columns.
        let qr = block.clone().qr();
        let r = qr.r();
        let mut qtb = rhs_block.clone();
        qr.q_tr_mul(&mut qtb);
        let have = r.nrows().min(num_cols + sig_cols);
        if have < num_cols + sig_cols {
            return Err(FitError::TooFewSamples {
                samples: m,
                order: n,
                needed: n + 2,
            });
        }
        for rrow in num_cols..(num_cols + sig_cols) {
            for c in 0..sig_cols {
                stacked[(el * sig_cols + (rrow - num_cols), c)] = r[(rrow, num_cols + c)];
            }
            rhs[(el * sig_cols + (rrow - num_cols), 0)] = qtb[(rrow, 0)];
        }
    }

    if relaxed {
        // Non-triviality row: sum of real(sigma) over samples equals the
        // sample count.
        let w_rel = data_scale / m as f64;
        let last = elements * sig_cols;
        for j in 0..n {
            let mut acc = 0.0;
            for point in phi_all.iter() {
                acc += point[j].re;
            }
            stacked[(last, j)] = acc * w_rel;
        }
        stacked[(last, n)] = m as f64 * w_rel;
        rhs[(last, 0)] = m as f64 * w_rel;
    }

    let (sol, _ratio) = solve_ls(stacked, &rhs)?;
    let d_tilde = if relaxed { sol[(n, 0)] } else { 1.0 };
    if relaxed && d_tilde.abs() < 1e-8 {
        // Degenerate relaxation: redo this pass with sigma pinned to 1.
        return relocate_poles(spectrum, basis, w, false);
    }

    // Zeros of sigma: eigenvalues of A_sigma - b c^T / d~.
    let size: usize = basis.iter().map(|b| b.columns()).sum();
    let mut a_sig = DMatrix::<f64>::zeros(size, size);
    let mut bvec = DMatrix::<f64>::zeros(size, 1);
    let mut cvec = DMatrix::<f64>::zeros(1, size);
    let mut at = 0usize;
    for b in basis {
        match b {
            BasisPole::Real(a) => {
                a_sig[(at, at)] = *a;
                bvec[(at, 0)] = 1.0;
                cvec[(0, at)] = sol[(at, 0)];
                at += 1;
            }
            BasisPole::Pair(p) => {
                a_sig[(at, at)] = p.re;
                a_sig[(at, at + 1)] = p.im;
                a_sig[(at + 1, at)] = -p.im;
                a_sig[(at + 1, at + 1)] = p.re;
                bvec[(at, 0)] = 2.0;
                cvec[(0, at)] = sol[(at, 0)];
                cvec[(0, at + 1)] = sol[(at + 1, 0)];
                at += 2;
            }
        }
    }
    let zero_matrix = a_sig - bvec * cvec / d_tilde;
    let mut new_poles: Vec<Complex64> = zero_matrix.complex_eigenvalues().iter().cloned().collect();
    if new_poles.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return Err(FitError::NonFinitePoles { iteration: 0 });
    }
    canonical_mode_order(&mut new_poles);
    Ok(basis_from_poles(&new_poles))
}

/// Residue identification with the pole set frozen: one least-squares solve
/// shared by all matrix elements.
fn identify_residues(
    spectrum: &SampledSpectrum,
    basis: &[BasisPole],
    w: &[f64],
) -> Result<(PoleResidueForm, f64), FitError> {
    let m = spectrum.len();
    let n: usize = basis.iter().map(|b| b.columns()).sum();
    let (rows_el, cols_el) = spectrum.shape();
    let elements = rows_el * cols_el;
    let num_cols = n + 2;

    let mut a = DMatrix::<f64>::zeros(2 * m, num_cols);
    let mut b = DMatrix::<f64>::zeros(2 * m, elements);
    let mut phi = Vec::with_capacity(n);
    for i in 0..m {
        let s = Complex64::new(0.0, spectrum.omegas()[i]);
        basis_row(basis, s, &mut phi);
        let wi = w[i];
        for (j, &p) in phi.iter().enumerate() {
            let v = p * wi;
            a[(2 * i, j)] = v.re;
            a[(2 * i + 1, j)] = v.im;
        }
        a[(2 * i, n)] = wi;
        let se = s * wi;
        a[(2 * i, n + 1)] = se.re;
        a[(2 * i + 1, n + 1)] = se.im;
        for el in 0..elements {
            let g = spectrum.sample(i)[(el / cols_el, el % cols_el)] * wi;
            b[(2 * i, el)] = g.re;
            b[(2 * i + 1, el)] = g.im;
        }
    }
    let (x, _ratio) = solve_ls(a, &b)?;

    // Assemble the rational form.
    let mut poles = Vec::new();
    let mut residues: Vec<DMatrix<Complex64>> = Vec::new();
    let mut at = 0usize;
    for bp in basis {
        match bp {
            BasisPole::Real(p) => {
                poles.push(Complex64::new(*p, 0.0));
                residues.push(DMatrix::from_fn(rows_el, cols_el, |r, c| {
                    Complex64::new(x[(at, r * cols_el + c)], 0.0)
                }));
                at += 1;
            }
            BasisPole::Pair(p) => {
                let top = DMatrix::from_fn(rows_el, cols_el, |r, c| {
                    Complex64::new(x[(at, r * cols_el + c)], x[(at + 1, r * cols_el + c)])
                });
                poles.push(*p);
                residues.push(top.clone());
                poles.push(p.conj());
                residues.push(top.map(|z| z.conj()));
                at += 2;
            }
        }
    }
    let direct = DMatrix::from_fn(rows_el, cols_el, |r, c| x[(n, r * cols_el + c)]);
    let linear = DMatrix::from_fn(rows_el, cols_el, |r, c| x[(n + 1, r * cols_el + c)]);
    let model =
        PoleResidueForm::new(poles, residues, direct, linear).map_err(FitError::Lti)?;

    // Relative rms over all samples and entries.
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..m {
        let s = crate::lti::ComplexFrequency::jomega(spectrum.omegas()[i]);
        let fitted = model.eval(s).map_err(FitError::Lti)?;
        let data = spectrum.sample(i);
        num += (fitted - data)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>();
        den += data.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let rms_rel = (num / den.max(1e-300)).sqrt();
    Ok((model, rms_rel))
}

/// Fit a rational model with a common pole set to a sampled spectrum.
pub fn vector_fit(spectrum: &SampledSpectrum, cfg: &FitConfig) -> Result<FitResult, FitError> {
    if cfg.order == 0 {
        return Err(FitError::Config("order must be at least 1".into()));
    }
    if cfg.iterations == 0 {
        return Err(FitError::Config("iterations must be at least 1".into()));
    }
    let needed = 2 * cfg.order + 2;
    if spectrum.len() < needed {
        return Err(FitError::TooFewSamples {
            samples: spectrum.len(),
            order: cfg.order,
            needed,
        });
    }

    let w = weights(spectrum, cfg.weighting);
    let mut basis = match &cfg.initial_poles {
        Some(poles) => {
            let count: usize = poles.len();
            if count != cfg.order {
                return Err(FitError::Config(format!(
                    "{} initial poles for order {}",
                    count, cfg.order
                )));
            }
            let b = basis_from_poles(poles);
            if b.iter().map(|x| x.columns()).sum::<usize>() != cfg.order {
                return Err(FitError::Config(
                    "initial poles must be closed under conjugation".into(),
                ));
            }
            b
        }
        None => {
            let w_lo = spectrum.omegas()[0].max(1e-6);
            let w_hi = *spectrum.omegas().last().unwrap();
            initial_basis(cfg.order, w_lo, w_hi)
        }
    };

    let mut history = vec![poles_of_basis(&basis)];
    let mut converged = false;
    for _pass in 0..cfg.iterations {
        let mut next = relocate_poles(spectrum, &basis, &w, true)?;
        if cfg.enforce_stability {
            next = next
                .into_iter()
                .map(|b| match b {
                    BasisPole::Real(a) if a > 0.0 => BasisPole::Real(-a),
                    BasisPole::Pair(p) if p.re > 0.0 => {
                        BasisPole::Pair(Complex64::new(-p.re, p.im))
                    }
                    other => other,
                })
                .collect();
        }
        let new_poles = poles_of_basis(&next);
        let old_poles = history.last().unwrap();
        let movement = new_poles
            .iter()
            .zip(old_poles.iter())
            .map(|(a, b)| (a - b).norm() / (1.0 + b.norm()))
            .fold(0.0f64, f64::max);
        basis = next;
        history.push(new_poles);
        if movement < 1e-10 {
            converged = true;
            break;
        }
    }

    let (mut model, mut rms_rel) = identify_residues(spectrum, &basis, &w)?;
    let mut warning = None;
    if !converged {
        // Relocation ran out of passes: keep the best iterate by residual.
        let mut best_pass = history.len() - 1;
        for (pass, poles) in history.iter().enumerate().rev().skip(1) {
            let trial_basis = basis_from_poles(poles);
            if trial_basis.iter().map(|b| b.columns()).sum::<usize>() != cfg.order {
                continue;
            }
            if let Ok((m, r)) = identify_residues(spectrum, &trial_basis, &w) {
                if r < rms_rel {
                    model = m;
                    rms_rel = r;
                    best_pass = pass;
                }
            }
        }
        warning = Some(format!(
            "pole relocation still moving after {} passes; kept iterate {} (rms {:.3e})",
            cfg.iterations, best_pass, rms_rel
        ));
    }
    Ok(FitResult {
        model,
        rms_rel,
        pole_history: history,
        converged,
        warning,
    })
}
