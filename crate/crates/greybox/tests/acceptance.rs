//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured figures. Runs on the bundled example systems.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use greybox::apparatus::invert_small;
use greybox::lti::{frobenius_norm, residue_by_limit, ComplexFrequency};
use greybox::participation::{
    impedance_participation, layer1_index, layer2_index, parameter_participation,
    participation_from_rational, predict_eigenvalue_shift, state_participation_via_chain,
    verify_lemma_fd,
};
use greybox::sysfile::load_system;
use greybox::system::{StateOwner, WholeSystemModel};
use greybox::vecfit::{vector_fit, FitConfig};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../examples")
        .join(name)
}

fn load(name: &str) -> WholeSystemModel {
    load_system(&example(name))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
        .assemble()
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SYSTEMS: [&str; 2] = ["three_node.json", "four_bus.json"];

fn random_direction(rng: &mut ChaCha8Rng, scale: f64) -> DMatrix<Complex64> {
    let raw = DMatrix::from_fn(2, 2, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let norm = frobenius_norm(&raw);
    raw.map(|z| z * (scale / norm))
}

/// Criterion 1: the pole set of every whole-system admittance block (residue
/// above 1e-12) equals the eigenvalue set of the assembled A, confirmed
/// through the independent limit-formula residue route.
#[test]
fn criterion_1_pole_eigenvalue_equivalence() {
    let start = Instant::now();
    let mut blocks_checked = 0usize;
    for name in SYSTEMS {
        let model = load(name);
        let k = model.node_count();
        for node in 1..=k {
            let block = model.admittance_block(node).unwrap();
            // Poles of the block realization against eigenvalues of A.
            let block_poles = block.poles();
            for (pole, lam) in block_poles.iter().zip(model.modes().values()) {
                assert!(
                    (pole - lam).norm() <= 1e-8 * (1.0 + lam.norm()),
                    "{name} node {node}: block pole {pole} vs eigenvalue {lam}"
                );
            }
            for mode in 0..model.modes().len() {
                let lam = model.modes().value(mode);
                if lam.im < 0.0 {
                    continue;
                }
                let r_eig = model.admittance_residue(node, mode).unwrap();
                let present = frobenius_norm(&r_eig) > 1e-12;
                let offset = 1e-7 * (1.0 + lam.norm());
                let r_lim = residue_by_limit(
                    |s| block.eval(ComplexFrequency::new(s)?),
                    lam,
                    offset,
                )
                .unwrap();
                if present {
                    let rel = frobenius_norm(&(r_lim.clone() - &r_eig))
                        / frobenius_norm(&r_eig).max(1e-9);
                    assert!(
                        rel <= 1e-3,
                        "{name} node {node} mode {mode}: limit-route residue off by {rel}"
                    );
                } else {
                    assert!(
                        frobenius_norm(&r_lim) < 1e-9,
                        "{name} node {node} mode {mode}: absent pole shows a residue"
                    );
                }
            }
            blocks_checked += 1;
        }
        // Conversely: every eigenvalue appears in some diagonal block.
        for mode in 0..model.modes().len() {
            let max_r = (1..=k)
                .map(|node| frobenius_norm(&model.admittance_residue(node, mode).unwrap()))
                .fold(0.0f64, f64::max);
            assert!(
                max_r > 1e-12,
                "{name} mode {mode}: no block carries this eigenvalue"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "criterion 1: PASS (pole/eigenvalue sets agree on {blocks_checked} blocks, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 2: the loop identity Y_kk = (Z_k + Z_gk)^{-1} over 100
/// log-spaced frequencies and every node, to 1e-8 relative.
#[test]
fn criterion_2_loop_identity() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for name in SYSTEMS {
        let model = load(name);
        for node in 1..=model.node_count() {
            let zg = model.grid_impedance_seen(node).unwrap();
            for i in 0..100 {
                let f = 0.1 * (1e4f64 / 0.1).powf(i as f64 / 99.0);
                let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
                let y_kk = model.admittance_block_at(node, s).unwrap();
                let z_k = model.terminal(node).unwrap().impedance_at(s).unwrap();
                let z_g = zg.eval(ComplexFrequency::new(s).unwrap()).unwrap();
                let rhs = invert_small(&(z_k + z_g)).unwrap();
                let rel = frobenius_norm(&(y_kk.clone() - &rhs)) / frobenius_norm(&y_kk);
                worst = worst.max(rel);
                assert!(
                    rel <= 1e-8,
                    "{name} node {node} f {f} Hz: identity residual {rel}"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "criterion 2: PASS (max residual {worst:.3e} over 100 frequencies/node, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 3: finite-difference validation of the eigenvalue-shift
/// prediction over >= 20 (mode, node, random direction) triples per system:
/// relative error <= 1e-3 at eps = 1e-5 and first-order convergence.
#[test]
fn criterion_3_lemma_finite_difference_suite() {
    let start = Instant::now();
    for name in SYSTEMS {
        let model = load(name);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
        // Rank (mode, node) pairs by the Layer-1 index, strongest first.
        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        for mode in 0..model.modes().len() {
            let lam = model.modes().value(mode);
            if lam.im < 0.0 {
                continue;
            }
            for node in 1..=model.node_count() {
                let pf = impedance_participation(&model, node, mode).unwrap();
                let z = model.terminal(node).unwrap().impedance_at(lam).unwrap();
                candidates.push((mode, node, layer1_index(&pf, &z)));
            }
        }
        candidates.sort_by(|a, b| b.2.total_cmp(&a.2));

        let mut triples = 0usize;
        let mut worst_rel = 0.0f64;
        for (mode, node, _l1) in candidates {
            if triples >= 25 {
                break;
            }
            let lam = model.modes().value(mode);
            let z = model.terminal(node).unwrap().impedance_at(lam).unwrap();
            let dz = random_direction(&mut rng, frobenius_norm(&z));

            // Ladder top: keep the first-order shift well below the local
            // mode gap so perturbed-eigenvalue matching stays unambiguous.
            let pf = impedance_participation(&model, node, mode).unwrap();
            let slope = predict_eigenvalue_shift(&pf, &dz).unwrap().norm();
            let gap = model
                .modes()
                .values()
                .iter()
                .enumerate()
                .filter(|(m, _)| *m != mode)
                .map(|(_, l)| (l - lam).norm())
                .fold(f64::INFINITY, f64::min);
            let eps_top = (0.05 * gap / slope.max(1e-300)).min(1e-2);
            if eps_top < 1e-4 {
                continue; // too shift-sensitive for a clean ladder
            }
            let scales = [eps_top, eps_top / 10.0, eps_top / 100.0, 1e-5];
            let conv = verify_lemma_fd(&model, node, mode, &dz, &scales).unwrap();
            if conv.rel_errors[0] < 1e-5 {
                // The locus is linear to solver precision in this direction;
                // no measurable remainder to validate an order against.
                continue;
            }
            let last = *conv.rel_errors.last().unwrap();
            assert!(
                last <= 1e-3,
                "{name} mode {mode} node {node}: rel error {last} at eps 1e-5"
            );
            assert!(
                (0.8..=1.2).contains(&conv.order),
                "{name} mode {mode} node {node}: order {} (errors {:?})",
                conv.order,
                conv.rel_errors
            );
            worst_rel = worst_rel.max(last);
            triples += 1;
        }
        assert!(
            triples >= 20,
            "{name}: only {triples} usable triples"
        );
        println!(
            "criterion 3: {name}: {triples} triples, worst rel error {worst_rel:.3e} at eps 1e-5"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 3: PASS (first-order convergence on both systems, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 4: the chain rule reproduces the eigenvector-route state
/// participation factors for every apparatus state, and the full
/// state-participation columns sum to one.
#[test]
fn criterion_4_state_participation_chain() {
    let start = Instant::now();
    let model = load("three_node.json");
    let p_matrix = model.modes().state_participation_matrix();
    let mut compared = 0usize;
    let mut worst = 0.0f64;
    for node in 1..=model.node_count() {
        let states = model.terminal(node).unwrap().admittance().order();
        for local in 0..states {
            let global = model.global_state_index(node, local).unwrap();
            for mode in 0..model.modes().len() {
                let direct = p_matrix[(global, mode)];
                if direct.norm() < 1e-8 {
                    continue;
                }
                let chained = state_participation_via_chain(&model, node, mode, local).unwrap();
                let rel = (chained - direct).norm() / direct.norm();
                assert!(
                    rel <= 1e-4,
                    "node {node} state {local} mode {mode}: chain {chained} vs direct {direct} (rel {rel})"
                );
                worst = worst.max(rel);
                compared += 1;
            }
        }
    }

    for mode in 0..model.modes().len() {
        let mut total = Complex64::default();
        for (global, owner) in model.state_owners().iter().enumerate() {
            total += match owner {
                StateOwner::Network => p_matrix[(global, mode)],
                StateOwner::Apparatus { node, local } => {
                    state_participation_via_chain(&model, *node, mode, *local).unwrap()
                }
            };
        }
        assert!(
            (total - Complex64::new(1.0, 0.0)).norm() <= 1e-6,
            "mode {mode}: column sum {total}"
        );
    }
    let elapsed = start.elapsed();
    println!(
        "criterion 4: PASS ({compared} state/mode pairs, worst rel {worst:.3e}, column sums at 1, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 5: the Layer-1 Cauchy bound holds for 1000 random directions per
/// mode and is attained (>= 99%) for aligned perturbations.
#[test]
fn criterion_5_layer1_cauchy_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut modes_checked = 0usize;
    for name in SYSTEMS {
        let model = load(name);
        for mode in 0..model.modes().len() {
            let lam = model.modes().value(mode);
            if lam.im < 0.0 {
                continue;
            }
            // Strongest node for this mode.
            let node = (1..=model.node_count())
                .max_by(|&a, &b| {
                    let pa = frobenius_norm(&impedance_participation(&model, a, mode).unwrap().p);
                    let pb = frobenius_norm(&impedance_participation(&model, b, mode).unwrap().p);
                    pa.total_cmp(&pb)
                })
                .unwrap();
            let pf = impedance_participation(&model, node, mode).unwrap();
            let z = model.terminal(node).unwrap().impedance_at(lam).unwrap();
            let z_norm = frobenius_norm(&z);
            let bound = layer1_index(&pf, &z);
            for _ in 0..1000 {
                let dz = random_direction(&mut rng, z_norm);
                let shift = predict_eigenvalue_shift(&pf, &dz).unwrap();
                assert!(
                    shift.norm() <= bound * (1.0 + 1e-12),
                    "{name} mode {mode}: bound exceeded"
                );
            }
            let aligned = pf.p.map(|v| v * (z_norm / frobenius_norm(&pf.p)));
            let attained = predict_eigenvalue_shift(&pf, &aligned).unwrap().norm();
            assert!(
                attained >= 0.99 * bound,
                "{name} mode {mode}: alignment attains only {}",
                attained / bound
            );
            modes_checked += 1;
        }
    }
    let elapsed = start.elapsed();
    println!(
        "criterion 5: PASS ({modes_checked} modes x 1000 directions, bound exact at alignment, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 6: the sign of Re<p, Z_k> predicts the direction of the real
/// eigenvalue shift under the proportional scaling Z_k -> (1 + 1e-4) Z_k.
#[test]
fn criterion_6_layer2_sign_semantics() {
    let start = Instant::now();
    let eps = 1e-4;
    let mut pairs = 0usize;
    for name in SYSTEMS {
        let model = load(name);
        for node in 1..=model.node_count() {
            let shifted = model
                .eigenvalues_with_scaled_impedance(node, 1.0 + eps)
                .unwrap();
            for mode in 0..model.modes().len() {
                let lam = model.modes().value(mode);
                let pf = impedance_participation(&model, node, mode).unwrap();
                let z = model.terminal(node).unwrap().impedance_at(lam).unwrap();
                let l2 = layer2_index(&pf, &z).unwrap();
                if l2.norm() <= 1e-8 {
                    continue;
                }
                // Nearest-eigenvalue match with a separation guard.
                let mut best = (Complex64::default(), f64::INFINITY);
                let mut second = f64::INFINITY;
                for &cand in &shifted {
                    let d = (cand - lam).norm();
                    if d < best.1 {
                        second = best.1;
                        best = (cand, d);
                    } else if d < second {
                        second = d;
                    }
                }
                assert!(second >= 2.0 * best.1, "{name} node {node} mode {mode}: ambiguous match");
                let fd_re = (best.0 - lam).re;
                assert!(
                    fd_re.signum() == (l2.re * eps).signum(),
                    "{name} node {node} mode {mode}: Re<p,Z> = {}, FD shift {}",
                    l2.re,
                    fd_re
                );
                pairs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    println!(
        "criterion 6: PASS ({pairs} (mode,node) pairs agree in sign, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 7: parameter participation factors (paper step 1e-5) predict
/// finite-difference shifts under the larger step 1e-4 to <= 1% for every
/// catalog parameter on the four-bus example.
#[test]
fn criterion_7_parameter_sensitivity() {
    let start = Instant::now();
    let model = load("four_bus.json");
    // The three least-damped oscillatory modes: the retuning targets.
    let mut osc: Vec<usize> = (0..model.modes().len())
        .filter(|&m| model.modes().value(m).im > 0.1)
        .collect();
    osc.sort_by(|&a, &b| {
        let za = -model.modes().value(a).re / model.modes().value(a).norm();
        let zb = -model.modes().value(b).re / model.modes().value(b).norm();
        za.total_cmp(&zb)
    });
    let targets: Vec<usize> = osc.into_iter().take(3).collect();

    let mut compared = 0usize;
    let mut worst = 0.0f64;
    for node in 1..=model.node_count() {
        let Some(instance) = model.terminal(node).unwrap().instance() else {
            continue;
        };
        for pname in instance.parameter_names() {
            let rho = instance.parameter(pname).unwrap();
            let step = 1e-4 * (1.0 + rho.abs());
            let perturbed = instance.with_parameter(pname, rho + step).unwrap();
            let shifted = model
                .eigenvalues_with_replacement(node, &perturbed.terminal().admittance)
                .unwrap();
            for &mode in &targets {
                let lam = model.modes().value(mode);
                let pf = impedance_participation(&model, node, mode).unwrap();
                let sens = instance
                    .parameter_sensitivity(pname, ComplexFrequency::new(lam).unwrap())
                    .unwrap();
                let predicted = parameter_participation(&pf, &sens).unwrap() * step;
                let fd = shifted
                    .iter()
                    .min_by(|a, b| (*a - lam).norm().total_cmp(&(*b - lam).norm()))
                    .unwrap()
                    - lam;
                if fd.norm() < 1e-9 * (1.0 + lam.norm()) {
                    // Parameter does not move this mode measurably; the
                    // prediction must agree that it is negligible.
                    assert!(
                        predicted.norm() < 1e-8 * (1.0 + lam.norm()),
                        "{node}/{pname} mode {mode}: flat FD but prediction {predicted}"
                    );
                    continue;
                }
                let rel = (predicted - fd).norm() / fd.norm();
                assert!(
                    rel <= 1e-2,
                    "node {node} param {pname} mode {mode}: predicted {predicted}, fd {fd}, rel {rel}"
                );
                worst = worst.max(rel);
                compared += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(compared >= 40, "only {compared} parameter/mode pairs");
    println!(
        "criterion 7: PASS ({compared} parameter/mode pairs, worst rel {worst:.3e}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 8: the black-box route. Vector fitting of sampled admittance
/// blocks reproduces the exact-route participation factors; synthetic truths
/// are recovered at spec accuracy.
#[test]
fn criterion_8_black_box_equivalence() {
    let start = Instant::now();

    // Synthetic truth: poles to 1e-6, residues to 1e-4.
    {
        let r_pair = DMatrix::from_fn(2, 2, |i, j| {
            Complex64::new(0.3 + 0.2 * i as f64, -0.25 + 0.15 * j as f64)
        });
        let truth = greybox::lti::PoleResidueForm::new(
            vec![
                Complex64::new(-5.0, 0.0),
                Complex64::new(-1.0, 10.0),
                Complex64::new(-1.0, -10.0),
            ],
            vec![
                DMatrix::from_element(2, 2, Complex64::new(0.8, 0.0)),
                r_pair.clone(),
                r_pair.map(|z| z.conj()),
            ],
            DMatrix::from_element(2, 2, 0.05),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let omegas: Vec<f64> = (0..300)
            .map(|i| 0.01 * (1000.0f64 / 0.01).powf(i as f64 / 299.0))
            .collect();
        let spectrum = greybox::lti::SampledSpectrum::from_fn(omegas, |w| {
            truth.eval(ComplexFrequency::jomega(w))
        })
        .unwrap();
        let fit = vector_fit(&spectrum, &FitConfig::new(3)).unwrap();
        for (tp, tr) in truth.poles().iter().zip(truth.residues()) {
            let (idx, fp) = fit
                .model
                .poles()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - tp).norm().total_cmp(&(b.1 - tp).norm()))
                .unwrap();
            assert!((fp - tp).norm() <= 1e-6 * (1.0 + tp.norm()));
            let rel = frobenius_norm(&(fit.model.residues()[idx].clone() - tr))
                / frobenius_norm(tr);
            assert!(rel <= 1e-4, "synthetic residue error {rel}");
        }
    }

    // Grey-box equivalence on the three-node example.
    let model = load("three_node.json");
    let omegas: Vec<f64> = (0..2000)
        .map(|i| {
            2.0 * std::f64::consts::PI * 0.1 * (1e4f64 / 0.1).powf(i as f64 / 1999.0)
        })
        .collect();
    let mut compared = 0usize;
    let mut worst = 0.0f64;
    for node in 1..=model.node_count() {
        let spectrum = model.sweep_admittance_block(node, &omegas).unwrap();
        let fit = vector_fit(&spectrum, &FitConfig::new(model.order())).unwrap();
        assert!(
            fit.rms_rel < 1e-7,
            "node {node}: fit rms {} too large",
            fit.rms_rel
        );
        let max_r = (0..model.modes().len())
            .map(|m| frobenius_norm(&model.admittance_residue(node, m).unwrap()))
            .fold(0.0f64, f64::max);
        for mode in 0..model.modes().len() {
            let lam = model.modes().value(mode);
            if lam.im < 0.0 {
                continue;
            }
            let r_eig = model.admittance_residue(node, mode).unwrap();
            if frobenius_norm(&r_eig) < 1e-3 * max_r {
                continue; // below the identifiable floor for this block
            }
            let (idx, fitted_pole) = fit
                .model
                .poles()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - lam).norm().total_cmp(&(b.1 - lam).norm()))
                .unwrap();
            assert!(
                (fitted_pole - lam).norm() <= 1e-4 * (1.0 + lam.norm()),
                "node {node} mode {mode}: fitted pole {fitted_pole} vs {lam}"
            );
            let p_exact = impedance_participation(&model, node, mode).unwrap().p;
            let p_fit = participation_from_rational(
                &fit.model,
                ComplexFrequency::new(*fitted_pole).unwrap(),
            )
            .unwrap();
            let _ = idx;
            let rel = frobenius_norm(&(p_fit.clone() - &p_exact)) / frobenius_norm(&p_exact);
            assert!(
                rel <= 1e-3,
                "node {node} mode {mode}: fitted participation off by {rel}"
            );
            worst = worst.max(rel);
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(compared >= 15, "only {compared} comparisons");
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "criterion 8: PASS ({compared} fitted participation factors, worst rel {worst:.3e}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

// Criterion 9 (byte-identical reports across consecutive runs) exercises the
// command-line binary and lives in the CLI crate's test suite.
