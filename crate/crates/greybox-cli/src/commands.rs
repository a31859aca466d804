//! Subcommand implementations.

use std::path::Path;

use serde_json::json;

use greybox::lti::{frobenius_norm, log_grid_hz, SampledSpectrum};
use greybox::participation::{
    impedance_participation, verify_lemma_fd, LayerReport, ModeEntry,
};
use greybox::sysfile::load_system;
use greybox::system::WholeSystemModel;
use greybox::vecfit::{fit_quality, vector_fit, FitConfig};

use crate::jsonout::write_json;
use crate::{CliError, SweepArgs};

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("creating {}: {e}", out.display())))
}

fn validate_sweep(sweep: &SweepArgs) -> Result<(), CliError> {
    if !(sweep.fmin > 0.0 && sweep.fmin.is_finite() && sweep.fmax.is_finite()) {
        return Err(CliError::Input("fmin must be positive and finite".into()));
    }
    if sweep.fmin >= sweep.fmax {
        return Err(CliError::Input(format!(
            "fmin ({}) must be below fmax ({})",
            sweep.fmin, sweep.fmax
        )));
    }
    if sweep.points < 2 {
        return Err(CliError::Input("points must be at least 2".into()));
    }
    Ok(())
}

fn assemble(config: &Path) -> Result<WholeSystemModel, CliError> {
    let sys = load_system(config)?;
    Ok(sys.assemble()?)
}

fn mode_entries(model: &WholeSystemModel) -> Vec<ModeEntry> {
    (0..model.modes().len())
        .map(|m| ModeEntry::from_lambda(m, model.modes().value(m)))
        .collect()
}

pub fn cmd_modes(
    config: &Path,
    sweep: &SweepArgs,
    out: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    validate_sweep(sweep)?;
    let model = assemble(config)?;
    ensure_out_dir(out)?;

    write_json(
        &out.join("modes.json"),
        &json!({ "modes": mode_entries(&model) }),
    )?;

    let omegas = log_grid_hz(sweep.fmin, sweep.fmax, sweep.points);
    for node in 1..=model.node_count() {
        let spectrum = model
            .sweep_admittance_block(node, &omegas)
            .map_err(CliError::from)?;
        spectrum
            .write_csv_path(&out.join(format!("spectrum_{node}.csv")))
            .map_err(CliError::from)?;
    }

    if !quiet {
        println!(
            "{}: {} states, {} nodes, {} modes -> {}",
            config.display(),
            model.order(),
            model.node_count(),
            model.modes().len(),
            out.display()
        );
        let mut oscillatory: Vec<&_> = Vec::new();
        let entries = mode_entries(&model);
        for e in &entries {
            if e.lambda_im > 0.0 {
                oscillatory.push(e);
            }
        }
        oscillatory.sort_by(|a, b| a.damping_ratio.total_cmp(&b.damping_ratio));
        for e in oscillatory.iter().take(5) {
            println!(
                "  mode {:3}: {:10.4} Hz, damping {:8.5}",
                e.index, e.freq_hz, e.damping_ratio
            );
        }
    }
    Ok(())
}

fn parse_mode_freq(raw: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 2 {
        return Err(CliError::Input(format!(
            "--mode-freq expects LO:HI in Hz, got `{raw}`"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Input(format!("bad frequency `{}`", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Input(format!("bad frequency `{}`", parts[1])))?;
    if lo < 0.0 || hi <= lo || lo.is_nan() {
        return Err(CliError::Input(format!(
            "--mode-freq window must satisfy 0 <= LO < HI, got {lo}:{hi}"
        )));
    }
    Ok((lo, hi))
}

fn parse_nodes(raw: &str, count: usize) -> Result<Vec<usize>, CliError> {
    let mut nodes = Vec::new();
    for part in raw.split(',') {
        let n: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("bad node index `{part}`")))?;
        if n >= 1 && n <= count && !nodes.contains(&n) {
            nodes.push(n);
        }
    }
    nodes.sort_unstable();
    if nodes.is_empty() {
        return Err(CliError::Input(format!(
            "node filter `{raw}` selects none of the {count} nodes"
        )));
    }
    Ok(nodes)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_participate(
    config: &Path,
    mode_freq: Option<&str>,
    damping_below: Option<f64>,
    nodes: Option<&str>,
    verify: bool,
    out: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    let model = assemble(config)?;

    let window = mode_freq.map(parse_mode_freq).transpose()?;
    let selected: Vec<usize> = (0..model.modes().len())
        .filter(|&m| {
            let lam = model.modes().value(m);
            let freq = lam.im.abs() / (2.0 * std::f64::consts::PI);
            if let Some((lo, hi)) = window {
                if !(freq >= lo && freq <= hi) {
                    return false;
                }
            }
            if let Some(zeta_max) = damping_below {
                let mag = lam.norm();
                let zeta = if mag > 0.0 { -lam.re / mag } else { 0.0 };
                if zeta >= zeta_max || zeta.is_nan() {
                    return false;
                }
            }
            true
        })
        .collect();
    if selected.is_empty() {
        return Err(CliError::Input(
            "mode selection is empty: no eigenvalue matches the filters".into(),
        ));
    }

    let node_list = match nodes {
        Some(raw) => parse_nodes(raw, model.node_count())?,
        None => (1..=model.node_count()).collect(),
    };

    let report = LayerReport::analyze(&model, &selected, &node_list, true)?;
    ensure_out_dir(out)?;
    write_json(&out.join("modes.json"), &json!({ "modes": mode_entries(&model) }))?;
    write_json(&out.join("layer1.json"), &report.layer1)?;
    write_json(&out.join("layer2.json"), &report.layer2)?;
    write_json(&out.join("layer3.json"), &report.layer3)?;

    if verify {
        let mut table = Vec::new();
        let scales = [1e-3, 1e-4, 1e-5];
        for &mode in &selected {
            let lam = model.modes().value(mode);
            if lam.im < 0.0 {
                continue; // conjugate row carries the same information
            }
            for &node in &node_list {
                let pf = impedance_participation(&model, node, mode)?;
                let p_norm = frobenius_norm(&pf.p);
                if p_norm < 1e-8 {
                    continue;
                }
                let direction = pf.p.map(|z| z / p_norm);
                let conv = verify_lemma_fd(&model, node, mode, &direction, &scales)?;
                table.push(json!({
                    "mode": mode,
                    "node": node,
                    "lambda_re": lam.re,
                    "lambda_im": lam.im,
                    "epsilons": conv.epsilons,
                    "rel_errors": conv.rel_errors,
                    "order": conv.order,
                    "first_order": conv.is_first_order(),
                }));
            }
        }
        write_json(&out.join("lemma_check.json"), &json!({ "checks": table }))?;
    }

    if !quiet {
        println!(
            "{}: layer reports for {} modes over nodes {:?} -> {}",
            config.display(),
            selected.len(),
            node_list,
            out.display()
        );
    }
    Ok(())
}

pub fn cmd_fit(
    spectrum_path: &Path,
    order: usize,
    iters: usize,
    out: Option<&Path>,
    quiet: bool,
) -> Result<(), CliError> {
    if order == 0 {
        return Err(CliError::Input("--order must be at least 1".into()));
    }
    if iters == 0 {
        return Err(CliError::Input("--iters must be at least 1".into()));
    }
    let spectrum = SampledSpectrum::read_csv_path(spectrum_path)?;
    let mut cfg = FitConfig::new(order);
    cfg.iterations = iters;
    let fit = vector_fit(&spectrum, &cfg)?;
    let quality = fit_quality(&fit, &spectrum)?;

    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| {
            spectrum_path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| ".".into())
        });
    ensure_out_dir(&out_dir)?;

    let (rows, cols) = spectrum.shape();
    let poles: Vec<_> = fit
        .model
        .poles()
        .iter()
        .map(|p| json!({ "re": p.re, "im": p.im }))
        .collect();
    let residues: Vec<_> = fit
        .model
        .residues()
        .iter()
        .map(|r| {
            let mut entries = Vec::new();
            for i in 0..rows {
                for j in 0..cols {
                    entries.push(json!({ "re": r[(i, j)].re, "im": r[(i, j)].im }));
                }
            }
            entries
        })
        .collect();
    let flatten = |m: &greybox::nalgebra::DMatrix<f64>| -> Vec<f64> {
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                out.push(m[(i, j)]);
            }
        }
        out
    };
    let direct = flatten(fit.model.direct());
    let linear = flatten(fit.model.linear());

    write_json(
        &out_dir.join("fit.json"),
        &json!({
            "rows": rows,
            "cols": cols,
            "order": order,
            "iterations": iters,
            "converged": fit.converged,
            "warning": fit.warning,
            "poles": poles,
            "residues": residues,
            "direct": direct,
            "linear": linear,
            "rms_rel": fit.rms_rel,
        }),
    )?;
    write_json(&out_dir.join("quality.json"), &quality)?;

    if !quiet {
        println!(
            "{}: order {} fit, rms_rel {:.3e} -> {}",
            spectrum_path.display(),
            order,
            fit.rms_rel,
            out_dir.display()
        );
        if let Some(w) = &fit.warning {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
