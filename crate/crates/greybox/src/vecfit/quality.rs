//! Fit diagnostics: residual tables and the order-sweep helper.

use serde::Serialize;

use super::fit::{vector_fit, FitConfig, FitResult};
use crate::error::FitError;
use crate::lti::{ComplexFrequency, SampledSpectrum};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Serialize)]
pub struct BandQuality {
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub samples: usize,
    pub rms_rel: f64,
    pub max_rel: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub rms_rel: f64,
    pub max_rel: f64,
    pub bands: Vec<BandQuality>,
}

/// Relative errors of the fitted model against the samples, overall and per
/// frequency decade.
pub fn fit_quality(result: &FitResult, spectrum: &SampledSpectrum) -> Result<QualityReport, FitError> {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut per_point = Vec::with_capacity(spectrum.len());
    for i in 0..spectrum.len() {
        let w = spectrum.omegas()[i];
        let fitted = result
            .model
            .eval(ComplexFrequency::jomega(w))
            .map_err(FitError::Lti)?;
        let data = spectrum.sample(i);
        let err2: f64 = (fitted - data).iter().map(|z| z.norm_sqr()).sum();
        let ref2: f64 = data.iter().map(|z| z.norm_sqr()).sum();
        num += err2;
        den += ref2;
        let rel = (err2 / ref2.max(1e-300)).sqrt();
        max_rel = max_rel.max(rel);
        per_point.push((w, err2, ref2, rel));
    }

    // Decade bands over the sample range.
    let f_lo = spectrum.omegas()[0] / TWO_PI;
    let f_hi = spectrum.omegas()[spectrum.len() - 1] / TWO_PI;
    let first_decade = f_lo.log10().floor();
    let last_decade = f_hi.log10().ceil();
    let mut bands = Vec::new();
    let mut d = first_decade;
    while d < last_decade {
        let lo = 10f64.powf(d);
        let hi = 10f64.powf(d + 1.0);
        let in_band: Vec<_> = per_point
            .iter()
            .filter(|(w, _, _, _)| {
                let f = w / TWO_PI;
                f >= lo && f < hi
            })
            .collect();
        if !in_band.is_empty() {
            let n: f64 = in_band.iter().map(|(_, e, _, _)| e).sum();
            let r: f64 = in_band.iter().map(|(_, _, g, _)| g).sum();
            bands.push(BandQuality {
                f_lo_hz: lo,
                f_hi_hz: hi,
                samples: in_band.len(),
                rms_rel: (n / r.max(1e-300)).sqrt(),
                max_rel: in_band.iter().map(|(_, _, _, rel)| *rel).fold(0.0, f64::max),
            });
        }
        d += 1.0;
    }

    Ok(QualityReport {
        rms_rel: (num / den.max(1e-300)).sqrt(),
        max_rel,
        bands,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub order: usize,
    pub rms_rel: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Smallest order whose rms is within a factor 3 of the best seen.
    pub suggested_order: Option<usize>,
    /// Largest relative change of a fitted residue when refitting at the
    /// suggested order on every second sample: how sensitive the recovery is
    /// to frequency resolution.
    pub residue_density_sensitivity: Option<f64>,
}

/// Fit across a ladder of orders and pick the knee of the rms curve.
pub fn order_sweep(
    spectrum: &SampledSpectrum,
    orders: &[usize],
    base: &FitConfig,
) -> Result<SweepReport, FitError> {
    let mut entries = Vec::new();
    let mut results: Vec<(usize, FitResult)> = Vec::new();
    for &order in orders {
        let mut cfg = base.clone();
        cfg.order = order;
        match vector_fit(spectrum, &cfg) {
            Ok(fit) => {
                entries.push(SweepEntry {
                    order,
                    rms_rel: fit.rms_rel,
                    converged: fit.converged,
                });
                results.push((order, fit));
            }
            Err(FitError::RankDeficient { .. }) => {
                // Over-parameterized for this data; stop the ladder here.
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if entries.is_empty() {
        return Err(FitError::Config("no order in the sweep could be fitted".into()));
    }
    let best = entries.iter().map(|e| e.rms_rel).fold(f64::INFINITY, f64::min);
    let suggested = entries
        .iter()
        .find(|e| e.rms_rel <= 3.0 * best)
        .map(|e| e.order);

    let sensitivity = match suggested {
        Some(order) if spectrum.len() >= 2 * (2 * order + 2) => {
            let omegas: Vec<f64> = spectrum
                .omegas()
                .iter()
                .step_by(2)
                .cloned()
                .collect();
            let samples: Vec<_> = spectrum
                .samples()
                .iter()
                .step_by(2)
                .cloned()
                .collect();
            let halved = SampledSpectrum::new(omegas, samples).map_err(FitError::Lti)?;
            let mut cfg = base.clone();
            cfg.order = order;
            let full = &results.iter().find(|(o, _)| *o == order).unwrap().1;
            match vector_fit(&halved, &cfg) {
                Ok(refit) => {
                    let mut worst = 0.0f64;
                    for (p, r) in full.model.poles().iter().zip(full.model.residues()) {
                        let nearest = refit
                            .model
                            .poles()
                            .iter()
                            .enumerate()
                            .min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()));
                        if let Some((idx, _)) = nearest {
                            let other = &refit.model.residues()[idx];
                            let denom = crate::lti::frobenius_norm(r).max(1e-300);
                            worst = worst.max(
                                crate::lti::frobenius_norm(&(other.clone() - r)) / denom,
                            );
                        }
                    }
                    Some(worst)
                }
                Err(_) => None,
            }
        }
        _ => None,
    };

    Ok(SweepReport {
        entries,
        suggested_order: suggested,
        residue_density_sensitivity: sensitivity,
    })
}
