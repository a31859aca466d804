//! Sampled frequency spectra of matrix transfer functions, with the CSV
//! interchange format used by the measurement-based route.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ConfigError, LtiError};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Matrix samples over a strictly increasing frequency grid.
///
/// Frequencies are stored in rad/s; the CSV format carries Hz.
#[derive(Debug, Clone)]
pub struct SampledSpectrum {
    omegas: Vec<f64>,
    samples: Vec<DMatrix<Complex64>>,
    rows: usize,
    cols: usize,
}

impl SampledSpectrum {
    pub fn new(omegas: Vec<f64>, samples: Vec<DMatrix<Complex64>>) -> Result<Self, LtiError> {
        if omegas.len() < 2 {
            return Err(LtiError::ShapeMismatch {
                expected: "at least 2 samples".into(),
                got: format!("{}", omegas.len()),
            });
        }
        if omegas.len() != samples.len() {
            return Err(LtiError::ShapeMismatch {
                expected: format!("{} samples", omegas.len()),
                got: format!("{}", samples.len()),
            });
        }
        if omegas.windows(2).any(|w| w[1] <= w[0] || w[1].is_nan() || w[0].is_nan()) {
            return Err(LtiError::NonFinite {
                context: "frequencies must be strictly increasing".into(),
            });
        }
        if omegas.iter().any(|w| !w.is_finite()) {
            return Err(LtiError::NonFinite {
                context: "frequency grid".into(),
            });
        }
        let (rows, cols) = samples[0].shape();
        if rows == 0 || cols == 0 {
            return Err(LtiError::ShapeMismatch {
                expected: "non-empty matrix samples".into(),
                got: "0x0".into(),
            });
        }
        if samples.iter().any(|m| m.shape() != (rows, cols)) {
            return Err(LtiError::ShapeMismatch {
                expected: format!("{rows}x{cols} throughout"),
                got: "mixed sample shapes".into(),
            });
        }
        if samples
            .iter()
            .any(|m| m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(LtiError::NonFinite {
                context: "spectrum samples".into(),
            });
        }
        Ok(Self {
            omegas,
            samples,
            rows,
            cols,
        })
    }

    /// Sample an evaluator over a grid (rad/s).
    pub fn from_fn<F>(omegas: Vec<f64>, mut eval: F) -> Result<Self, LtiError>
    where
        F: FnMut(f64) -> Result<DMatrix<Complex64>, LtiError>,
    {
        let samples = omegas
            .iter()
            .map(|&w| eval(w))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(omegas, samples)
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Frequency grid in rad/s.
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn samples(&self) -> &[DMatrix<Complex64>] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &DMatrix<Complex64> {
        &self.samples[i]
    }

    /// Header: `freq_hz` then `re_rc,im_rc` pairs in row-major order with
    /// 1-based single-digit indices (`re_11` is the d-d element).
    pub fn csv_header(rows: usize, cols: usize) -> String {
        let mut head = String::from("freq_hz");
        for r in 1..=rows {
            for c in 1..=cols {
                head.push_str(&format!(",re_{r}{c},im_{r}{c}"));
            }
        }
        head
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::csv_header(self.rows, self.cols))?;
        for (w, m) in self.omegas.iter().zip(&self.samples) {
            let mut line = format!("{:.11e}", w / TWO_PI);
            for r in 0..self.rows {
                for c in 0..self.cols {
                    line.push_str(&format!(",{:.11e},{:.11e}", m[(r, c)].re, m[(r, c)].im));
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &std::path::Path) -> Result<(), ConfigError> {
        let mut file = std::fs::File::create(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(&mut file).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_csv<R: BufRead>(input: R, path: &str) -> Result<Self, ConfigError> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| ConfigError::Csv {
            path: path.into(),
            line: 1,
            message: "empty file".into(),
        })?;
        let header = header.map_err(|e| ConfigError::Csv {
            path: path.into(),
            line: 1,
            message: e.to_string(),
        })?;
        let fields: Vec<&str> = header.trim().split(',').collect();
        if fields.first() != Some(&"freq_hz") {
            return Err(ConfigError::Csv {
                path: path.into(),
                line: 1,
                message: format!("first column must be `freq_hz`, got `{}`", fields.first().unwrap_or(&"")),
            });
        }
        if fields.len() < 3 || !(fields.len() - 1).is_multiple_of(2) {
            return Err(ConfigError::Csv {
                path: path.into(),
                line: 1,
                message: "expected pairs of re_rc,im_rc columns after freq_hz".into(),
            });
        }
        let mut rows = 0usize;
        let mut cols = 0usize;
        let npairs = (fields.len() - 1) / 2;
        for k in 0..npairs {
            let re_label = fields[1 + 2 * k];
            let im_label = fields[2 + 2 * k];
            let (r, c) = parse_element_label(re_label, "re").ok_or_else(|| ConfigError::Csv {
                path: path.into(),
                line: 1,
                message: format!("bad column label `{re_label}`"),
            })?;
            let (ri, ci) = parse_element_label(im_label, "im").ok_or_else(|| ConfigError::Csv {
                path: path.into(),
                line: 1,
                message: format!("bad column label `{im_label}`"),
            })?;
            if (r, c) != (ri, ci) {
                return Err(ConfigError::Csv {
                    path: path.into(),
                    line: 1,
                    message: format!("mismatched pair `{re_label}`/`{im_label}`"),
                });
            }
            rows = rows.max(r);
            cols = cols.max(c);
        }
        if rows * cols != npairs {
            return Err(ConfigError::Csv {
                path: path.into(),
                line: 1,
                message: format!(
                    "header declares {npairs} elements but indices span {rows}x{cols}"
                ),
            });
        }

        let mut omegas = Vec::new();
        let mut samples = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|e| ConfigError::Csv {
                path: path.into(),
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 1 + 2 * npairs {
                return Err(ConfigError::Csv {
                    path: path.into(),
                    line: line_no,
                    message: format!("expected {} fields, got {}", 1 + 2 * npairs, parts.len()),
                });
            }
            let parse = |s: &str, field: &str| -> Result<f64, ConfigError> {
                s.trim().parse::<f64>().map_err(|_| ConfigError::Csv {
                    path: path.into(),
                    line: line_no,
                    message: format!("cannot parse `{s}` in field {field}"),
                })
            };
            let f_hz = parse(parts[0], "freq_hz")?;
            let mut m = DMatrix::<Complex64>::zeros(rows, cols);
            for k in 0..npairs {
                let r = k / cols;
                let c = k % cols;
                let re = parse(parts[1 + 2 * k], fields[1 + 2 * k])?;
                let im = parse(parts[2 + 2 * k], fields[2 + 2 * k])?;
                m[(r, c)] = Complex64::new(re, im);
            }
            omegas.push(f_hz * TWO_PI);
            samples.push(m);
        }
        Self::new(omegas, samples).map_err(|e| ConfigError::Csv {
            path: path.into(),
            line: 1,
            message: e.to_string(),
        })
    }

    pub fn read_csv_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let file = std::fs::File::open(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(file), &path.display().to_string())
    }
}

fn parse_element_label(label: &str, kind: &str) -> Option<(usize, usize)> {
    let rest = label.strip_prefix(kind)?.strip_prefix('_')?;
    let digits: Vec<u32> = rest.chars().map(|c| c.to_digit(10)).collect::<Option<_>>()?;
    if digits.len() != 2 || digits[0] == 0 || digits[1] == 0 {
        return None;
    }
    Some((digits[0] as usize, digits[1] as usize))
}

/// Log-spaced grid in rad/s between two frequencies in Hz.
pub fn log_grid_hz(f_min: f64, f_max: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && f_min > 0.0 && f_max > f_min);
    let lo = (TWO_PI * f_min).ln();
    let hi = (TWO_PI * f_max).ln();
    (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
        .collect()
}
