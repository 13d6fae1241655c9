//! Circle sampling, mode-number detection, sinusoid fitting and strobe-phase tracking.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::DisplacementField;
use crate::holography::wrap;

pub const DEFAULT_CIRCLE_SAMPLES: usize = 360;

/// Amplitude CV below which a strobe sequence counts as traveling.
pub const TRAVELING_CV: f64 = 0.05;
/// Allowed relative error of the rotation rate against 1/n.
pub const TRAVELING_RATE_TOL: f64 = 0.10;
/// Allowed phase wander of a standing pattern, degrees (modulo 180°).
pub const STANDING_PHASE_TOL_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Simulation,
    Hologram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleSample {
    /// m
    pub radius: f64,
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
    pub source: SampleSource,
}

impl CircleSample {
    /// Uniform samples θ_j = 2πj/N.
    pub fn new(radius: f64, values: Vec<f64>, source: SampleSource) -> Result<Self> {
        let n = values.len();
        let theta = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
        Self::with_angles(radius, theta, values, source)
    }

    pub fn with_angles(radius: f64, theta: Vec<f64>, values: Vec<f64>, source: SampleSource) -> Result<Self> {
        if theta.len() != values.len() {
            return Err(Error::Sampling("angle and value counts differ".into()));
        }
        if theta.is_empty() {
            return Err(Error::Sampling("empty circle sample".into()));
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) || theta[0] < 0.0 || *theta.last().unwrap() >= TAU {
            return Err(Error::Sampling("angles must increase strictly within [0, 2π)".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampling("non-finite sample value".into()));
        }
        Ok(Self {
            radius,
            theta,
            values,
            source,
        })
    }

    pub fn from_fn(radius: f64, count: usize, source: SampleSource, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..count).map(|j| f(TAU * j as f64 / count as f64)).collect();
        Self::new(radius, values, source)
    }

    /// One ring of a polar field.
    pub fn from_ring(field: &DisplacementField, row: usize, source: SampleSource) -> Result<Self> {
        let values = field.ring(row)?.to_vec();
        let radius = match &field.grid.kind {
            crate::grid::GridKind::Polar { radii, .. } => radii[row],
            crate::grid::GridKind::Cartesian { .. } => unreachable!("ring() rejects cartesian grids"),
        };
        Self::new(radius, values, source)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The pattern rotated by `delta` rad: value at θ moves to θ + δ.
    pub fn rotated(&self, delta: f64) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = self
            .theta
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| ((t + delta).rem_euclid(TAU), v))
            .collect();
        for p in &mut pairs {
            if p.0 >= TAU {
                p.0 = 0.0;
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (theta, values) = pairs.into_iter().unzip();
        Self::with_angles(self.radius, theta, values, self.source)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    fn scale(&self) -> f64 {
        self.values.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    }
}

/// Harmonic with the largest circular Fourier coefficient of the centred sample,
/// searched over 1..=len/8. Ties go to the lower harmonic.
pub fn detect_mode_number(sample: &CircleSample) -> Result<u32> {
    let n_max = sample.len() / 8;
    if n_max == 0 {
        return Err(Error::Sampling(format!(
            "{} samples cannot resolve any harmonic (need ≥ 8 per harmonic)",
            sample.len()
        )));
    }
    let mean = sample.values.iter().sum::<f64>() / sample.len() as f64;
    let centred: Vec<f64> = sample.values.iter().map(|v| v - mean).collect();
    let mut best = (0u32, 0.0f64);
    for n in 1..=n_max as u32 {
        let c: Complex64 = sample
            .theta
            .iter()
            .zip(&centred)
            .map(|(&t, &v)| v * Complex64::from_polar(1.0, -(n as f64) * t))
            .sum();
        let mag = 2.0 * c.norm() / sample.len() as f64;
        if mag > best.1 * (1.0 + 1e-9) {
            best = (n, mag);
        }
    }
    let scale = sample.scale();
    if best.0 == 0 || best.1 <= 1e-10 * scale {
        return Err(Error::NoMode("no harmonic rises above the noise floor".into()));
    }
    Ok(best.0)
}

/// Parameters of f = A·sin(nθ + φ) + δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    /// m
    pub amplitude: f64,
    pub n: u32,
    /// rad, in (-π, π]
    pub phase: f64,
    /// m
    pub offset: f64,
    /// m
    pub rms_residual: f64,
    /// Variances of (A, n, φ, δ); n is exact.
    pub covariance: [f64; 4],
}

/// Closed-form least squares on {sin nθ, cos nθ, 1}.
pub fn fit_sinusoid(sample: &CircleSample, n: u32) -> Result<FitResult> {
    if n == 0 {
        return Err(Error::Domain("mode number must be at least 1".into()));
    }
    let count = sample.len();
    if count < 4 || count < 2 * n as usize + 2 {
        return Err(Error::Sampling(format!(
            "{count} samples under-sample harmonic {n} (need ≥ {})",
            (2 * n as usize + 2).max(4)
        )));
    }
    let nf = n as f64;
    let rows: Vec<[f64; 3]> = sample
        .theta
        .iter()
        .map(|&t| {
            let (s, c) = (nf * t).sin_cos();
            [s, c, 1.0]
        })
        .collect();

    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for (row, &y) in rows.iter().zip(&sample.values) {
        for i in 0..3 {
            xty[i] += row[i] * y;
            for j in 0..3 {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    let (coef, inv) = match solve_normal(&xtx, &xty) {
        Some(v) => v,
        None => solve_qr(&rows, &sample.values)?,
    };
    let (a, b, delta) = (coef[0], coef[1], coef[2]);

    let residuals: Vec<f64> = rows
        .iter()
        .zip(&sample.values)
        .map(|(r, &y)| y - (a * r[0] + b * r[1] + delta * r[2]))
        .collect();
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    let rms_residual = (ss / count as f64).sqrt();

    let mut amplitude = a.hypot(b);
    let mut phase = b.atan2(a);
    if amplitude <= 1e-12 * sample.scale() {
        amplitude = 0.0;
        phase = 0.0;
    }
    if phase <= -PI {
        phase += TAU;
    }

    let sigma2 = if count > 3 { ss / (count - 3) as f64 } else { 0.0 };
    let (va, vb, vd) = (sigma2 * inv[(0, 0)], sigma2 * inv[(1, 1)], sigma2 * inv[(2, 2)]);
    let covariance = if amplitude > 0.0 {
        let a2 = amplitude * amplitude;
        [
            (a * a * va + b * b * vb) / a2,
            0.0,
            (b * b * va + a * a * vb) / (a2 * a2),
            vd,
        ]
    } else {
        [va.max(vb), 0.0, f64::INFINITY, vd]
    };

    Ok(FitResult {
        amplitude,
        n,
        phase,
        offset: delta,
        rms_residual,
        covariance,
    })
}

fn solve_normal(xtx: &Matrix3<f64>, xty: &Vector3<f64>) -> Option<(Vector3<f64>, Matrix3<f64>)> {
    let chol = xtx.cholesky()?;
    let diag = xtx.diagonal();
    let cond_guard = chol.l().diagonal().iter().fold(f64::MAX, |a, &v| a.min(v * v)) / diag.max();
    if cond_guard < 1e-10 {
        return None;
    }
    Some((chol.solve(xty), chol.inverse()))
}

fn solve_qr(rows: &[[f64; 3]], y: &[f64]) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let x = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    let qr = x.clone().qr();
    let r = qr.r();
    if r.diagonal().iter().any(|v| v.abs() < 1e-12) {
        return Err(Error::Sampling("sample angles do not determine the fit".into()));
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let sol = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Sampling("singular fit".into()))?;
    let rinv = r
        .try_inverse()
        .ok_or_else(|| Error::Sampling("singular fit".into()))?;
    let inv = &rinv * rinv.transpose();
    Ok((
        Vector3::new(sol[0], sol[1], sol[2]),
        Matrix3::from_fn(|i, j| inv[(i, j)]),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    Traveling,
    Standing,
    Mixed,
}

impl WaveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WaveKind::Traveling => "traveling",
            WaveKind::Standing => "standing",
            WaveKind::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrobeTrack {
    pub n: u32,
    pub classification: WaveKind,
    /// Spatial degrees of crest rotation per strobe degree.
    pub rotation_rate: f64,
    /// Crest rotation of each fit relative to the first, degrees.
    pub spatial_shifts_deg: Vec<f64>,
    pub amplitude_cv: f64,
    pub standing_wave_ratio: f64,
}

/// Classifies a strobe sequence of fits `(strobe phase in degrees, fit)`.
///
/// Crest rotation is -Δφ/n. Traveling: amplitude CV below 5% and rotation rate within
/// 10% of 1/n in magnitude. Standing: φ constant within ±5° modulo 180° and the signed
/// amplitude following a sinusoid in strobe phase. Anything else is mixed.
pub fn track_strobe_phase(fits: &[(f64, FitResult)]) -> Result<StrobeTrack> {
    if fits.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 strobe phases, got {}", fits.len())));
    }
    let n = fits[0].1.n;
    if let Some((_, f)) = fits.iter().find(|(_, f)| f.n != n) {
        return Err(Error::Domain(format!("fits mix mode numbers {n} and {}", f.n)));
    }
    let nf = n as f64;
    let strobe: Vec<f64> = fits.iter().map(|(s, _)| *s).collect();
    let amps: Vec<f64> = fits.iter().map(|(_, f)| f.amplitude).collect();
    let phases: Vec<f64> = fits.iter().map(|(_, f)| f.phase).collect();

    let mean_a = amps.iter().sum::<f64>() / amps.len() as f64;
    let var_a = amps.iter().map(|a| (a - mean_a).powi(2)).sum::<f64>() / amps.len() as f64;
    let amplitude_cv = if mean_a > 0.0 { var_a.sqrt() / mean_a } else { f64::INFINITY };
    let (a_min, a_max) = amps.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    let standing_wave_ratio = if a_min > 0.0 { a_max / a_min } else { f64::INFINITY };

    // phase deviations from the first fit, modulo π
    let half_turn: Vec<f64> = phases.iter().map(|p| 0.5 * wrap(2.0 * (p - phases[0]))).collect();
    let phase_fixed = half_turn
        .iter()
        .all(|d| d.abs().to_degrees() <= STANDING_PHASE_TOL_DEG);

    let standing = phase_fixed && sinusoidal_amplitude(&strobe, &amps, &phases);
    let unwrapped = if standing {
        half_turn
    } else {
        let mut u = vec![0.0];
        for w in phases.windows(2) {
            let prev = *u.last().unwrap();
            u.push(prev + wrap(w[1] - w[0]));
        }
        u
    };
    let spatial: Vec<f64> = unwrapped.iter().map(|d| 0.0 - d.to_degrees() / nf).collect();
    let rotation_rate = slope(&strobe, &spatial);

    let traveling = amplitude_cv < TRAVELING_CV
        && (rotation_rate.abs() - 1.0 / nf).abs() <= TRAVELING_RATE_TOL / nf;
    let classification = if traveling {
        WaveKind::Traveling
    } else if standing {
        WaveKind::Standing
    } else {
        WaveKind::Mixed
    };
    Ok(StrobeTrack {
        n,
        classification,
        rotation_rate,
        spatial_shifts_deg: spatial,
        amplitude_cv,
        standing_wave_ratio,
    })
}

/// Whether A·sign(φ branch) fits c₀ + c₁cos s + c₂sin s to 10% of the peak amplitude.
fn sinusoidal_amplitude(strobe_deg: &[f64], amps: &[f64], phases: &[f64]) -> bool {
    let peak = amps.iter().fold(0.0f64, |a, &v| a.max(v));
    if peak == 0.0 {
        return false;
    }
    let signed: Vec<f64> = amps
        .iter()
        .zip(phases)
        .map(|(&a, &p)| if wrap(p - phases[0]).abs() > PI / 2.0 { -a } else { a })
        .collect();
    let x = DMatrix::from_fn(amps.len(), 3, |i, j| {
        let s = strobe_deg[i].to_radians();
        [1.0, s.cos(), s.sin()][j]
    });
    let y = DVector::from_column_slice(&signed);
    let Ok(sol) = x.clone().svd(true, true).solve(&y, 1e-12) else {
        return false;
    };
    let resid = (&x * sol - &y).norm() / (amps.len() as f64).sqrt();
    resid <= 0.1 * peak
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// max over fits of rms residual / A.
pub fn asymmetry_index(fits: &[FitResult]) -> Result<f64> {
    if fits.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 strobe phases, got {}", fits.len())));
    }
    let mut index = 0.0f64;
    for f in fits {
        if !(f.amplitude > 0.0) {
            return Err(Error::Domain("asymmetry index undefined for zero fitted amplitude".into()));
        }
        index = index.max(f.rms_residual / f.amplitude);
    }
    Ok(index)
}

/// `strobe_phase_deg,n,A_m,phi_rad,delta_m,residual_m` rows.
pub fn fits_csv(fits: &[(f64, FitResult)]) -> String {
    let mut out = String::from("strobe_phase_deg,n,A_m,phi_rad,delta_m,residual_m\n");
    for (s, f) in fits {
        let _ = writeln!(
            out,
            "{s},{},{},{},{},{}",
            f.n, f.amplitude, f.phase, f.offset, f.rms_residual
        );
    }
    out
}

/// Plain-text summary of a strobe track and its asymmetry index.
pub fn summary(track: &StrobeTrack, asymmetry: Option<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode_number {}", track.n);
    let _ = writeln!(out, "classification {}", track.classification.as_str());
    let _ = writeln!(out, "rotation_rate_deg_per_strobe_deg {}", track.rotation_rate);
    let _ = writeln!(out, "amplitude_cv {}", track.amplitude_cv);
    let _ = writeln!(out, "standing_wave_ratio {}", track.standing_wave_ratio);
    let shifts: Vec<String> = track.spatial_shifts_deg.iter().map(|s| format!("{s}")).collect();
    let _ = writeln!(out, "spatial_shifts_deg {}", shifts.join(" "));
    match asymmetry {
        Some(a) => {
            let _ = writeln!(out, "asymmetry_index {a}");
        }
        None => {
            let _ = writeln!(out, "asymmetry_index undefined");
        }
    }
    out
}
