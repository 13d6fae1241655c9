//! Time-averaged fringe images and stroboscopic phase maps.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DisplacementField, GridKind, SampleGrid};

/// Closure tolerance on the total winding around a ring, rad.
pub const CLOSURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalConfig {
    /// m
    pub wavelength: f64,
    /// rad/m; 4π/λ when omitted.
    #[serde(default)]
    pub sensitivity_factor: Option<f64>,
    /// Strobe pulse length as a fraction of the drive period.
    pub strobe_duty: f64,
    /// Average the snapshot over the strobe pulse instead of sampling instantaneously.
    #[serde(default)]
    pub strobe_blur: bool,
    /// Amplitudes above this are clipped before fringe synthesis, m.
    pub amplitude_clip: f64,
    /// Standard deviation of additive phase noise, rad; 0 disables.
    #[serde(default)]
    pub phase_noise: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self {
            wavelength: 532e-9,
            sensitivity_factor: None,
            strobe_duty: 0.05,
            strobe_blur: false,
            amplitude_clip: 10e-6,
            phase_noise: 0.0,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::Domain("wavelength must be positive".into()));
        }
        if let Some(k) = self.sensitivity_factor {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Domain("sensitivity_factor must be positive".into()));
            }
        }
        if !(self.strobe_duty > 0.0 && self.strobe_duty <= 0.2) {
            return Err(Error::Domain(format!(
                "strobe_duty must lie in (0, 0.2], got {}",
                self.strobe_duty
            )));
        }
        if !(self.amplitude_clip > 0.0) {
            return Err(Error::Domain("amplitude_clip must be positive".into()));
        }
        if !(self.phase_noise >= 0.0 && self.phase_noise.is_finite()) {
            return Err(Error::Domain("phase_noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity_factor.unwrap_or(4.0 * PI / self.wavelength)
    }

    /// Factor a finite strobe pulse applies to a sinusoid's instantaneous value,
    /// sin(πd)/(πd), or 1 for instantaneous strobing.
    pub fn strobe_gain(&self) -> f64 {
        if !self.strobe_blur {
            return 1.0;
        }
        let x = PI * self.strobe_duty;
        x.sin() / x
    }

    /// Amplitude of the first dark time-averaged fringe, j₀,₁/K.
    pub fn first_dark_fringe(&self) -> f64 {
        J0_FIRST_ZERO / self.sensitivity()
    }
}

/// First positive zero of J₀.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Normalized intensity per pixel; invalid pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeImage {
    pub grid: Arc<SampleGrid>,
    pub intensity: Vec<f64>,
}

/// Wrapped phase in (-π, π] per pixel; invalid pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub grid: Arc<SampleGrid>,
    pub phase: Vec<f64>,
    /// degrees
    pub strobe_phase_a: f64,
    /// degrees
    pub strobe_phase_b: f64,
}

/// Wraps into (-π, π].
pub fn wrap(phi: f64) -> f64 {
    let w = PI - (PI - phi).rem_euclid(TAU);
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Time-averaged intensity J₀(K·|a|)², 1 on nodal lines.
pub fn time_averaged(amplitude: &DisplacementField, optics: &OpticalConfig) -> Result<FringeImage> {
    optics.validate()?;
    let k = optics.sensitivity();
    let mask = &amplitude.grid.mask;
    if let Some(i) = amplitude
        .values
        .iter()
        .zip(mask)
        .position(|(v, &m)| m && !v.is_finite())
    {
        return Err(Error::Domain(format!("non-finite amplitude at pixel {i}")));
    }
    let clipped = amplitude
        .valid_values()
        .filter(|v| v.abs() > optics.amplitude_clip)
        .count();
    if clipped > 0 {
        log::warn!(
            "{clipped} pixels exceed the amplitude clip of {} m and were clipped",
            optics.amplitude_clip
        );
    }
    let intensity = amplitude
        .values
        .par_iter()
        .zip(mask.par_iter())
        .map(|(&a, &m)| {
            if !m {
                return f64::NAN;
            }
            let j = libm::j0(k * a.abs().min(optics.amplitude_clip));
            (j * j).min(1.0)
        })
        .collect();
    Ok(FringeImage {
        grid: Arc::clone(&amplitude.grid),
        intensity,
    })
}

/// Wrapped phase of K·(field_b − field_a).
pub fn stroboscopic(
    field_a: &DisplacementField,
    field_b: &DisplacementField,
    strobe_phase_a: f64,
    strobe_phase_b: f64,
    optics: &OpticalConfig,
) -> Result<PhaseMap> {
    optics.validate()?;
    if !field_a.same_grid(field_b) {
        return Err(Error::Domain("strobe fields do not share a grid".into()));
    }
    let k = optics.sensitivity();
    let phase = field_a
        .values
        .par_iter()
        .zip(field_b.values.par_iter())
        .zip(field_a.grid.mask.par_iter())
        .map(|((&a, &b), &m)| if m { wrap(k * (b - a)) } else { f64::NAN })
        .collect();
    Ok(PhaseMap {
        grid: Arc::clone(&field_a.grid),
        phase,
        strobe_phase_a,
        strobe_phase_b,
    })
}

impl PhaseMap {
    /// Adds zero-mean Gaussian noise of standard deviation `sigma` and rewraps.
    pub fn with_noise(&self, sigma: f64, rng: &mut impl Rng) -> Result<Self> {
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
        let mut out = self.clone();
        for (p, &m) in out.phase.iter_mut().zip(&self.grid.mask) {
            if m {
                *p = wrap(*p + normal.sample(rng));
            }
        }
        Ok(out)
    }

    /// 8-bit gray per pixel, round((φ mod 2π)/(2π)·255) so zero phase is black.
    pub fn to_gray(&self) -> Vec<u8> {
        self.phase
            .iter()
            .zip(&self.grid.mask)
            .map(|(&p, &m)| {
                if m {
                    (p.rem_euclid(TAU) / TAU * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect()
    }
}

impl FringeImage {
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    /// round(i·255) per valid pixel, 0 elsewhere.
    pub fn to_gray(&self) -> Vec<u8> {
        self.intensity
            .iter()
            .zip(&self.grid.mask)
            .map(|(&i, &m)| if m { (i * 255.0).round() as u8 } else { 0 })
            .collect()
    }
}

/// Unwraps each ring of a polar phase map and converts to displacement difference.
///
/// The 2π offset of a ring is fixed by taking its mean phase in (-π, π].
pub fn unwrap_to_displacement(map: &PhaseMap, optics: &OpticalConfig) -> Result<DisplacementField> {
    optics.validate()?;
    let (radii, n_theta) = match &map.grid.kind {
        GridKind::Polar { radii, n_theta } => (radii, *n_theta),
        GridKind::Cartesian { .. } => {
            return Err(Error::Domain("unwrapping needs a polar grid of closed circles".into()))
        }
    };
    let k = optics.sensitivity();
    let rings: Vec<Vec<f64>> = radii
        .par_iter()
        .enumerate()
        .map(|(row, &radius)| {
            let span = row * n_theta..(row + 1) * n_theta;
            if map.grid.mask[span.clone()].iter().any(|&m| !m) {
                return Err(Error::Unwrap {
                    radius,
                    reason: "circle leaves the valid annulus".into(),
                });
            }
            let ring = unwrap_ring(&map.phase[span], radius)?;
            Ok(ring.into_iter().map(|p| p / k).collect())
        })
        .collect::<Result<_>>()?;
    Ok(DisplacementField {
        grid: Arc::clone(&map.grid),
        values: rings.concat(),
    })
}

/// 1-D cumulative unwrap of a closed circle of wrapped phases.
pub fn unwrap_ring(wrapped: &[f64], radius: f64) -> Result<Vec<f64>> {
    if wrapped.is_empty() {
        return Ok(Vec::new());
    }
    if wrapped.iter().any(|p| !p.is_finite()) {
        return Err(Error::Unwrap {
            radius,
            reason: "non-finite phase on the path".into(),
        });
    }
    let mut out = Vec::with_capacity(wrapped.len());
    out.push(wrapped[0]);
    for w in wrapped.windows(2) {
        let prev = *out.last().unwrap();
        out.push(prev + wrap(w[1] - w[0]));
    }
    let winding = *out.last().unwrap() + wrap(wrapped[0] - wrapped[wrapped.len() - 1]) - out[0];
    if winding.abs() > CLOSURE_TOL {
        return Err(Error::Unwrap {
            radius,
            reason: format!("path winds by {:.3} rad (residue enclosed)", winding),
        });
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let shift = mean - wrap(mean);
    if shift != 0.0 {
        out.iter_mut().for_each(|p| *p -= shift);
    }
    Ok(out)
}
