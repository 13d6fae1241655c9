//! Damped modal time response under two-phase electrode forcing.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Material;
use crate::grid::{DisplacementField, SampleGrid};
use crate::modal::{ModalBasis, Mode, Orientation};

/// Fraction of the steady amplitude used as the settling band.
pub const SETTLING_BAND: f64 = 0.05;

const INTEGRAL_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseLayout {
    /// Sectors forcing cos(n_d θ) with sin(ωt) and sin(n_d θ) with -cos(ωt).
    #[default]
    Quadrature,
    /// Only the cos(n_d θ) sector, driven with sin(ωt).
    SinglePhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    /// Hz
    pub drive_frequency: f64,
    /// V
    pub peak_to_peak_voltage: f64,
    /// Electrode force per volt, N/V, spread uniformly over the electrode annulus.
    pub force_per_volt: f64,
    pub electrode_harmonic: u32,
    #[serde(default)]
    pub phase_layout: PhaseLayout,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            drive_frequency: 22_360.0,
            peak_to_peak_voltage: 100.0,
            force_per_volt: 1e-4,
            electrode_harmonic: 4,
            phase_layout: PhaseLayout::Quadrature,
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.drive_frequency > 0.0 && self.drive_frequency.is_finite()) {
            return Err(Error::Domain(format!(
                "drive_frequency must be positive, got {}",
                self.drive_frequency
            )));
        }
        if !(self.peak_to_peak_voltage > 0.0 && self.peak_to_peak_voltage.is_finite()) {
            return Err(Error::Domain(format!(
                "peak_to_peak_voltage must be positive, got {}",
                self.peak_to_peak_voltage
            )));
        }
        if !(self.force_per_volt >= 0.0 && self.force_per_volt.is_finite()) {
            return Err(Error::Domain("force_per_volt must be finite and non-negative".into()));
        }
        if self.electrode_harmonic == 0 {
            return Err(Error::Domain("electrode_harmonic must be at least 1".into()));
        }
        Ok(())
    }

    pub fn angular_frequency(&self) -> f64 {
        TAU * self.drive_frequency
    }
}

/// Mode outside the flexural basis, rendered with a stand-in shape.
///
/// The default is a 6-lobed proxy for the in-plane lateral mode. Its shape is not a
/// physical out-of-plane displacement and is meant for pattern comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalMode {
    pub label: String,
    /// Hz
    pub frequency: f64,
    pub damping_ratio: f64,
    pub lobes: u32,
    /// Angular offset of the lobe pattern, rad.
    pub rotation: f64,
    /// Gain used by `mixed_response`.
    #[serde(default = "one")]
    pub static_gain: f64,
    /// Modal force per volt of phase A used by `respond`.
    #[serde(default)]
    pub force_per_volt: f64,
}

fn one() -> f64 {
    1.0
}

impl ExternalMode {
    /// Lateral-mode placeholder: 6 lobes rotated half a lobe off the cos(6θ) mode.
    pub fn lateral_proxy(frequency: f64, damping_ratio: f64) -> Self {
        Self {
            label: "lateral proxy (non-physical)".into(),
            frequency,
            damping_ratio,
            lobes: 6,
            rotation: PI / 12.0,
            static_gain: 1.0,
            force_per_volt: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::Domain(format!(
                "external mode frequency must be positive, got {}",
                self.frequency
            )));
        }
        if !(self.damping_ratio > 0.0 && self.damping_ratio < 1.0) {
            return Err(Error::Domain("external mode damping must lie in (0, 1)".into()));
        }
        if self.lobes == 0 {
            return Err(Error::Domain("external mode needs at least one lobe".into()));
        }
        Ok(())
    }

    /// Linear radial ramp from the clamp to the edge times cos(lobes·(θ - rotation)),
    /// peak value 1.
    pub fn shape(&self, r: f64, theta: f64, clamped_radius: f64, outer_radius: f64) -> f64 {
        let ramp = ((r - clamped_radius) / (outer_radius - clamped_radius)).clamp(0.0, 1.0);
        ramp * (self.lobes as f64 * (theta - self.rotation)).cos()
    }
}

/// Lightly damped unit-mass oscillator q̈ + 2ζω q̇ + ω² q = f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillator {
    /// rad/s
    pub omega: f64,
    pub zeta: f64,
}

impl Oscillator {
    pub fn new(frequency: f64, zeta: f64) -> Self {
        Self {
            omega: TAU * frequency,
            zeta,
        }
    }

    /// Receptance 1/(ω₀² - ω² + 2iζω₀ω).
    pub fn receptance(&self, omega: f64) -> Complex64 {
        Complex64::new(self.omega * self.omega - omega * omega, 2.0 * self.zeta * self.omega * omega).inv()
    }

    /// Exact free-response map of (q, q̇) over `dt`.
    pub fn transition(&self, dt: f64) -> [[f64; 2]; 2] {
        let sigma = self.zeta * self.omega;
        let wd = self.omega * (1.0 - self.zeta * self.zeta).sqrt();
        let e = (-sigma * dt).exp();
        let (s, c) = (wd * dt).sin_cos();
        [
            [e * (c + sigma * s / wd), e * s / wd],
            [-e * self.omega * self.omega * s / wd, e * (c - sigma * s / wd)],
        ]
    }

    /// ½(q̇² + ω² q²)
    pub fn energy(&self, state: [f64; 2]) -> f64 {
        0.5 * (state[1] * state[1] + self.omega * self.omega * state[0] * state[0])
    }
}

fn step(t: &[[f64; 2]; 2], s: [f64; 2]) -> [f64; 2] {
    [t[0][0] * s[0] + t[0][1] * s[1], t[1][0] * s[0] + t[1][1] * s[1]]
}

/// Free decay from `(q0, v0)`, `steps + 1` states.
pub fn free_decay(osc: &Oscillator, initial: [f64; 2], dt: f64, steps: usize) -> Vec<[f64; 2]> {
    let t = osc.transition(dt);
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = initial;
    out.push(s);
    for _ in 0..steps {
        s = step(&t, s);
        out.push(s);
    }
    out
}

/// Modal basis plus damping and any external modes.
#[derive(Debug, Clone)]
pub struct ModalModel {
    pub basis: ModalBasis,
    pub default_damping: f64,
    pub damping_overrides: BTreeMap<u32, f64>,
    pub external: Vec<ExternalMode>,
}

impl ModalModel {
    pub fn new(basis: ModalBasis, material: &Material) -> Result<Self> {
        material.validate()?;
        Self::build(basis, material.modal_damping_ratio, material.damping_overrides.clone())
    }

    pub fn with_uniform_damping(basis: ModalBasis, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(Error::Domain(format!("damping ratio must lie in (0, 1), got {zeta}")));
        }
        Self::build(basis, zeta, BTreeMap::new())
    }

    fn build(basis: ModalBasis, zeta: f64, overrides: BTreeMap<u32, f64>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::Domain("modal basis is empty".into()));
        }
        Ok(Self {
            basis,
            default_damping: zeta,
            damping_overrides: overrides,
            external: Vec::new(),
        })
    }

    pub fn with_external(mut self, mode: ExternalMode) -> Result<Self> {
        mode.validate()?;
        self.external.push(mode);
        Ok(self)
    }

    pub fn damping_for(&self, n: u32) -> f64 {
        self.damping_overrides.get(&n).copied().unwrap_or(self.default_damping)
    }

    pub fn clamped_radius(&self) -> f64 {
        self.basis.modes[0].boundary.clamped_radius
    }

    /// Basis oscillators followed by external ones.
    pub fn oscillators(&self) -> Vec<Oscillator> {
        self.basis
            .modes
            .iter()
            .map(|m| Oscillator::new(m.frequency, self.damping_for(m.n)))
            .chain(self.external.iter().map(|e| Oscillator::new(e.frequency, e.damping_ratio)))
            .collect()
    }

    pub fn max_frequency(&self) -> f64 {
        self.external
            .iter()
            .map(|e| e.frequency)
            .fold(self.basis.max_frequency(), f64::max)
    }

    /// Upper bound on the time step, 1/(20 f_max).
    pub fn time_step_bound(&self) -> f64 {
        1.0 / (20.0 * self.max_frequency())
    }

    /// dt default: 1/(40 f_drive), tightened to the stability bound when needed.
    pub fn default_time_step(&self, drive: &DriveConfig) -> f64 {
        (1.0 / (40.0 * drive.drive_frequency)).min(self.time_step_bound())
    }

    /// Shape values of every oscillator at one point.
    pub fn shapes_at(&self, r: f64, theta: f64) -> Vec<f64> {
        let (rc, ro) = (self.clamped_radius(), self.basis.outer_radius);
        self.basis
            .modes
            .iter()
            .map(|m| m.shape(r, theta))
            .chain(self.external.iter().map(|e| e.shape(r, theta, rc, ro)))
            .collect()
    }

    fn check_point(&self, r: f64) -> Result<()> {
        if r >= self.basis.inner_radius && r <= self.basis.outer_radius {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "point at r = {r} m outside the annulus [{}, {}]",
                self.basis.inner_radius, self.basis.outer_radius
            )))
        }
    }
}

/// Modal force phasors F̂ with f(t) = Re(F̂ e^{iωt}), basis then external.
pub fn modal_forces(model: &ModalModel, drive: &DriveConfig) -> Result<Vec<Complex64>> {
    drive.validate()?;
    let nd = drive.electrode_harmonic;
    if !model.basis.modes.iter().any(|m| m.n == nd) {
        return Err(Error::Domain(format!("electrode harmonic n = {nd} absent from the basis")));
    }
    let half = 0.5 * drive.peak_to_peak_voltage;
    let rc = model.clamped_radius();
    let ro = model.basis.outer_radius;
    let electrode_area = PI * (ro * ro - rc * rc);
    // sin(ωt) -> -i, -cos(ωt) -> -1
    let phase_a = Complex64::new(0.0, -half);
    let phase_b = Complex64::new(-half, 0.0);

    let mut forces: Vec<Complex64> = model
        .basis
        .modes
        .par_iter()
        .map(|m| {
            if m.n != nd {
                return Complex64::new(0.0, 0.0);
            }
            let voltage = match (m.orientation, drive.phase_layout) {
                (Orientation::Cosine, _) => phase_a,
                (Orientation::Sine, PhaseLayout::Quadrature) => phase_b,
                (Orientation::Sine, PhaseLayout::SinglePhase) => return Complex64::new(0.0, 0.0),
            };
            let projection = PI * m.profile.weighted_integral(rc, ro, INTEGRAL_ORDER);
            voltage * (drive.force_per_volt / electrode_area * projection)
        })
        .collect();
    forces.extend(model.external.iter().map(|e| phase_a * e.force_per_volt));
    Ok(forces)
}

/// Steady-state phasors of every oscillator at the drive frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub drive_frequency: f64,
    /// q_k(t) = Re(Q̂_k e^{iωt}), basis then external.
    pub phasors: Vec<Complex64>,
}

impl SteadyState {
    /// Modal coordinates at drive phase `phase` (rad), i.e. ωt = phase.
    pub fn coordinates(&self, phase: f64) -> Vec<f64> {
        let rot = Complex64::from_polar(1.0, phase);
        self.phasors.iter().map(|q| (q * rot).re).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.phasors.iter().map(|q| q.norm()).collect()
    }

    /// Steady displacement phasor at one point.
    pub fn point_phasor(&self, model: &ModalModel, r: f64, theta: f64) -> Result<Complex64> {
        model.check_point(r)?;
        Ok(model
            .shapes_at(r, theta)
            .iter()
            .zip(&self.phasors)
            .map(|(s, q)| q * s)
            .sum())
    }

    /// Instantaneous steady field at a strobe phase of the drive cycle, degrees.
    pub fn snapshot(&self, model: &ModalModel, grid: Arc<SampleGrid>, strobe_phase_deg: f64) -> DisplacementField {
        field_from_coordinates(model, &self.coordinates(strobe_phase_deg.to_radians()), grid)
    }

    /// Vibration amplitude |Σ Q̂_k Φ_k| per pixel.
    pub fn amplitude_field(&self, model: &ModalModel, grid: Arc<SampleGrid>) -> DisplacementField {
        let active = active_terms(&self.phasors);
        let (rc, ro) = (model.clamped_radius(), model.basis.outer_radius);
        let (lo, hi) = (model.basis.inner_radius, model.basis.outer_radius);
        DisplacementField::from_fn(grid, |r, t| {
            if r < lo || r > hi {
                return f64::NAN;
            }
            active
                .iter()
                .map(|&k| self.phasors[k] * shape_of(model, k, r, t, rc, ro))
                .sum::<Complex64>()
                .norm()
        })
    }
}

pub fn steady_state(model: &ModalModel, drive: &DriveConfig) -> Result<SteadyState> {
    let forces = modal_forces(model, drive)?;
    let omega = drive.angular_frequency();
    let phasors = model
        .oscillators()
        .iter()
        .zip(&forces)
        .map(|(o, f)| f * o.receptance(omega))
        .collect();
    Ok(SteadyState {
        drive_frequency: drive.drive_frequency,
        phasors,
    })
}

fn active_terms(values: &[Complex64]) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
        .map(|(k, _)| k)
        .collect()
}

fn shape_of(model: &ModalModel, k: usize, r: f64, theta: f64, rc: f64, ro: f64) -> f64 {
    let nb = model.basis.len();
    if k < nb {
        model.basis.modes[k].shape(r, theta)
    } else {
        model.external[k - nb].shape(r, theta, rc, ro)
    }
}

/// Σ q_k Φ_k(r, θ) on a grid; `coords` ordered like `ModalModel::oscillators`.
pub fn field_from_coordinates(model: &ModalModel, coords: &[f64], grid: Arc<SampleGrid>) -> DisplacementField {
    let active: Vec<usize> = coords
        .iter()
        .enumerate()
        .filter(|(_, &q)| q != 0.0)
        .map(|(k, _)| k)
        .collect();
    let (rc, ro) = (model.clamped_radius(), model.basis.outer_radius);
    let (lo, hi) = (model.basis.inner_radius, model.basis.outer_radius);
    DisplacementField::from_fn(grid, |r, t| {
        if r < lo || r > hi {
            return f64::NAN;
        }
        active.iter().map(|&k| coords[k] * shape_of(model, k, r, t, rc, ro)).sum()
    })
}

/// Sampled modal response from rest.
///
/// Each coordinate is the steady phasor response plus a homogeneous part that cancels
/// it at t = 0; the homogeneous state is advanced with the exact transition matrix.
#[derive(Debug, Clone)]
pub struct ModalTrajectory {
    pub times: Vec<f64>,
    pub dt: f64,
    pub steady: SteadyState,
    oscillators: Vec<Oscillator>,
    /// Homogeneous (q, q̇) per oscillator per sample.
    homogeneous: Vec<Vec<[f64; 2]>>,
}

impl ModalTrajectory {
    pub fn mode_count(&self) -> usize {
        self.oscillators.len()
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn particular(&self, k: usize, t: f64) -> [f64; 2] {
        let omega = TAU * self.steady.drive_frequency;
        let z = self.steady.phasors[k] * Complex64::from_polar(1.0, omega * t);
        [z.re, -omega * z.im]
    }

    /// q_k at sample `j`.
    pub fn q(&self, k: usize, j: usize) -> f64 {
        self.particular(k, self.times[j])[0] + self.homogeneous[k][j][0]
    }

    /// (q_k, q̇_k) at sample `j`.
    pub fn state(&self, k: usize, j: usize) -> [f64; 2] {
        let p = self.particular(k, self.times[j]);
        let h = self.homogeneous[k][j];
        [p[0] + h[0], p[1] + h[1]]
    }

    pub fn history(&self, k: usize) -> Vec<f64> {
        (0..self.times.len()).map(|j| self.q(k, j)).collect()
    }

    pub fn steady_amplitude(&self, k: usize) -> f64 {
        self.steady.phasors[k].norm()
    }

    /// Exact modal coordinates at any time within the span.
    pub fn coordinates_at(&self, t: f64) -> Result<Vec<f64>> {
        let end = self.duration();
        if !(t >= 0.0 && t <= end * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("t = {t} s outside the trajectory span [0, {end}]")));
        }
        let j = ((t / self.dt).floor() as usize).min(self.times.len() - 1);
        let tau = t - self.times[j];
        Ok((0..self.mode_count())
            .map(|k| {
                let h = if tau == 0.0 {
                    self.homogeneous[k][j]
                } else {
                    step(&self.oscillators[k].transition(tau), self.homogeneous[k][j])
                };
                self.particular(k, t)[0] + h[0]
            })
            .collect())
    }
}

/// Integrates every oscillator from rest under the drive.
pub fn respond(model: &ModalModel, drive: &DriveConfig, duration: f64, dt: f64) -> Result<ModalTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let bound = model.time_step_bound();
    if dt > bound {
        return Err(Error::TimeStep { dt, bound });
    }
    if !(duration >= 5.0 * dt && duration.is_finite()) {
        return Err(Error::Domain(format!("duration {duration} s shorter than 5 time steps")));
    }
    let steady = steady_state(model, drive)?;
    let oscillators = model.oscillators();
    let steps = (duration / dt * (1.0 + 1e-12)).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * dt).collect();
    let omega = drive.angular_frequency();

    let homogeneous = oscillators
        .par_iter()
        .zip(steady.phasors.par_iter())
        .map(|(osc, q)| {
            if q.re == 0.0 && q.im == 0.0 {
                return vec![[0.0; 2]; steps + 1];
            }
            free_decay(osc, [-q.re, omega * q.im], dt, steps)
        })
        .collect();

    Ok(ModalTrajectory {
        times,
        dt,
        steady,
        oscillators,
        homogeneous,
    })
}

/// Displacement field at time `t`.
pub fn field_at(model: &ModalModel, traj: &ModalTrajectory, t: f64, grid: Arc<SampleGrid>) -> Result<DisplacementField> {
    let coords = traj.coordinates_at(t)?;
    Ok(field_from_coordinates(model, &coords, grid))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub r: f64,
    pub theta: f64,
    pub samples: Vec<f64>,
    /// Rolling max of |w| over one drive period centred on each sample.
    pub envelope: Vec<f64>,
    pub steady_amplitude: f64,
    /// First time after which the envelope stays within ±5% of the steady amplitude.
    pub settling_time: Option<f64>,
}

pub fn probe(model: &ModalModel, traj: &ModalTrajectory, points: &[(f64, f64)]) -> Result<Vec<ProbeSeries>> {
    for &(r, _) in points {
        model.check_point(r)?;
    }
    let half = ((0.5 / (traj.steady.drive_frequency * traj.dt)).round() as usize).max(1);
    points
        .par_iter()
        .map(|&(r, theta)| {
            let shapes = model.shapes_at(r, theta);
            let active: Vec<usize> = (0..shapes.len()).filter(|&k| shapes[k] != 0.0).collect();
            let samples: Vec<f64> = (0..traj.times.len())
                .map(|j| active.iter().map(|&k| shapes[k] * traj.q(k, j)).sum())
                .collect();
            let steady_amplitude = active
                .iter()
                .map(|&k| traj.steady.phasors[k] * shapes[k])
                .sum::<Complex64>()
                .norm();
            let envelope = rolling_envelope(&samples, half);
            let settling_time = settling_index(&envelope, steady_amplitude, half, SETTLING_BAND)
                .map(|j| traj.times[j]);
            Ok(ProbeSeries {
                r,
                theta,
                samples,
                envelope,
                steady_amplitude,
                settling_time,
            })
        })
        .collect()
}

/// Centred rolling max of |x| over `2·half + 1` samples, truncated at the ends.
pub fn rolling_envelope(x: &[f64], half: usize) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let lo = j.saturating_sub(half);
            let hi = (j + half + 1).min(x.len());
            x[lo..hi].iter().fold(0.0f64, |a, v| a.max(v.abs()))
        })
        .collect()
}

/// First sample index from which the envelope stays inside the band. Only samples
/// with a complete window count; `None` if the band is never held.
fn settling_index(envelope: &[f64], steady: f64, half: usize, band: f64) -> Option<usize> {
    if !(steady > 0.0) || envelope.len() <= 2 * half + 1 {
        return None;
    }
    let last = envelope.len() - 1 - half;
    let outside = |e: f64| (e - steady).abs() > band * steady;
    match (0..=last).rev().find(|&j| outside(envelope[j])) {
        None => Some(0),
        Some(j) if j == last => None,
        Some(j) => Some(j + 1),
    }
}

/// ζ whose free envelope e^{-ζωt} decays to `band` at `settling_time`, ω = 2πf.
///
/// With band = 0.05 this is the ζ for which a resonant drive from rest reaches 95% of
/// steady state at `settling_time`. The classic 4/(ζω) rule corresponds to a band of
/// e⁻⁴ ≈ 1.8%.
pub fn damping_for_settling(settling_time: f64, drive_frequency: f64, band: f64) -> Result<f64> {
    if !(settling_time > 0.0 && drive_frequency > 0.0) {
        return Err(Error::Domain("settling time and frequency must be positive".into()));
    }
    if !(band > 0.0 && band < 1.0) {
        return Err(Error::Domain(format!("settling band must lie in (0, 1), got {band}")));
    }
    let zeta = (1.0 / band).ln() / (TAU * drive_frequency * settling_time);
    if zeta >= 1.0 {
        return Err(Error::Domain(format!("settling requires overdamping (ζ = {zeta})")));
    }
    Ok(zeta)
}

/// Returns a `force_per_volt` giving steady amplitude `target` at `(r, θ)`.
pub fn calibrate_force_per_volt(
    model: &ModalModel,
    drive: &DriveConfig,
    point: (f64, f64),
    target: f64,
) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Domain("target amplitude must be positive".into()));
    }
    let unit = DriveConfig {
        force_per_volt: 1.0,
        ..drive.clone()
    };
    let amplitude = steady_state(model, &unit)?
        .point_phasor(model, point.0, point.1)?
        .norm();
    if amplitude == 0.0 {
        return Err(Error::Domain(format!(
            "drive produces no motion at r = {} m, θ = {} rad",
            point.0, point.1
        )));
    }
    Ok(target / amplitude)
}

/// Lorentzian magnitude 1/√((ω₀² - ω²)² + (2ζω₀ω)²).
pub fn lorentzian(natural_frequency: f64, zeta: f64, drive_frequency: f64) -> f64 {
    Oscillator::new(natural_frequency, zeta)
        .receptance(TAU * drive_frequency)
        .norm()
}

#[derive(Debug, Clone)]
pub struct MixedPattern {
    /// (basis mode, external mode)
    pub weights: [f64; 2],
    pub field: DisplacementField,
    /// Each component alone, scaled to unit peak.
    pub components: [DisplacementField; 2],
}

/// Superposes a basis mode and an external mode weighted by their Lorentzian
/// magnitudes at the drive frequency. Both shapes are scaled to unit peak first so the
/// weights alone set the mix; the basis mode has unit static gain.
pub fn mixed_response(
    model: &ModalModel,
    mode: &Mode,
    external: &ExternalMode,
    drive_frequency: f64,
    grid: Arc<SampleGrid>,
) -> Result<MixedPattern> {
    external.validate()?;
    if !(drive_frequency > 0.0 && drive_frequency.is_finite()) {
        return Err(Error::Domain("drive frequency must be positive".into()));
    }
    let (f_lo, f_hi) = (mode.frequency.min(external.frequency), mode.frequency.max(external.frequency));
    if drive_frequency < 0.5 * f_lo || drive_frequency > 1.5 * f_hi {
        log::warn!(
            "drive at {drive_frequency} Hz is far from both resonances ({f_lo}, {f_hi} Hz)"
        );
    }
    let w_mode = lorentzian(mode.frequency, model.damping_for(mode.n), drive_frequency);
    let w_ext = external.static_gain * lorentzian(external.frequency, external.damping_ratio, drive_frequency);

    let peak = mode.profile.values.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::Domain("mode profile is identically zero".into()));
    }
    let (rc, ro) = (model.clamped_radius(), model.basis.outer_radius);
    let (lo, hi) = (model.basis.inner_radius, model.basis.outer_radius);
    let inside = move |r: f64| r >= lo && r <= hi;
    let a = DisplacementField::from_fn(grid.clone(), |r, t| {
        if inside(r) {
            mode.shape(r, t) / peak
        } else {
            f64::NAN
        }
    });
    let b = DisplacementField::from_fn(grid.clone(), |r, t| {
        if inside(r) {
            external.shape(r, t, rc, ro)
        } else {
            f64::NAN
        }
    });
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| w_mode * x + w_ext * y)
        .collect();
    Ok(MixedPattern {
        weights: [w_mode, w_ext],
        field: DisplacementField { grid, values },
        components: [a, b],
    })
}

/// Angular position (rad, in [0, 2π/n)) of the crest of the n-th harmonic on a ring of
/// uniformly spaced samples.
pub fn crest_angle(values: &[f64], n: u32) -> f64 {
    let len = values.len() as f64;
    let c: Complex64 = values
        .iter()
        .enumerate()
        .map(|(j, &v)| v * Complex64::from_polar(1.0, -(n as f64) * TAU * j as f64 / len))
        .sum();
    (-c.arg() / n as f64).rem_euclid(TAU / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{homogenize, StatorGeometry};
    use crate::modal::{solve_modes, Discretization};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model() -> ModalModel {
        let plate = homogenize(&StatorGeometry::default(), &Material::default()).unwrap();
        let basis = solve_modes(&plate, 6, 2, &Discretization::with_nodes(32)).unwrap();
        ModalModel::new(basis, &Material::default()).unwrap()
    }

    fn resonant(model: &ModalModel, n: u32) -> DriveConfig {
        DriveConfig {
            drive_frequency: model.basis.fundamental(n).unwrap().frequency,
            electrode_harmonic: n,
            ..DriveConfig::default()
        }
    }

    #[test]
    fn orthogonal_harmonics_are_unforced() {
        let m = model();
        let ss = steady_state(&m, &resonant(&m, 4)).unwrap();
        let peak = ss.amplitudes().into_iter().fold(0.0, f64::max);
        for (mode, q) in m.basis.modes.iter().zip(&ss.phasors) {
            if mode.n != 4 {
                assert!(q.norm() < 1e-12 * peak);
            }
        }
        assert!(peak > 0.0);
    }

    #[test]
    fn resonance_gain() {
        let osc = Oscillator::new(1000.0, 0.02);
        let stat = osc.receptance(0.0).norm();
        let res = osc.receptance(osc.omega).norm();
        assert_relative_eq!(res / stat, 1.0 / (2.0 * 0.02), max_relative = 1e-12);
    }

    #[test]
    fn exact_integrator_matches_closed_form() {
        let osc = Oscillator::new(2000.0, 0.03);
        let wd = osc.omega * (1.0 - osc.zeta * osc.zeta).sqrt();
        let sigma = osc.zeta * osc.omega;
        let (q0, v0) = (1.3e-7, -2.0e-4);
        let dt = 1.0 / (40.0 * 2000.0);
        let states = free_decay(&osc, [q0, v0], dt, 400);
        let scale = q0.abs().max(v0.abs() / osc.omega);
        for (j, s) in states.iter().enumerate() {
            let t = j as f64 * dt;
            let exact = (-sigma * t).exp() * (q0 * (wd * t).cos() + (v0 + sigma * q0) / wd * (wd * t).sin());
            assert!((s[0] - exact).abs() < 1e-10 * scale, "j = {j}");
        }
    }

    #[test]
    fn forced_response_matches_analytic() {
        // Single oscillator driven by sin(ωt) from rest, against the classic
        // textbook solution.
        let basis = model().basis;
        let m = ModalModel::with_uniform_damping(basis, 0.02).unwrap();
        let drive = DriveConfig {
            drive_frequency: 1.07 * m.basis.fundamental(2).unwrap().frequency,
            electrode_harmonic: 2,
            ..DriveConfig::default()
        };
        let dt = m.default_time_step(&drive);
        let traj = respond(&m, &drive, 2e-3, dt).unwrap();
        let forces = modal_forces(&m, &drive).unwrap();
        let k = m.basis.modes.iter().position(|x| x.n == 2 && x.radial_index == 0 && x.orientation == Orientation::Cosine).unwrap();
        let f0 = -forces[k].im; // f(t) = f0 sin ωt
        let osc = m.oscillators()[k];
        let (w0, z, w) = (osc.omega, osc.zeta, drive.angular_frequency());
        let wd = w0 * (1.0 - z * z).sqrt();
        let den = (w0 * w0 - w * w).powi(2) + (2.0 * z * w0 * w).powi(2);
        let a = f0 * (w0 * w0 - w * w) / den;
        let b = -f0 * 2.0 * z * w0 * w / den;
        // particular a sin ωt + b cos ωt; homogeneous fixes q(0) = q'(0) = 0
        let (c1, c2) = (-b, -(a * w + z * w0 * b) / wd);
        let scale = (a * a + b * b).sqrt();
        for j in (0..traj.times.len()).step_by(7) {
            let t = traj.times[j];
            let exact = a * (w * t).sin() + b * (w * t).cos()
                + (-z * w0 * t).exp() * (c1 * (wd * t).cos() + c2 * (wd * t).sin());
            assert!((traj.q(k, j) - exact).abs() < 1e-10 * scale, "t = {t}");
        }
    }

    #[test]
    fn time_step_bound_enforced() {
        let m = model();
        let drive = resonant(&m, 4);
        let bound = m.time_step_bound();
        assert!(matches!(respond(&m, &drive, 1e-3, 1.01 * bound), Err(Error::TimeStep { .. })));
        assert!(respond(&m, &drive, 2.0 * bound, bound).is_err());
        assert!(respond(&m, &drive, 1e-3, bound).is_ok());
    }

    #[test]
    fn field_of_unit_cosine_mode_is_its_shape() {
        let m = model();
        let k = 5;
        let mut q = vec![0.0; m.basis.len()];
        q[k] = 1.0;
        let grid = Arc::new(SampleGrid::cartesian(48, m.basis.inner_radius, m.basis.outer_radius).unwrap());
        let field = field_from_coordinates(&m, &q, grid.clone());
        for ((&(r, t), &valid), v) in grid.points.iter().zip(&grid.mask).zip(&field.values) {
            if valid {
                assert_eq!(*v, crate::modal::mode_shape_eval(&m.basis.modes[k], r, t).unwrap());
            } else {
                assert!(v.is_nan());
            }
        }
    }

    #[test]
    fn quadrature_drive_travels() {
        let m = model();
        let drive = resonant(&m, 4);
        let ss = steady_state(&m, &drive).unwrap();
        let r = m.basis.outer_radius;
        let grid = Arc::new(SampleGrid::circle(r, 720, m.basis.inner_radius, r).unwrap());
        let amp = ss.amplitude_field(&m, grid.clone());
        let (lo, hi) = amp.valid_values().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
        assert!(hi / lo < 1.01);

        let dt = 1.3e-6;
        let a = ss.snapshot(&m, grid.clone(), 0.0);
        let b = ss.snapshot(&m, grid, (drive.angular_frequency() * dt).to_degrees());
        let sector = TAU / 4.0;
        let raw = crest_angle(&b.values, 4) - crest_angle(&a.values, 4);
        let advance = (raw + 0.5 * sector).rem_euclid(sector) - 0.5 * sector;
        let expected = drive.angular_frequency() * dt / 4.0;
        assert!((advance - expected).abs().to_degrees() < 0.5);
        assert!(advance > 0.0);
    }

    #[test]
    fn node_probe_is_quiet() {
        let m = model();
        let drive = DriveConfig {
            phase_layout: PhaseLayout::SinglePhase,
            ..resonant(&m, 3)
        };
        let dt = m.default_time_step(&drive);
        let traj = respond(&m, &drive, 2e-3, dt).unwrap();
        let r = m.basis.outer_radius;
        // cos(3θ) vanishes at θ = π/6
        let probes = probe(&m, &traj, &[(r, 0.0), (r, PI / 6.0)]).unwrap();
        assert!(probes[1].steady_amplitude < 1e-3 * probes[0].steady_amplitude);
        let peak = probes[1].samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(peak < 1e-3 * probes[0].steady_amplitude);
    }

    #[test]
    fn settling_does_not_depend_on_probe_location() {
        let basis = model().basis;
        let f = basis.fundamental(4).unwrap().frequency;
        let zeta = damping_for_settling(1.5e-3, f, SETTLING_BAND).unwrap();
        let m = ModalModel::with_uniform_damping(basis, zeta).unwrap();
        let drive = resonant(&m, 4);
        let traj = respond(&m, &drive, 4e-3, m.default_time_step(&drive)).unwrap();
        let ro = m.basis.outer_radius;
        let probes = probe(&m, &traj, &[(0.0095, 0.3), (0.012, 1.1), (ro, 2.0)]).unwrap();
        let t: Vec<f64> = probes.iter().map(|p| p.settling_time.unwrap()).collect();
        for w in t.windows(2) {
            assert!((w[0] - w[1]).abs() < 2.0 * traj.dt + 1.0 / f);
        }
        assert!((t[2] - 1.5e-3).abs() < 0.1 * 1.5e-3, "{t:?}");
        assert!(probes[0].steady_amplitude < probes[1].steady_amplitude);
        assert!(probes[1].steady_amplitude < probes[2].steady_amplitude);
    }

    #[test]
    fn outside_points_rejected() {
        let m = model();
        let drive = resonant(&m, 4);
        let traj = respond(&m, &drive, 1e-4, m.default_time_step(&drive)).unwrap();
        assert!(probe(&m, &traj, &[(0.02, 0.0)]).is_err());
        let grid = Arc::new(SampleGrid::cartesian(8, 0.004, 0.015).unwrap());
        assert!(field_at(&m, &traj, 2e-4, grid.clone()).is_err());
        assert!(field_at(&m, &traj, 5e-5, grid).is_ok());
    }

    #[test]
    fn coordinates_between_samples_are_exact() {
        let m = model();
        let drive = resonant(&m, 2);
        let dt = m.default_time_step(&drive);
        let traj = respond(&m, &drive, 40.0 * dt, dt).unwrap();
        let fine = respond(&m, &drive, 40.0 * dt, dt / 4.0).unwrap();
        let c = traj.coordinates_at(10.25 * dt).unwrap();
        for (k, &q) in c.iter().enumerate() {
            let reference = fine.q(k, 41);
            assert!((q - reference).abs() <= 1e-9 * traj.steady_amplitude(k).max(1e-300));
        }
    }

    #[test]
    fn mixed_weights() {
        let m = model();
        let mut mode = m.basis.fundamental(6).unwrap().clone();
        mode.frequency = 41_154.0;
        let ext = ExternalMode::lateral_proxy(42_757.0, 0.02);
        let grid = Arc::new(SampleGrid::cartesian(64, m.basis.inner_radius, m.basis.outer_radius).unwrap());

        let at_a = mixed_response(&m, &mode, &ExternalMode::lateral_proxy(80_000.0, 0.02), 41_154.0, grid.clone()).unwrap();
        assert!(at_a.field.correlation(&at_a.components[0]).unwrap() > 0.99);

        let mix = mixed_response(&m, &mode, &ext, 42_124.0, grid).unwrap();
        let ratio = mix.weights[0] / mix.weights[1];
        assert!(ratio > 0.25 && ratio < 4.0);
        assert!(mix.field.correlation(&mix.components[0]).unwrap() < 0.95);
        assert!(mix.field.correlation(&mix.components[1]).unwrap() < 0.95);
    }

    #[test]
    fn symmetric_detuning_weights_nearly_equal() {
        let (f0, d) = (40_000.0, 300.0);
        let a = lorentzian(f0 - d, 0.02, f0);
        let b = lorentzian(f0 + d, 0.02, f0);
        // equal up to O(Δ/f) asymmetry of the ω₀² - ω² form
        assert!((a / b - 1.0).abs() < 4.0 * d / f0);
    }

    #[test]
    fn settling_helper_inverts() {
        let zeta = damping_for_settling(3.4e-3, 20_000.0, 0.05).unwrap();
        assert_relative_eq!((20.0f64).ln() / (zeta * TAU * 20_000.0), 3.4e-3, max_relative = 1e-12);
        assert!(damping_for_settling(1e-9, 10.0, 0.05).is_err());
    }

    #[test]
    fn force_calibration_hits_target() {
        let m = model();
        let drive = resonant(&m, 4);
        let fpv = calibrate_force_per_volt(&m, &drive, (m.basis.outer_radius, 0.0), 100e-9).unwrap();
        let tuned = DriveConfig { force_per_volt: fpv, ..drive };
        let a = steady_state(&m, &tuned).unwrap().point_phasor(&m, m.basis.outer_radius, 0.0).unwrap().norm();
        assert_relative_eq!(a, 100e-9, max_relative = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn free_decay_energy_never_grows(
            f in 100.0f64..50_000.0,
            zeta in 1e-4f64..0.5,
            q0 in -1e-6f64..1e-6,
            v0 in -1e-2f64..1e-2,
            steps_per_period in 20usize..200,
        ) {
            let osc = Oscillator::new(f, zeta);
            let dt = 1.0 / (f * steps_per_period as f64);
            let states = free_decay(&osc, [q0, v0], dt, 500);
            for w in states.windows(2) {
                let (e0, e1) = (osc.energy(w[0]), osc.energy(w[1]));
                prop_assert!(e1 <= e0 * (1.0 + 1e-9) + f64::MIN_POSITIVE);
            }
        }

        #[test]
        fn response_stays_bounded(ratio in 0.5f64..1.5, zeta in 0.005f64..0.2) {
            let osc = Oscillator::new(1000.0, zeta);
            let w = ratio * osc.omega;
            let q = osc.receptance(w); // unit force phasor
            let states = free_decay(&osc, [-q.re, w * q.im], 1e-5, 3000);
            let dyn_max = 1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt() * osc.omega * osc.omega);
            for (j, s) in states.iter().enumerate() {
                let t = j as f64 * 1e-5;
                let total = (q * Complex64::from_polar(1.0, w * t)).re + s[0];
                prop_assert!(total.abs() <= 3.0 * dyn_max);
            }
        }
    }

    #[test]
    fn doubling_voltage_doubles_samples() {
        let m = model();
        let drive = resonant(&m, 4);
        let dt = m.default_time_step(&drive);
        let a = respond(&m, &drive, 1e-3, dt).unwrap();
        let twice = DriveConfig {
            peak_to_peak_voltage: 2.0 * drive.peak_to_peak_voltage,
            ..drive
        };
        let b = respond(&m, &twice, 1e-3, dt).unwrap();
        for k in 0..a.mode_count() {
            for j in 0..a.times.len() {
                assert_eq!(b.q(k, j), 2.0 * a.q(k, j));
            }
        }
    }
}
