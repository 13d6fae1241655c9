//! Run configuration: one JSON document with a section per stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::{ExternalMode, PhaseLayout};
use crate::error::{Error, Result};
use crate::geometry::{Material, StatorGeometry};
use crate::holography::OpticalConfig;
use crate::modal::Discretization;

/// Environment variable overriding `output_dir`.
pub const OUT_DIR_ENV: &str = "STATOR_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: StatorGeometry,
    #[serde(default)]
    pub material: Material,
    #[serde(default)]
    pub modal: ModalSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub response: ResponseSection,
    #[serde(default)]
    pub optics: OpticalConfig,
    #[serde(default)]
    pub fringes: FringeSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub external_modes: Vec<ExternalMode>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: StatorGeometry::default(),
            material: Material::default(),
            modal: ModalSection::default(),
            drive: DriveSection::default(),
            response: ResponseSection::default(),
            optics: OpticalConfig::default(),
            fringes: FringeSection::default(),
            analysis: AnalysisSection::default(),
            external_modes: Vec::new(),
            output_dir: default_output_dir(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModalSection {
    pub n_max: u32,
    pub modes_per_n: usize,
    pub radial_nodes: usize,
    pub quadrature_order: usize,
    /// Rescale stiffness so this harmonic's lowest mode lands on the target.
    pub calibration: Option<CalibrationTarget>,
    /// Relative split of the sine partner, keyed by n.
    pub pair_detuning: BTreeMap<u32, f64>,
}

impl Default for ModalSection {
    fn default() -> Self {
        let d = Discretization::default();
        Self {
            n_max: 7,
            modes_per_n: 2,
            radial_nodes: d.radial_nodes,
            quadrature_order: d.quadrature_order,
            calibration: Some(CalibrationTarget::default()),
            pair_detuning: BTreeMap::new(),
        }
    }
}

impl ModalSection {
    pub fn discretization(&self) -> Discretization {
        Discretization {
            radial_nodes: self.radial_nodes,
            quadrature_order: self.quadrature_order,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    pub n: u32,
    /// Hz
    pub frequency: f64,
}

impl Default for CalibrationTarget {
    fn default() -> Self {
        Self {
            n: 1,
            frequency: 3680.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    /// Hz; the resonance of the electrode harmonic when omitted.
    pub drive_frequency: Option<f64>,
    pub peak_to_peak_voltage: f64,
    /// N/V; calibrated to `edge_amplitude` when omitted.
    pub force_per_volt: Option<f64>,
    /// Steady outer-edge amplitude used to calibrate `force_per_volt`, m.
    pub edge_amplitude: f64,
    pub electrode_harmonic: u32,
    pub phase_layout: PhaseLayout,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            drive_frequency: None,
            peak_to_peak_voltage: 100.0,
            force_per_volt: None,
            edge_amplitude: 100e-9,
            electrode_harmonic: 4,
            phase_layout: PhaseLayout::Quadrature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponseSection {
    /// s
    pub duration: f64,
    /// s; 1/(40 f_drive) capped by the stability bound when omitted.
    pub dt: Option<f64>,
    /// m; tooth-band inner radius, band midpoint and outer edge when omitted.
    pub probe_radii: Option<Vec<f64>>,
    /// rad
    pub probe_theta: f64,
    /// s; when set, a uniform ζ is derived so a resonant drive settles in this time.
    pub settling_time: Option<f64>,
}

impl Default for ResponseSection {
    fn default() -> Self {
        Self {
            duration: 8e-3,
            dt: None,
            probe_radii: None,
            probe_theta: 0.0,
            settling_time: Some(3.4e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FringeSection {
    /// Harmonics rendered as time-averaged images, each driven at its resonance.
    pub harmonics: Vec<u32>,
    pub image_size: usize,
    /// Stroboscopic exposures: the first phase is paired with each later one, degrees.
    pub strobe_phases_deg: Vec<f64>,
    /// Render with the drive switched off.
    pub zero_drive: bool,
}

impl Default for FringeSection {
    fn default() -> Self {
        Self {
            harmonics: (1..=6).collect(),
            image_size: 256,
            strobe_phases_deg: vec![0.0, 60.0],
            zero_drive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// m; the outer edge when omitted.
    pub circle_radius: Option<f64>,
    pub circle_samples: usize,
    pub strobe_phases_deg: Vec<f64>,
    /// Route samples through a synthetic hologram and unwrap, or read the field directly.
    pub via_hologram: bool,
    /// Fit this harmonic instead of the detected one.
    pub mode_number: Option<u32>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            circle_radius: None,
            circle_samples: crate::analysis::DEFAULT_CIRCLE_SAMPLES,
            strobe_phases_deg: vec![0.0, 60.0, 120.0, 180.0],
            via_hologram: true,
            mode_number: None,
        }
    }
}

impl RunConfig {
    /// Parses JSON, reporting the failing field path and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.inner()))
        })
    }

    pub fn from_value(value: Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.inner()))
        })
    }

    /// Reads a file (or the defaults when `path` is `None`) and applies `key=value`
    /// overrides with dotted keys.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                let v: Value = serde_path_to_error::deserialize(de)
                    .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.inner())))?;
                if overrides.is_empty() {
                    let cfg = Self::from_json(&text)
                        .map_err(|e| Error::Config(format!("{}: {}", p.display(), strip(&e))))?;
                    cfg.validate()?;
                    return Ok(cfg);
                }
                v
            }
            None => serde_json::to_value(Self::default()).expect("defaults serialize"),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg = Self::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// `STATOR_OUT_DIR` wins over the configured directory.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }

    /// Checks every section before any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.material.validate()?;
        let cfg = |msg: String| Err(Error::Config(msg));
        let m = &self.modal;
        if m.modes_per_n == 0 {
            return cfg("modal.modes_per_n must be at least 1".into());
        }
        self.modal
            .discretization()
            .validate()
            .map_err(|e| Error::Config(format!("modal: {}", strip(&e))))?;
        if let Some(c) = m.calibration {
            if c.n > m.n_max {
                return cfg(format!("modal.calibration.n = {} exceeds modal.n_max = {}", c.n, m.n_max));
            }
            if !(c.frequency > 0.0 && c.frequency.is_finite()) {
                return cfg("modal.calibration.frequency must be positive".into());
            }
        }
        for (&n, &d) in &m.pair_detuning {
            if n == 0 || n > m.n_max || !(d > -1.0 && d.is_finite()) {
                return cfg(format!("modal.pair_detuning[{n}] = {d} is invalid"));
            }
        }

        let d = &self.drive;
        if d.electrode_harmonic == 0 || d.electrode_harmonic > m.n_max {
            return cfg(format!(
                "drive.electrode_harmonic must lie in 1..={}, got {}",
                m.n_max, d.electrode_harmonic
            ));
        }
        if !(d.peak_to_peak_voltage > 0.0 && d.peak_to_peak_voltage.is_finite()) {
            return cfg("drive.peak_to_peak_voltage must be positive".into());
        }
        if let Some(f) = d.drive_frequency {
            if !(f > 0.0 && f.is_finite()) {
                return cfg("drive.drive_frequency must be positive".into());
            }
        }
        if let Some(f) = d.force_per_volt {
            if !(f >= 0.0 && f.is_finite()) {
                return cfg("drive.force_per_volt must be non-negative".into());
            }
        }
        if !(d.edge_amplitude > 0.0 && d.edge_amplitude.is_finite()) {
            return cfg("drive.edge_amplitude must be positive".into());
        }

        let r = &self.response;
        if !(r.duration > 0.0 && r.duration.is_finite()) {
            return cfg("response.duration must be positive".into());
        }
        if let Some(dt) = r.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return cfg("response.dt must be positive".into());
            }
        }
        if let Some(t) = r.settling_time {
            if !(t > 0.0 && t.is_finite()) {
                return cfg("response.settling_time must be positive".into());
            }
        }
        let g = &self.geometry;
        if let Some(radii) = &r.probe_radii {
            if radii.is_empty() {
                return cfg("response.probe_radii must not be empty".into());
            }
            for &p in radii {
                if !(p >= g.inner_radius && p <= g.outer_radius) {
                    return cfg(format!("response.probe_radii entry {p} lies outside the annulus"));
                }
            }
        }

        self.optics
            .validate()
            .map_err(|e| Error::Config(format!("optics: {}", strip(&e))))?;

        let f = &self.fringes;
        if f.image_size < 8 || f.image_size > 4096 {
            return cfg(format!("fringes.image_size must lie in 8..=4096, got {}", f.image_size));
        }
        if let Some(&n) = f.harmonics.iter().find(|&&n| n == 0 || n > m.n_max) {
            return cfg(format!("fringes.harmonics entry {n} must lie in 1..={}", m.n_max));
        }
        if f.strobe_phases_deg.iter().any(|p| !p.is_finite()) {
            return cfg("fringes.strobe_phases_deg must be finite".into());
        }

        let a = &self.analysis;
        if let Some(rad) = a.circle_radius {
            if !(rad > g.fixture_radius && rad <= g.outer_radius) {
                return cfg(format!(
                    "analysis.circle_radius {rad} must lie on the free annulus ({}, {}]",
                    g.fixture_radius, g.outer_radius
                ));
            }
        }
        if a.circle_samples < 8 * m.n_max as usize {
            return cfg(format!(
                "analysis.circle_samples must be at least 8 * n_max = {}",
                8 * m.n_max
            ));
        }
        if a.strobe_phases_deg.len() < 3 || a.strobe_phases_deg.iter().any(|p| !p.is_finite()) {
            return cfg("analysis.strobe_phases_deg needs at least 3 finite phases".into());
        }
        if let Some(n) = a.mode_number {
            if n == 0 || n > m.n_max {
                return cfg(format!("analysis.mode_number must lie in 1..={}", m.n_max));
            }
        }
        for (i, e) in self.external_modes.iter().enumerate() {
            e.validate()
                .map_err(|err| Error::Config(format!("external_modes[{i}]: {}", strip(&err))))?;
        }
        Ok(())
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Geometry(s)
        | Error::Material(s)
        | Error::Discretization(s)
        | Error::Domain(s)
        | Error::Config(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().unwrap()
            }
            _ => {
                return Err(Error::Config(format!(
                    "override `{key}`: `{}` is not a section",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last key")
}
