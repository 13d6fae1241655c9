//! Stator parametrization and homogenization of the notched tooth band.
//!
//! The stator is an annular plate clamped on its inner hub (`r <= fixture_radius`).
//! The outer band `[tooth_band_inner_radius, outer_radius]` carries the teeth: a solid
//! sublayer of `total_height - notch_depth` topped by a tooth layer of height
//! `notch_depth` that is interrupted by the notches. The tooth layer is smeared into a
//! continuous layer weighted by the fill factor, so the plate model only sees a
//! piecewise-constant radial profile of bending stiffness and areal mass.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical dimensions of the stator. All lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatorGeometry {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Plate thickness between the hub and the tooth band.
    pub base_thickness: f64,
    pub total_height: f64,
    pub notch_count: u32,
    pub notch_width: f64,
    pub notch_depth: f64,
    pub tooth_band_inner_radius: f64,
    /// Outer edge of the clamped center region.
    pub fixture_radius: f64,
}

impl Default for StatorGeometry {
    /// A Ø30 mm stator: 22 notches, 1.59 mm wide and 1 mm deep, 5.02 mm total height.
    fn default() -> Self {
        Self {
            inner_radius: 4.0e-3,
            outer_radius: 15.0e-3,
            base_thickness: 2.0e-3,
            total_height: 5.02e-3,
            notch_count: 22,
            notch_width: 1.59e-3,
            notch_depth: 1.0e-3,
            tooth_band_inner_radius: 9.5e-3,
            fixture_radius: 6.0e-3,
        }
    }
}

impl StatorGeometry {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("inner_radius", self.inner_radius),
            ("outer_radius", self.outer_radius),
            ("base_thickness", self.base_thickness),
            ("total_height", self.total_height),
            ("notch_width", self.notch_width),
            ("notch_depth", self.notch_depth),
            ("tooth_band_inner_radius", self.tooth_band_inner_radius),
            ("fixture_radius", self.fixture_radius),
        ];
        for (name, value) in lengths {
            if !value.is_finite() {
                return Err(Error::Geometry(format!("{name} must be finite, got {value}")));
            }
        }
        if !(0.0 < self.inner_radius
            && self.inner_radius < self.fixture_radius
            && self.fixture_radius < self.tooth_band_inner_radius
            && self.tooth_band_inner_radius < self.outer_radius)
        {
            return Err(Error::Geometry(format!(
                "radii must satisfy 0 < inner_radius ({}) < fixture_radius ({}) < \
                 tooth_band_inner_radius ({}) < outer_radius ({})",
                self.inner_radius,
                self.fixture_radius,
                self.tooth_band_inner_radius,
                self.outer_radius
            )));
        }
        if !(0.0 < self.notch_depth && self.notch_depth < self.total_height) {
            return Err(Error::Geometry(format!(
                "notch_depth ({}) must lie in (0, total_height = {})",
                self.notch_depth, self.total_height
            )));
        }
        if !(0.0 < self.base_thickness && self.base_thickness <= self.total_height) {
            return Err(Error::Geometry(format!(
                "base_thickness ({}) must lie in (0, total_height = {}]",
                self.base_thickness, self.total_height
            )));
        }
        if self.notch_width < 0.0 {
            return Err(Error::Geometry("notch_width must be non-negative".into()));
        }
        let occupied = f64::from(self.notch_count) * self.notch_width;
        let circumference = 2.0 * PI * self.tooth_band_inner_radius;
        if occupied >= circumference {
            return Err(Error::Geometry(format!(
                "{} notches of width {} m do not fit on the tooth band circumference {:.6} m",
                self.notch_count, self.notch_width, circumference
            )));
        }
        Ok(())
    }

    /// Mean radius of the tooth band. For notches of constant width this is the radius at
    /// which the circumferential fill ratio equals the area fill ratio of the band.
    pub fn tooth_band_centroid_radius(&self) -> f64 {
        0.5 * (self.tooth_band_inner_radius + self.outer_radius)
    }

    pub fn tooth_layer_height(&self) -> f64 {
        self.notch_depth
    }

    pub fn solid_sublayer_height(&self) -> f64 {
        self.total_height - self.notch_depth
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.inner_radius && r <= self.outer_radius
    }
}

/// Isotropic linear elastic material with modal damping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// Pa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m³
    pub density: f64,
    pub modal_damping_ratio: f64,
    /// Damping ratio overrides keyed by circumferential mode number.
    #[serde(default)]
    pub damping_overrides: BTreeMap<u32, f64>,
}

impl Default for Material {
    /// Ultem 1000 vendor-typical values.
    fn default() -> Self {
        Self {
            youngs_modulus: 3.2e9,
            poisson_ratio: 0.36,
            density: 1270.0,
            modal_damping_ratio: 0.02,
            damping_overrides: BTreeMap::new(),
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return Err(Error::Material("youngs_modulus must be positive".into()));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::Material("density must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Material(format!(
                "poisson_ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        let ratios = std::iter::once((None, self.modal_damping_ratio))
            .chain(self.damping_overrides.iter().map(|(n, z)| (Some(*n), *z)));
        for (n, zeta) in ratios {
            if !(zeta > 0.0 && zeta < 1.0) {
                let which = n.map_or("modal_damping_ratio".to_string(), |n| {
                    format!("damping_overrides[{n}]")
                });
                return Err(Error::Material(format!("{which} must lie in (0, 1), got {zeta}")));
            }
        }
        Ok(())
    }

    /// Plane-stress plate modulus E/(1-ν²).
    pub fn plate_modulus(&self) -> f64 {
        self.youngs_modulus / (1.0 - self.poisson_ratio * self.poisson_ratio)
    }

    pub fn damping_for(&self, n: u32) -> f64 {
        self.damping_overrides
            .get(&n)
            .copied()
            .unwrap_or(self.modal_damping_ratio)
    }
}

/// Radial interval with constant plate properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateSegment {
    pub r_start: f64,
    pub r_end: f64,
    /// Homogenized bending stiffness D, N·m, before `EffectivePlate::stiffness_scale`.
    pub stiffness: f64,
    /// Areal mass μ, kg/m².
    pub areal_mass: f64,
}

/// Piecewise-constant radial plate profile produced by [`homogenize`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectivePlate {
    pub geometry: StatorGeometry,
    pub material: Material,
    pub fill_factor: f64,
    /// Ordered, contiguous segments spanning `[inner_radius, outer_radius]`.
    pub segments: Vec<PlateSegment>,
    /// Uniform multiplier applied to D relative to the homogenized value.
    pub stiffness_scale: f64,
}

impl EffectivePlate {
    pub fn inner_radius(&self) -> f64 {
        self.geometry.inner_radius
    }

    pub fn outer_radius(&self) -> f64 {
        self.geometry.outer_radius
    }

    pub fn fixture_radius(&self) -> f64 {
        self.geometry.fixture_radius
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.material.poisson_ratio
    }

    fn segment_at(&self, r: f64) -> &PlateSegment {
        self.segments
            .iter()
            .find(|s| r < s.r_end)
            .unwrap_or_else(|| self.segments.last().expect("plate has segments"))
    }

    /// Effective D at radius r, stiffness scale included.
    pub fn stiffness_at(&self, r: f64) -> f64 {
        self.segment_at(r).stiffness * self.stiffness_scale
    }

    /// Homogenized D before any calibration scaling.
    pub fn base_stiffness_at(&self, r: f64) -> f64 {
        self.segment_at(r).stiffness
    }

    pub fn areal_mass_at(&self, r: f64) -> f64 {
        self.segment_at(r).areal_mass
    }

    /// Young's modulus implied by the current stiffness scale.
    pub fn effective_youngs_modulus(&self) -> f64 {
        self.material.youngs_modulus * self.stiffness_scale
    }

    /// Returns a copy with D multiplied by `factor` everywhere.
    pub fn with_stiffness_scaled(&self, factor: f64) -> Self {
        let mut plate = self.clone();
        plate.stiffness_scale *= factor;
        plate
    }
}

/// Fraction of the tooth-layer circumference left solid after cutting the notches.
pub fn fill_factor(geom: &StatorGeometry) -> f64 {
    let circumference = 2.0 * PI * geom.tooth_band_centroid_radius();
    1.0 - f64::from(geom.notch_count) * geom.notch_width / circumference
}

/// Bending stiffness and areal mass of a solid layer of height `solid` topped by a
/// layer of height `top` whose material fraction is `fill`, bending about the
/// section's neutral axis.
fn layered_section(material: &Material, solid: f64, top: f64, fill: f64) -> (f64, f64) {
    let total = solid + top;
    let area = solid + fill * top;
    let first_moment = 0.5 * solid * solid + fill * 0.5 * (total * total - solid * solid);
    let neutral = first_moment / area;
    let cube = |z: f64| z * z * z;
    let second_moment = (cube(solid - neutral) - cube(-neutral)) / 3.0
        + fill * (cube(total - neutral) - cube(solid - neutral)) / 3.0;
    (
        material.plate_modulus() * second_moment,
        material.density * area,
    )
}

/// Reduces the notched stator to a two-segment annular plate: the web between the hub
/// and the tooth band (plain plate of `base_thickness`) and the tooth band
/// (solid sublayer plus fill-weighted tooth layer).
pub fn homogenize(geom: &StatorGeometry, mat: &Material) -> Result<EffectivePlate> {
    geom.validate()?;
    mat.validate()?;

    let fill = fill_factor(geom);
    if fill <= 0.0 {
        return Err(Error::Geometry(format!(
            "notches overlap: fill factor {fill:.4} <= 0"
        )));
    }

    let (web_d, web_mu) = layered_section(mat, geom.base_thickness, 0.0, 1.0);
    let (band_d, band_mu) = layered_section(
        mat,
        geom.solid_sublayer_height(),
        geom.tooth_layer_height(),
        fill,
    );

    Ok(EffectivePlate {
        geometry: geom.clone(),
        material: mat.clone(),
        fill_factor: fill,
        segments: vec![
            PlateSegment {
                r_start: geom.inner_radius,
                r_end: geom.tooth_band_inner_radius,
                stiffness: web_d,
                areal_mass: web_mu,
            },
            PlateSegment {
                r_start: geom.tooth_band_inner_radius,
                r_end: geom.outer_radius,
                stiffness: band_d,
                areal_mass: band_mu,
            },
        ],
        stiffness_scale: 1.0,
    })
}
