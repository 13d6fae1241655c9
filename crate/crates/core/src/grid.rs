//! Pixel grids with a polar mapping onto the stator annulus.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum GridKind {
    /// Square image centred on the stator axis, `half_extent` meters from centre to
    /// edge. Row 0 is the top (+y) row.
    Cartesian {
        width: usize,
        height: usize,
        half_extent: f64,
    },
    /// One row per radius, `n_theta` uniform angles per row starting at θ = 0.
    Polar { radii: Vec<f64>, n_theta: usize },
}

/// Sample positions `(r, θ)` in row-major order with an on-annulus mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub kind: GridKind,
    pub points: Vec<(f64, f64)>,
    pub mask: Vec<bool>,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl SampleGrid {
    pub fn cartesian(size: usize, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        Self::cartesian_with_extent(size, size, outer_radius, inner_radius, outer_radius)
    }

    pub fn cartesian_with_extent(
        width: usize,
        height: usize,
        half_extent: f64,
        inner_radius: f64,
        outer_radius: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("grid dimensions must be non-zero".into()));
        }
        if !(half_extent > 0.0) {
            return Err(Error::Domain("grid extent must be positive".into()));
        }
        let mut points = Vec::with_capacity(width * height);
        let mut mask = Vec::with_capacity(width * height);
        for row in 0..height {
            let y = half_extent - (row as f64 + 0.5) * 2.0 * half_extent / height as f64;
            for col in 0..width {
                let x = -half_extent + (col as f64 + 0.5) * 2.0 * half_extent / width as f64;
                let r = x.hypot(y);
                let theta = y.atan2(x).rem_euclid(TAU);
                points.push((r, theta));
                mask.push(r >= inner_radius && r <= outer_radius);
            }
        }
        Ok(Self {
            kind: GridKind::Cartesian {
                width,
                height,
                half_extent,
            },
            points,
            mask,
            inner_radius,
            outer_radius,
        })
    }

    pub fn polar(radii: Vec<f64>, n_theta: usize, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if radii.is_empty() || n_theta == 0 {
            return Err(Error::Domain("polar grid needs at least one radius and angle".into()));
        }
        let mut points = Vec::with_capacity(radii.len() * n_theta);
        let mut mask = Vec::with_capacity(radii.len() * n_theta);
        for &r in &radii {
            for j in 0..n_theta {
                points.push((r, TAU * j as f64 / n_theta as f64));
                mask.push(r >= inner_radius && r <= outer_radius);
            }
        }
        Ok(Self {
            kind: GridKind::Polar { radii, n_theta },
            points,
            mask,
            inner_radius,
            outer_radius,
        })
    }

    /// Single closed circle of `n_theta` samples.
    pub fn circle(radius: f64, n_theta: usize, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        Self::polar(vec![radius], n_theta, inner_radius, outer_radius)
    }

    pub fn width(&self) -> usize {
        match &self.kind {
            GridKind::Cartesian { width, .. } => *width,
            GridKind::Polar { n_theta, .. } => *n_theta,
        }
    }

    pub fn height(&self) -> usize {
        match &self.kind {
            GridKind::Cartesian { height, .. } => *height,
            GridKind::Polar { radii, .. } => radii.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    /// Text header lines describing the polar mapping, shared by the binary dumps.
    pub fn describe(&self) -> Vec<String> {
        let mut lines = vec![
            format!("width {}", self.width()),
            format!("height {}", self.height()),
            format!("inner_radius_m {}", self.inner_radius),
            format!("outer_radius_m {}", self.outer_radius),
        ];
        match &self.kind {
            GridKind::Cartesian { half_extent, .. } => {
                lines.push("grid cartesian".into());
                lines.push(format!("half_extent_m {half_extent}"));
            }
            GridKind::Polar { radii, .. } => {
                lines.push("grid polar".into());
                let list: Vec<String> = radii.iter().map(|r| r.to_string()).collect();
                lines.push(format!("radii_m {}", list.join(" ")));
            }
        }
        lines
    }
}

/// Out-of-plane displacement (m) per grid point; invalid points hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub grid: Arc<SampleGrid>,
    pub values: Vec<f64>,
}

impl DisplacementField {
    /// Evaluates `f(r, θ)` on every valid point.
    pub fn from_fn(grid: Arc<SampleGrid>, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        use rayon::prelude::*;
        let values = grid
            .points
            .par_iter()
            .zip(grid.mask.par_iter())
            .map(|(&(r, t), &valid)| if valid { f(r, t) } else { f64::NAN })
            .collect();
        Self { grid, values }
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.grid.mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
    }

    pub fn max_abs(&self) -> f64 {
        self.valid_values().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Uncentred normalized inner product over valid points, in [-1, 1].
    pub fn correlation(&self, other: &Self) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::Domain("fields live on different grids".into()));
        }
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for ((a, b), &m) in self.values.iter().zip(&other.values).zip(&self.grid.mask) {
            if m {
                ab += a * b;
                aa += a * a;
                bb += b * b;
            }
        }
        if aa == 0.0 || bb == 0.0 {
            return Err(Error::Domain("correlation of an all-zero field".into()));
        }
        Ok(ab / (aa * bb).sqrt())
    }

    /// Values of one polar row (closed circle).
    pub fn ring(&self, row: usize) -> Result<&[f64]> {
        match &self.grid.kind {
            GridKind::Polar { radii, n_theta } if row < radii.len() => {
                Ok(&self.values[row * n_theta..(row + 1) * n_theta])
            }
            GridKind::Polar { .. } => Err(Error::Domain(format!("ring {row} out of range"))),
            GridKind::Cartesian { .. } => Err(Error::Domain("field is not on a polar grid".into())),
        }
    }
}
