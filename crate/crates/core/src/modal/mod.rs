//! Out-of-plane modal basis of the effective annular plate.
//!
//! Each circumferential harmonic `n` is an independent radial eigenproblem
//! `K w = ω² M w`. A single radial solve serves both the cosine and sine partner of a
//! harmonic, so the degenerate pairs are exact.

mod assembly;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::EffectivePlate;

pub use assembly::{
    assemble, gauss_legendre, radial_mesh, AssembledSystem, Discretization, MIN_RADIAL_NODES,
};

/// Largest normwise backward error accepted from the eigensolver.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Cosine,
    Sine,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Cosine => "cos",
            Orientation::Sine => "sin",
        }
    }

    /// Circumferential factor cos(nθ) or sin(nθ).
    pub fn angular(self, n: u32, theta: f64) -> f64 {
        let arg = f64::from(n) * theta;
        match self {
            Orientation::Cosine => arg.cos(),
            Orientation::Sine => arg.sin(),
        }
    }
}

/// Support conditions the basis was solved with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    /// W = dW/dr = 0 for r ≤ this radius.
    pub clamped_radius: f64,
    /// The outer edge is free (zero moment and effective shear).
    pub outer_free: bool,
}

/// Tabulated radial mode profile with nodal slopes, interpolated by Hermite cubics.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl RadialProfile {
    pub fn inner(&self) -> f64 {
        self.radii[0]
    }

    pub fn outer(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    /// Cubic Hermite interpolation; reproduces the tabulated values at the knots.
    pub fn eval(&self, r: f64) -> f64 {
        let last = self.radii.len() - 1;
        let idx = self.radii.partition_point(|&x| x <= r);
        if idx == 0 {
            return self.values[0];
        }
        if idx > last {
            return self.values[last];
        }
        let i = idx - 1;
        if r == self.radii[i] {
            return self.values[i];
        }
        let h = self.radii[i + 1] - self.radii[i];
        let xi = (r - self.radii[i]) / h;
        let (shape, _, _) = assembly::hermite(xi, h);
        shape[0] * self.values[i]
            + shape[1] * self.slopes[i]
            + shape[2] * self.values[i + 1]
            + shape[3] * self.slopes[i + 1]
    }

    /// ∫ f(r)·W(r)·r dr over `[r_start, r_end]`, integrating each Hermite element
    /// with the given Gauss–Legendre order.
    pub fn weighted_integral(&self, r_start: f64, r_end: f64, order: usize) -> f64 {
        let (gp, gw) = gauss_legendre(order);
        let mut total = 0.0;
        for (i, pair) in self.radii.windows(2).enumerate() {
            let a = pair[0].max(r_start);
            let b = pair[1].min(r_end);
            if b <= a {
                continue;
            }
            let h = pair[1] - pair[0];
            for (&x, &w) in gp.iter().zip(&gw) {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let (shape, _, _) = assembly::hermite((r - pair[0]) / h, h);
                let wr = shape[0] * self.values[i]
                    + shape[1] * self.slopes[i]
                    + shape[2] * self.values[i + 1]
                    + shape[3] * self.slopes[i + 1];
                total += 0.5 * (b - a) * w * wr * r;
            }
        }
        total
    }
}

/// One mass-normalized flexural mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub n: u32,
    /// 0 for the lowest radial family of this harmonic.
    pub radial_index: usize,
    pub orientation: Orientation,
    /// Hz
    pub frequency: f64,
    pub profile: Arc<RadialProfile>,
    pub boundary: Boundary,
}

impl Mode {
    pub fn angular_frequency(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    pub fn shape(&self, r: f64, theta: f64) -> f64 {
        self.profile.eval(r) * self.orientation.angular(self.n, theta)
    }
}

/// Shape value W(r)·cos(nθ) or W(r)·sin(nθ) of a mode.
pub fn mode_shape_eval(mode: &Mode, r: f64, theta: f64) -> Result<f64> {
    if !(r >= mode.profile.inner() && r <= mode.profile.outer()) {
        return Err(Error::Domain(format!(
            "r = {r} m outside the annulus [{}, {}]",
            mode.profile.inner(),
            mode.profile.outer()
        )));
    }
    Ok(mode.shape(r, theta))
}

/// Modal basis sorted by ascending frequency.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub modes: Vec<Mode>,
    pub discretization: Discretization,
    /// SHA-256 of the plate description the basis was solved for.
    pub provenance: String,
    /// Relative frequency split applied to sine partners, keyed by n.
    pub pair_detuning: BTreeMap<u32, f64>,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl ModalBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn max_frequency(&self) -> f64 {
        self.modes.iter().map(|m| m.frequency).fold(0.0, f64::max)
    }

    pub fn find(&self, n: u32, radial_index: usize, orientation: Orientation) -> Option<&Mode> {
        self.modes
            .iter()
            .find(|m| m.n == n && m.radial_index == radial_index && m.orientation == orientation)
    }

    /// Lowest radial mode of harmonic `n` (cosine partner).
    pub fn fundamental(&self, n: u32) -> Option<&Mode> {
        self.find(n, 0, Orientation::Cosine)
    }

    /// Frequencies of the lowest radial family for each requested harmonic.
    pub fn family_frequencies(&self, ns: impl IntoIterator<Item = u32>) -> Vec<Option<f64>> {
        ns.into_iter()
            .map(|n| self.fundamental(n).map(|m| m.frequency))
            .collect()
    }

    /// Splits the degenerate pair of harmonic `n` by scaling the sine partner's
    /// frequency by `1 + detuning`. Models an asymmetric stator.
    pub fn with_pair_detuning(&self, n: u32, detuning: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("n = 0 has no degenerate partner".into()));
        }
        if !(detuning > -1.0 && detuning.is_finite()) {
            return Err(Error::Domain(format!("detuning {detuning} must exceed -1")));
        }
        if !self.modes.iter().any(|m| m.n == n) {
            return Err(Error::Domain(format!("harmonic n = {n} absent from basis")));
        }
        let mut basis = self.clone();
        for mode in &mut basis.modes {
            if mode.n == n && mode.orientation == Orientation::Sine {
                mode.frequency *= 1.0 + detuning;
            }
        }
        sort_modes(&mut basis.modes);
        *basis.pair_detuning.entry(n).or_insert(0.0) = detuning;
        Ok(basis)
    }

    /// `n,orientation,frequency_Hz` rows in basis order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,orientation,frequency_Hz\n");
        for m in &self.modes {
            let _ = writeln!(out, "{},{},{}", m.n, m.orientation.as_str(), m.frequency);
        }
        out
    }

    /// Plain-text dump of every mode's tabulated radial profile.
    pub fn profiles_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# radial mode profiles");
        let _ = writeln!(out, "# provenance {}", self.provenance);
        let _ = writeln!(
            out,
            "# radial_nodes {} quadrature_order {}",
            self.discretization.radial_nodes, self.discretization.quadrature_order
        );
        for m in &self.modes {
            let _ = writeln!(
                out,
                "mode n={} radial_index={} orientation={} frequency_Hz={} points={}",
                m.n,
                m.radial_index,
                m.orientation.as_str(),
                m.frequency,
                m.profile.radii.len()
            );
            let _ = writeln!(out, "r_m,W,dW_dr");
            for ((r, w), s) in m.profile.radii.iter().zip(&m.profile.values).zip(&m.profile.slopes) {
                let _ = writeln!(out, "{r},{w},{s}");
            }
            let _ = writeln!(out, "end");
        }
        out
    }
}

fn sort_modes(modes: &mut [Mode]) {
    modes.sort_by(|a, b| {
        a.frequency
            .total_cmp(&b.frequency)
            .then(a.n.cmp(&b.n))
            .then(a.radial_index.cmp(&b.radial_index))
            .then(a.orientation.cmp(&b.orientation))
    });
}

pub fn plate_provenance(plate: &EffectivePlate) -> String {
    let json = serde_json::to_string(plate).expect("plate serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Radial eigenpairs of one harmonic: (ω², nodal vector) ascending.
pub struct HarmonicSolution {
    pub n: u32,
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
    pub system: AssembledSystem,
}

/// Normwise backward error ‖Kw − λMw‖ / ((‖K‖ + |λ|·‖M‖)·‖w‖).
pub fn eigen_residual(k: &DMatrix<f64>, m: &DMatrix<f64>, lambda: f64, w: &DVector<f64>) -> f64 {
    let r = k * w - lambda * (m * w);
    r.norm() / ((k.norm() + lambda.abs() * m.norm()) * w.norm())
}

/// Solves `K w = ω² M w` for harmonic `n` and returns the lowest `count`
/// mass-normalized pairs.
///
/// The pencil is inverted (`M w = ω⁻² K w`) and reduced with the Cholesky factor of
/// the clamped stiffness, so the lowest modes come out as the dominant eigenvalues and
/// keep full relative accuracy. The plate's uniform stiffness scale is applied to the
/// eigenvalues afterwards.
pub fn solve_harmonic(
    plate: &EffectivePlate,
    n: u32,
    count: usize,
    disc: &Discretization,
) -> Result<HarmonicSolution> {
    let base = assembly::assemble_unscaled(plate, n, disc)?;
    let eig_err = |reason: String| Error::Eigen {
        n,
        nodes: disc.radial_nodes,
        reason,
    };

    // Length-scaled coordinates (W, h·dW/dr) with h the local node spacing.
    let dofs = base.dof_count();
    let nodes = &base.nodes;
    let scaling = DVector::from_fn(dofs, |i, _| {
        if i % 2 == 0 {
            1.0
        } else {
            let node = i / 2 + 1;
            1.0 / (nodes[node] - nodes[node - 1])
        }
    });
    let scale_matrix = |a: &DMatrix<f64>| {
        DMatrix::from_fn(dofs, dofs, |i, j| a[(i, j)] * scaling[i] * scaling[j])
    };
    let k = scale_matrix(&base.stiffness);
    let m = scale_matrix(&base.mass);

    if Cholesky::new(m.clone()).is_none() {
        return Err(Error::Discretization(format!(
            "mass matrix for n = {n} is not positive definite at {} nodes",
            disc.radial_nodes
        )));
    }
    let l = Cholesky::new(k.clone())
        .ok_or_else(|| eig_err("clamped stiffness is not positive definite".into()))?
        .l();
    let linv_m = l
        .solve_lower_triangular(&m)
        .ok_or_else(|| eig_err("singular stiffness factor".into()))?;
    let reduced = l
        .solve_lower_triangular(&linv_m.transpose())
        .ok_or_else(|| eig_err("singular stiffness factor".into()))?;
    let reduced = 0.5 * (&reduced + reduced.transpose());

    let eig = SymmetricEigen::try_new(reduced, f64::EPSILON, 0)
        .ok_or_else(|| eig_err("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lt = l.transpose();
    let stiffness_scale = plate.stiffness_scale;
    let mut eigenvalues = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        let inv = eig.eigenvalues[idx];
        if !(inv > 0.0 && inv.is_finite()) {
            return Err(eig_err(format!("non-positive eigenvalue 1/{inv:e}")));
        }
        let lambda = 1.0 / inv;
        let y = eig.eigenvectors.column(idx).into_owned();
        let mut z = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| eig_err("singular stiffness factor".into()))?;
        z /= z.dot(&(&m * &z)).sqrt();
        let residual = eigen_residual(&k, &m, lambda, &z);
        if residual > EIGEN_RESIDUAL_TOL {
            return Err(eig_err(format!("residual {residual:e} above tolerance")));
        }
        eigenvalues.push(lambda * stiffness_scale);
        vectors.push(z.component_mul(&scaling));
    }

    let system = AssembledSystem {
        stiffness: base.stiffness * stiffness_scale,
        mass: base.mass,
        nodes: base.nodes,
    };
    Ok(HarmonicSolution {
        n,
        eigenvalues,
        vectors,
        system,
    })
}

/// Builds the modal basis for harmonics `0..=n_max`, keeping the lowest
/// `modes_per_n` radial modes per harmonic and duplicating each as a cosine/sine pair
/// for `n ≥ 1`.
pub fn solve_modes(
    plate: &EffectivePlate,
    n_max: u32,
    modes_per_n: usize,
    disc: &Discretization,
) -> Result<ModalBasis> {
    if modes_per_n == 0 {
        return Err(Error::Domain("modes_per_n must be at least 1".into()));
    }
    disc.validate()?;

    let solutions: Vec<HarmonicSolution> = (0..=n_max)
        .into_par_iter()
        .map(|n| solve_harmonic(plate, n, modes_per_n, disc))
        .collect::<Result<_>>()?;

    let boundary = Boundary {
        clamped_radius: plate.fixture_radius(),
        outer_free: true,
    };
    let mut modes = Vec::new();
    for sol in solutions {
        for (radial_index, (lambda, w)) in sol.eigenvalues.iter().zip(&sol.vectors).enumerate() {
            let profile = Arc::new(tabulate(plate, &sol.system.nodes, w));
            let frequency = lambda.sqrt() / (2.0 * PI);
            let orientations: &[Orientation] = if sol.n == 0 {
                &[Orientation::Cosine]
            } else {
                &[Orientation::Cosine, Orientation::Sine]
            };
            for &orientation in orientations {
                modes.push(Mode {
                    n: sol.n,
                    radial_index,
                    orientation,
                    frequency,
                    profile: Arc::clone(&profile),
                    boundary,
                });
            }
        }
    }
    sort_modes(&mut modes);

    Ok(ModalBasis {
        modes,
        discretization: *disc,
        provenance: plate_provenance(plate),
        pair_detuning: BTreeMap::new(),
        inner_radius: plate.inner_radius(),
        outer_radius: plate.outer_radius(),
    })
}

/// Expands a reduced eigenvector into a profile over `[inner_radius, outer_radius]`
/// with zeros on the clamped hub. Sign fixed so the outer-edge deflection is positive.
fn tabulate(plate: &EffectivePlate, nodes: &[f64], w: &DVector<f64>) -> RadialProfile {
    let mut radii = vec![plate.inner_radius()];
    let mut values = vec![0.0];
    let mut slopes = vec![0.0];
    radii.extend_from_slice(nodes);
    values.push(0.0);
    slopes.push(0.0);
    for i in 1..nodes.len() {
        values.push(w[2 * (i - 1)]);
        slopes.push(w[2 * (i - 1) + 1]);
    }
    let reference = {
        let edge = *values.last().unwrap();
        let peak = values.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        if edge.abs() > 1e-6 * peak.abs() {
            edge
        } else {
            peak
        }
    };
    if reference < 0.0 {
        values.iter_mut().for_each(|v| *v = -*v);
        slopes.iter_mut().for_each(|v| *v = -*v);
    }
    RadialProfile {
        radii,
        values,
        slopes,
    }
}

/// Plate with stiffness rescaled so a target harmonic hits a target frequency.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub plate: EffectivePlate,
    /// Factor applied to D: (f_target / f_current)².
    pub scale: f64,
    pub n: u32,
    pub target_frequency: f64,
}

/// Rescales D uniformly so the lowest radial mode of harmonic `n` in `basis` moves to
/// `target_hz`. Frequencies scale with √D, so every frequency ratio is preserved.
pub fn calibrate(
    plate: &EffectivePlate,
    basis: &ModalBasis,
    n: u32,
    target_hz: f64,
) -> Result<Calibration> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(Error::Domain(format!("target frequency {target_hz} must be positive")));
    }
    if basis.provenance != plate_provenance(plate) {
        return Err(Error::Domain("basis was not solved for this plate".into()));
    }
    let current = basis
        .fundamental(n)
        .ok_or_else(|| Error::Domain(format!("harmonic n = {n} absent from basis")))?
        .frequency;
    let scale = (target_hz / current).powi(2);
    Ok(Calibration {
        plate: plate.with_stiffness_scaled(scale),
        scale,
        n,
        target_frequency: target_hz,
    })
}
