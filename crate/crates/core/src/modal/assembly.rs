//! Radial finite-element reduction of the annular Kirchhoff plate for one
//! circumferential harmonic.
//!
//! The transverse displacement is `w(r, θ) = W(r)·cos(nθ)` (or `sin`), and `W` is
//! interpolated with Hermite cubics carrying `(W, dW/dr)` at each node. Integrating the
//! plate strain and kinetic energies over θ leaves one-dimensional radial integrals:
//!
//! ```text
//! U = ½ c_n ∫ D [κ_rr² + κ_θθ² + 2ν κ_rr κ_θθ + 2(1-ν) κ_rθ²] r dr
//! T = ½ c_n ω² ∫ μ W² r dr
//! κ_rr = W'',  κ_θθ = W'/r - n² W/r²,  κ_rθ = n (W'/r - W/r²)
//! ```
//!
//! with `c_n = 2π` for `n = 0` and `π` otherwise, so a mass-normalized vector is
//! mass-normalized over the full annulus.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::EffectivePlate;

pub const DOF_PER_NODE: usize = 2;
pub const MIN_RADIAL_NODES: usize = 8;

/// Radial resolution of the plate model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    /// Nodes on the free span `[fixture_radius, outer_radius]`, clamped node included.
    pub radial_nodes: usize,
    /// Gauss–Legendre points per element.
    pub quadrature_order: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            radial_nodes: 64,
            quadrature_order: 6,
        }
    }
}

impl Discretization {
    pub fn with_nodes(radial_nodes: usize) -> Self {
        Self {
            radial_nodes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < MIN_RADIAL_NODES {
            return Err(Error::Discretization(format!(
                "radial node count {} is below the minimum of {MIN_RADIAL_NODES}",
                self.radial_nodes
            )));
        }
        if !(2..=16).contains(&self.quadrature_order) {
            return Err(Error::Discretization(format!(
                "quadrature order {} outside 2..=16",
                self.quadrature_order
            )));
        }
        Ok(())
    }
}

/// Stiffness and mass matrices with the clamp already imposed.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    /// Node radii on the free span; `nodes[0]` is the clamped fixture edge.
    pub nodes: Vec<f64>,
}

impl AssembledSystem {
    pub fn dof_count(&self) -> usize {
        self.stiffness.nrows()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on P_n.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut points = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (points, weights)
}

/// Node radii on `[fixture_radius, outer_radius]`, with a node on every segment
/// boundary and elements shared among segments in proportion to their length.
pub fn radial_mesh(plate: &EffectivePlate, disc: &Discretization) -> Result<Vec<f64>> {
    disc.validate()?;
    let start = plate.fixture_radius();
    let end = plate.outer_radius();
    let mut breaks = vec![start];
    breaks.extend(
        plate
            .segments
            .iter()
            .map(|s| s.r_start)
            .filter(|&r| r > start && r < end),
    );
    breaks.push(end);

    let elements = disc.radial_nodes - 1;
    let spans = breaks.len() - 1;
    if elements < spans {
        return Err(Error::Discretization(format!(
            "{} nodes cannot resolve {spans} plate segments",
            disc.radial_nodes
        )));
    }
    let total = end - start;
    let share: Vec<f64> = breaks
        .windows(2)
        .map(|w| (w[1] - w[0]) / total * elements as f64)
        .collect();
    let mut counts: Vec<usize> = share.iter().map(|s| (s.floor() as usize).max(1)).collect();
    while counts.iter().sum::<usize>() < elements {
        let i = (0..spans)
            .max_by(|&a, &b| {
                (share[a] - counts[a] as f64).total_cmp(&(share[b] - counts[b] as f64))
            })
            .unwrap();
        counts[i] += 1;
    }
    while counts.iter().sum::<usize>() > elements {
        let i = (0..spans).max_by_key(|&i| counts[i]).unwrap();
        counts[i] -= 1;
    }

    let mut nodes = Vec::with_capacity(disc.radial_nodes);
    nodes.push(start);
    for (span, &count) in counts.iter().enumerate() {
        let (a, b) = (breaks[span], breaks[span + 1]);
        for k in 1..=count {
            nodes.push(if k == count {
                b
            } else {
                a + (b - a) * k as f64 / count as f64
            });
        }
    }
    Ok(nodes)
}

pub(crate) fn harmonic_weight(n: u32) -> f64 {
    if n == 0 {
        2.0 * PI
    } else {
        PI
    }
}

/// Hermite cubic values, first and second radial derivatives on an element of length h.
pub(crate) fn hermite(xi: f64, h: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let (x2, x3) = (xi * xi, xi * xi * xi);
    let n = [
        1.0 - 3.0 * x2 + 2.0 * x3,
        h * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        h * (x3 - x2),
    ];
    let d = [
        (-6.0 * xi + 6.0 * x2) / h,
        1.0 - 4.0 * xi + 3.0 * x2,
        (6.0 * xi - 6.0 * x2) / h,
        3.0 * x2 - 2.0 * xi,
    ];
    let dd = [
        (-6.0 + 12.0 * xi) / (h * h),
        (-4.0 + 6.0 * xi) / h,
        (6.0 - 12.0 * xi) / (h * h),
        (6.0 * xi - 2.0) / h,
    ];
    (n, d, dd)
}

/// Builds the reduced stiffness and mass matrices for harmonic `n`.
pub fn assemble(plate: &EffectivePlate, n: u32, disc: &Discretization) -> Result<AssembledSystem> {
    let mut system = assemble_unscaled(plate, n, disc)?;
    system.stiffness *= plate.stiffness_scale;
    Ok(system)
}

/// Same as [`assemble`] but with the homogenized D, ignoring the plate's stiffness scale.
pub(crate) fn assemble_unscaled(
    plate: &EffectivePlate,
    n: u32,
    disc: &Discretization,
) -> Result<AssembledSystem> {
    let nodes = radial_mesh(plate, disc)?;
    let (gp, gw) = gauss_legendre(disc.quadrature_order);
    let nu = plate.poisson_ratio();
    let cn = harmonic_weight(n);
    let nf = f64::from(n);

    let full = DOF_PER_NODE * nodes.len();
    let mut k_full = DMatrix::<f64>::zeros(full, full);
    let mut m_full = DMatrix::<f64>::zeros(full, full);

    for (e, pair) in nodes.windows(2).enumerate() {
        let (r0, r1) = (pair[0], pair[1]);
        let h = r1 - r0;
        let mid = 0.5 * (r0 + r1);
        let d = plate.base_stiffness_at(mid);
        let mu = plate.areal_mass_at(mid);

        let mut ke = [[0.0; 4]; 4];
        let mut me = [[0.0; 4]; 4];
        for (&x, &w) in gp.iter().zip(&gw) {
            let xi = 0.5 * (x + 1.0);
            let r = r0 + h * xi;
            let jac = 0.5 * w * h * r;
            let (shape, slope, curv) = hermite(xi, h);
            let mut a = [0.0; 4];
            let mut b = [0.0; 4];
            let mut c = [0.0; 4];
            for i in 0..4 {
                a[i] = curv[i];
                b[i] = slope[i] / r - nf * nf * shape[i] / (r * r);
                c[i] = nf * (slope[i] / r - shape[i] / (r * r));
            }
            for i in 0..4 {
                for j in 0..4 {
                    ke[i][j] += cn
                        * d
                        * jac
                        * (a[i] * a[j]
                            + b[i] * b[j]
                            + nu * (a[i] * b[j] + b[i] * a[j])
                            + 2.0 * (1.0 - nu) * c[i] * c[j]);
                    me[i][j] += cn * mu * jac * shape[i] * shape[j];
                }
            }
        }

        let base = DOF_PER_NODE * e;
        for i in 0..4 {
            for j in 0..4 {
                k_full[(base + i, base + j)] += ke[i][j];
                m_full[(base + i, base + j)] += me[i][j];
            }
        }
    }

    // Clamp at the fixture edge: drop W and W' of node 0.
    let stiffness = k_full.view((2, 2), (full - 2, full - 2)).into_owned();
    let mass = m_full.view((2, 2), (full - 2, full - 2)).into_owned();
    Ok(AssembledSystem {
        stiffness,
        mass,
        nodes,
    })
}
