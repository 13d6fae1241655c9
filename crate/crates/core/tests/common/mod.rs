//! Independent reference computations shared by the integration suites.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// Lowest natural frequencies (Hz) of a uniform annular Kirchhoff plate, clamped at
/// `r = clamp` and free at `r = edge`, for harmonic `n`.
///
/// Strong form `D ∇⁴W = μ ω² W` with `∇² = d²/dr² + (1/r) d/dr − n²/r²`, discretized by
/// second-order central differences on `intervals` uniform steps. Ghost nodes carry the
/// boundary conditions: `W'(clamp) = 0` by symmetry, and at the free edge zero radial
/// moment `W'' + ν(W'/r − n²W/r²) = 0` and zero effective shear
/// `(∇²W)' − (1−ν)(n²/r²)(W' − W/r) = 0`.
pub fn fd_plate_frequencies(
    stiffness: f64,
    areal_mass: f64,
    poisson: f64,
    clamp: f64,
    edge: f64,
    n: u32,
    intervals: usize,
    count: usize,
) -> Vec<f64> {
    let h = (edge - clamp) / intervals as f64;
    let nn = f64::from(n * n);
    let radius = |i: isize| clamp + i as f64 * h;
    let unknowns = intervals; // W_1..W_N

    // Extended vector indices -1..=N+2 stored at offset 1.
    let extend = |u: &[f64]| -> Vec<f64> {
        let big_n = intervals as isize;
        let mut w = vec![0.0; intervals + 4];
        let at = |i: isize| (i + 1) as usize;
        for i in 1..=big_n {
            w[at(i)] = u[(i - 1) as usize];
        }
        w[at(0)] = 0.0;
        w[at(-1)] = w[at(1)];
        let a = radius(big_n);
        let (wm, w0) = (w[at(big_n - 1)], w[at(big_n)]);
        // moment: (w+ - 2w0 + wm)/h² + ν((w+ - wm)/(2h a) - n² w0/a²) = 0
        let cp = 1.0 / (h * h) + poisson / (2.0 * h * a);
        let rest = (-2.0 * w0 + wm) / (h * h) + poisson * (-wm / (2.0 * h * a) - nn * w0 / (a * a));
        let wp = -rest / cp;
        w[at(big_n + 1)] = wp;
        let lap = |w: &[f64], i: isize| {
            let r = radius(i);
            (w[at(i + 1)] - 2.0 * w[at(i)] + w[at(i - 1)]) / (h * h)
                + (w[at(i + 1)] - w[at(i - 1)]) / (2.0 * h * r)
                - nn * w[at(i)] / (r * r)
        };
        // shear: (L_{N+1} - L_{N-1})/(2h) - (1-ν) n²/a² ((w+ - wm)/(2h) - w0/a) = 0
        let l_minus = lap(&w, big_n - 1);
        let rp = radius(big_n + 1);
        let c2 = 1.0 / (h * h) + 1.0 / (2.0 * h * rp);
        let l_plus_rest =
            (-2.0 * w[at(big_n + 1)] + w0) / (h * h) - w0 / (2.0 * h * rp) - nn * w[at(big_n + 1)] / (rp * rp);
        let slope = (wp - wm) / (2.0 * h);
        let target_l_plus = l_minus + 2.0 * h * (1.0 - poisson) * nn / (a * a) * (slope - w0 / a);
        w[at(big_n + 2)] = (target_l_plus - l_plus_rest) / c2;
        w
    };

    let apply = |u: &[f64]| -> Vec<f64> {
        let w = extend(u);
        let at = |i: isize| (i + 1) as usize;
        let lap_at = |i: isize| {
            let r = radius(i);
            (w[at(i + 1)] - 2.0 * w[at(i)] + w[at(i - 1)]) / (h * h)
                + (w[at(i + 1)] - w[at(i - 1)]) / (2.0 * h * r)
                - nn * w[at(i)] / (r * r)
        };
        let lap: Vec<f64> = (0..=(intervals as isize + 1)).map(lap_at).collect();
        (1..=intervals as isize)
            .map(|i| {
                let r = radius(i);
                let l = |k: isize| lap[k as usize];
                (l(i + 1) - 2.0 * l(i) + l(i - 1)) / (h * h) + (l(i + 1) - l(i - 1)) / (2.0 * h * r)
                    - nn * l(i) / (r * r)
            })
            .collect()
    };

    let mut a = DMatrix::<f64>::zeros(unknowns, unknowns);
    let mut unit = vec![0.0; unknowns];
    for j in 0..unknowns {
        unit[j] = 1.0;
        let col = apply(&unit);
        for (i, v) in col.into_iter().enumerate() {
            a[(i, j)] = v;
        }
        unit[j] = 0.0;
    }

    let mut lambdas: Vec<f64> = a
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.re > 0.0 && z.im.abs() < 1e-6 * z.re)
        .map(|z| z.re)
        .collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas
        .into_iter()
        .take(count)
        .map(|l| (l * stiffness / areal_mass).sqrt() / (2.0 * std::f64::consts::PI))
        .collect()
}
