//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

mod common;

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stator::analysis::{fit_sinusoid, CircleSample, SampleSource, WaveKind};
use stator::config::RunConfig;
use stator::dynamics::{self, crest_angle, mixed_response, ExternalMode, ModalModel};
use stator::geometry::{homogenize, Material, StatorGeometry};
use stator::grid::SampleGrid;
use stator::holography::{self, wrap, OpticalConfig};
use stator::modal::{solve_harmonic, solve_modes, Discretization, Orientation};
use stator::pipeline::{self, prepare};
use stator::reference;

const ORACLE_REL_TOL: f64 = 0.01;
const ORACLE_MAX_SECONDS: f64 = 10.0;
const DEGENERACY_REL_TOL: f64 = 1e-9;
const ORTHOGONALITY_TOL: f64 = 1e-8;
const ANCHOR_KHZ: f64 = 3.68;
const ANCHOR_REL_TOL: f64 = 1e-4;
const SETTLING_TARGET_S: f64 = 3.4e-3;
const SETTLING_REL_TOL: f64 = 0.10;
const SETTLING_MAX_SECONDS: f64 = 5.0;
const PROBE_RATIOS: [f64; 3] = [30.0, 60.0, 100.0];
const PROBE_RATIO_REL_TOL: f64 = 0.30;
const ENVELOPE_RATIO_MAX: f64 = 1.01;
const CREST_TOL_DEG: f64 = 0.5;
const ROUNDTRIP_REL_TOL: f64 = 1e-3;
const DARK_FRINGE_NM: f64 = 101.8;
const DARK_FRINGE_TOL_NM: f64 = 0.5;
const J0_ZERO: f64 = 2.40483;
const STROBE_SHIFT_TOL_DEG: f64 = 0.1;
const FIT_REL_TOL: f64 = 1e-12;
const EQUIVARIANCE_TOL: f64 = 1e-9;
const MIX_WEIGHT_FACTOR: f64 = 4.0;
const MIX_CORRELATION_MAX: f64 = 0.95;
const MIX_ZETA: f64 = 0.02;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn default_config() -> RunConfig {
    RunConfig::default()
}

fn c1_oracle() -> Outcome {
    let geom = StatorGeometry {
        notch_count: 0,
        base_thickness: 5.02e-3,
        ..StatorGeometry::default()
    };
    let mat = Material::default();
    let plate = homogenize(&geom, &mat).unwrap();
    let start = Instant::now();
    let basis = solve_modes(&plate, 4, 2, &Discretization::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let d = plate.stiffness_at(geom.outer_radius);
    let mu = plate.areal_mass_at(geom.outer_radius);
    let mut worst = 0.0f64;
    for n in 0..=4 {
        let fd = common::fd_plate_frequencies(d, mu, mat.poisson_ratio, geom.fixture_radius, geom.outer_radius, n, 400, 2);
        for (k, f_fd) in fd.iter().enumerate() {
            let f_fe = basis.find(n, k, Orientation::Cosine).unwrap().frequency;
            worst = worst.max((f_fe - f_fd).abs() / f_fd);
        }
    }
    outcome(
        worst < ORACLE_REL_TOL && secs < ORACLE_MAX_SECONDS,
        format!("max FE/FD rel error {worst:.2e} (< {ORACLE_REL_TOL}), solve {secs:.2} s (< {ORACLE_MAX_SECONDS} s)"),
    )
}

fn c2_degeneracy() -> Outcome {
    let cfg = default_config();
    let p = prepare(&cfg).unwrap();
    let basis = p.basis();
    let mut split = 0.0f64;
    for m in basis.modes.iter().filter(|m| m.orientation == Orientation::Cosine && m.n > 0) {
        let s = basis.find(m.n, m.radial_index, Orientation::Sine).unwrap();
        split = split.max((m.frequency - s.frequency).abs() / m.frequency);
    }
    let mut ortho = 0.0f64;
    let disc = cfg.modal.discretization();
    for n in 0..=cfg.modal.n_max {
        let sol = solve_harmonic(&p.plate, n, cfg.modal.modes_per_n, &disc).unwrap();
        let m = &sol.system.mass;
        for i in 0..sol.vectors.len() {
            for j in 0..sol.vectors.len() {
                let g = sol.vectors[i].dot(&(m * &sol.vectors[j]));
                let target = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((g - target).abs());
            }
        }
    }
    outcome(
        split < DEGENERACY_REL_TOL && ortho < ORTHOGONALITY_TOL,
        format!("pair split {split:.1e} (< {DEGENERACY_REL_TOL:e}), max |WᵢᵀMWⱼ - δᵢⱼ| {ortho:.1e} (< {ORTHOGONALITY_TOL:e})"),
    )
}

fn c3_calibration() -> Outcome {
    let p = prepare(&default_config()).unwrap();
    let table = pipeline::computed_table(p.basis());
    let f1 = table[0].unwrap();
    let rel = (f1 - ANCHOR_KHZ).abs() / ANCHOR_KHZ;
    let values: Vec<f64> = table.iter().map(|v| v.unwrap()).collect();
    let ascending = values.windows(2).all(|w| w[1] > w[0]);
    let devs: Vec<String> = values
        .iter()
        .zip(reference::SIMULATION.khz)
        .enumerate()
        .map(|(i, (v, r))| format!("Md{} {:+.1}%", i + 1, reference::deviation_percent(*v, r.unwrap())))
        .collect();
    outcome(
        rel < ANCHOR_REL_TOL && ascending,
        format!(
            "f(n=1) = {:.4} kHz (rel {rel:.1e} < {ANCHOR_REL_TOL:e}), Md1..Md7 ascending: {ascending}; vs reference simulation row: {}",
            f1,
            devs.join(", ")
        ),
    )
}

fn c4_settling() -> Outcome {
    let cfg = default_config();
    let start = Instant::now();
    let p = prepare(&cfg).unwrap();
    let dt = p.model.default_time_step(&p.drive);
    let traj = dynamics::respond(&p.model, &p.drive, cfg.response.duration, dt).unwrap();
    let probes = dynamics::probe(&p.model, &traj, &pipeline::probe_points(&p)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let times: Vec<f64> = probes.iter().map(|q| q.settling_time.unwrap_or(f64::INFINITY)).collect();
    let worst = times
        .iter()
        .map(|t| (t - SETTLING_TARGET_S).abs() / SETTLING_TARGET_S)
        .fold(0.0, f64::max);
    let zeta = p.model.damping_for(p.drive.electrode_harmonic);

    // The 4/(ζω) rule taken literally corresponds to a 1.8% band, not 5%.
    let omega = TAU * p.drive.drive_frequency;
    let zeta_rule = 4.0 / (SETTLING_TARGET_S * omega);
    let literal = ModalModel::with_uniform_damping(p.model.basis.clone(), zeta_rule).unwrap();
    let lt = dynamics::respond(&literal, &p.drive, cfg.response.duration, dt).unwrap();
    let lp = dynamics::probe(&literal, &lt, &pipeline::probe_points(&p)[2..]).unwrap();
    let literal_ms = lp[0].settling_time.map_or(f64::NAN, |t| t * 1e3);

    outcome(
        worst <= SETTLING_REL_TOL && secs < SETTLING_MAX_SECONDS,
        format!(
            "95% envelope settling {:?} ms at {:.1} Hz with ζ = {zeta:.5} from ln(20)/(ζω) = 3.4 ms (target {} ms ± {}%), {secs:.2} s; \
             [info] ζ = {zeta_rule:.5} from 4/(ζω) = 3.4 ms settles at {literal_ms:.3} ms",
            times.iter().map(|t| (t * 1e6).round() / 1e3).collect::<Vec<_>>(),
            p.drive.drive_frequency,
            SETTLING_TARGET_S * 1e3,
            SETTLING_REL_TOL * 100.0
        ),
    )
}

fn c5_probe_ordering() -> Outcome {
    let p = prepare(&default_config()).unwrap();
    let ss = dynamics::steady_state(&p.model, &p.drive).unwrap();
    let amps: Vec<f64> = pipeline::probe_points(&p)
        .iter()
        .map(|&(r, t)| ss.point_phasor(&p.model, r, t).unwrap().norm())
        .collect();
    let ordered = amps[0] < amps[1] && amps[1] < amps[2];
    let mut within = true;
    let mut text = Vec::new();
    for (a, target) in amps.iter().zip(PROBE_RATIOS) {
        let ratio = 100.0 * a / amps[2];
        within &= (ratio - target).abs() <= PROBE_RATIO_REL_TOL * target;
        text.push(format!("{ratio:.1}"));
    }
    outcome(
        ordered && within,
        format!(
            "amplitudes {:.1}/{:.1}/{:.1} nm, ratio {} vs 30:60:100 (± {}%), ordered: {ordered}",
            amps[0] * 1e9,
            amps[1] * 1e9,
            amps[2] * 1e9,
            text.join(":"),
            PROBE_RATIO_REL_TOL * 100.0
        ),
    )
}

fn c6_traveling() -> Outcome {
    let p = prepare(&default_config()).unwrap();
    let ss = dynamics::steady_state(&p.model, &p.drive).unwrap();
    let b = p.basis();
    let n = p.drive.electrode_harmonic;
    let mut env_ratio = 0.0f64;
    let mut crest_err = 0.0f64;
    for r in [0.5 * (b.outer_radius + p.config.geometry.tooth_band_inner_radius), b.outer_radius] {
        let grid = Arc::new(SampleGrid::circle(r, 1440, b.inner_radius, b.outer_radius).unwrap());
        let amp = ss.amplitude_field(&p.model, grid.clone());
        let (lo, hi) = amp.valid_values().fold((f64::MAX, 0.0f64), |(a, c), v| (a.min(v), c.max(v)));
        env_ratio = env_ratio.max(hi / lo);
        for dt in [2e-6, 5e-6, 1e-5] {
            let omega = p.drive.angular_frequency();
            let a = ss.snapshot(&p.model, grid.clone(), 0.0);
            let c = ss.snapshot(&p.model, grid.clone(), (omega * dt).to_degrees());
            let sector = TAU / n as f64;
            let raw = crest_angle(&c.values, n) - crest_angle(&a.values, n);
            let moved = (raw + 0.5 * sector).rem_euclid(sector) - 0.5 * sector;
            crest_err = crest_err.max((moved - omega * dt / n as f64).abs().to_degrees());
        }
    }
    outcome(
        env_ratio < ENVELOPE_RATIO_MAX && crest_err < CREST_TOL_DEG,
        format!("envelope max/min {env_ratio:.6} (< {ENVELOPE_RATIO_MAX}), crest advance error {crest_err:.2e}° (< {CREST_TOL_DEG}°)"),
    )
}

fn c7_holography() -> Outcome {
    let p = prepare(&default_config()).unwrap();
    let run = pipeline::run_fit(&p).unwrap();
    let ss = dynamics::steady_state(&p.model, &p.drive).unwrap();
    let modal = ss.point_phasor(&p.model, run.radius, 0.0).unwrap().norm();
    let worst = run
        .fits
        .iter()
        .map(|(_, f)| (f.amplitude - modal).abs() / modal)
        .fold(0.0, f64::max);

    let optics = OpticalConfig::default();
    let expected = J0_ZERO * optics.wavelength / (4.0 * std::f64::consts::PI);
    let dark = optics.first_dark_fringe();
    let grid = Arc::new(SampleGrid::circle(0.01, 8, 0.0, 1.0).unwrap());
    let img = holography::time_averaged(
        &stator::grid::DisplacementField::from_fn(grid, move |_, _| dark),
        &optics,
    )
    .unwrap();
    let dark_nm = dark * 1e9;
    let pass = worst < ROUNDTRIP_REL_TOL
        && (dark_nm - DARK_FRINGE_NM).abs() <= DARK_FRINGE_TOL_NM
        && (expected * 1e9 - DARK_FRINGE_NM).abs() <= DARK_FRINGE_TOL_NM
        && img.intensity[0] < 1e-12;
    outcome(
        pass,
        format!(
            "hologram round-trip amplitude error {worst:.2e} (< {ROUNDTRIP_REL_TOL:e}) on {} strobe phases; first dark fringe {dark_nm:.3} nm (j0 zero {J0_ZERO} gives {:.3} nm, target {DARK_FRINGE_NM} ± {DARK_FRINGE_TOL_NM} nm), intensity there {:.1e}",
            run.fits.len(),
            expected * 1e9,
            img.intensity[0]
        ),
    )
}

fn strobe_shift(n: u32, phases: Vec<f64>) -> (f64, WaveKind) {
    let mut cfg = default_config();
    cfg.drive.electrode_harmonic = n;
    cfg.analysis.strobe_phases_deg = phases;
    let p = prepare(&cfg).unwrap();
    let run = pipeline::run_fit(&p).unwrap();
    (run.track.spatial_shifts_deg[1], run.track.classification)
}

fn c8_strobe_arithmetic() -> Outcome {
    let (s4, k4) = strobe_shift(4, vec![0.0, 60.0, 120.0]);
    let (s5, k5) = strobe_shift(5, vec![0.0, 15.0, 30.0]);
    let pass = (s4 - 15.0).abs() <= STROBE_SHIFT_TOL_DEG
        && (s5 - 3.0).abs() <= STROBE_SHIFT_TOL_DEG
        && k4 == WaveKind::Traveling
        && k5 == WaveKind::Traveling;
    outcome(
        pass,
        format!(
            "n=4 60° strobe -> {s4:.4}° ({}), n=5 15° strobe -> {s5:.4}° ({}), tolerance ± {STROBE_SHIFT_TOL_DEG}°",
            k4.as_str(),
            k5.as_str()
        ),
    )
}

fn c9_fit_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut roundtrip, mut rot, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n: u32 = rng.gen_range(1..=8);
        let a = rng.gen_range(1e-9..1e-6);
        let phi = rng.gen_range(-3.1..3.1);
        let d = rng.gen_range(-1e-7..1e-7);
        let s = CircleSample::from_fn(0.0145, 360, SampleSource::Simulation, |t| a * (n as f64 * t + phi).sin() + d).unwrap();
        let f = fit_sinusoid(&s, n).unwrap();
        let span = a.max(d.abs());
        roundtrip = roundtrip
            .max((f.amplitude - a).abs() / a)
            .max(wrap(f.phase - phi).abs())
            .max((f.offset - d).abs() / span)
            .max(f.rms_residual / span);

        let delta = rng.gen_range(0.0..TAU);
        let fr = fit_sinusoid(&s.rotated(delta).unwrap(), n).unwrap();
        rot = rot
            .max(wrap(f.phase - fr.phase - n as f64 * delta).abs())
            .max((fr.amplitude - f.amplitude).abs() / a)
            .max((fr.offset - f.offset).abs() / span);

        let c = rng.gen_range(1e-3..1e3);
        let fs = fit_sinusoid(&s.scaled(c), n).unwrap();
        scale = scale
            .max((fs.amplitude - c * f.amplitude).abs() / (c * a))
            .max((fs.offset - c * f.offset).abs() / (c * span))
            .max(wrap(fs.phase - f.phase).abs());
        if fs.n != f.n {
            scale = f64::INFINITY;
        }
    }
    // Phases are compared in radians against the same bound.
    outcome(
        roundtrip < FIT_REL_TOL && rot < EQUIVARIANCE_TOL && scale < EQUIVARIANCE_TOL,
        format!(
            "200 random draws: round-trip max rel error {roundtrip:.1e} (< {FIT_REL_TOL:e}), rotation {rot:.1e}, scale {scale:.1e} (< {EQUIVARIANCE_TOL:e})"
        ),
    )
}

fn c10_mixed() -> Outcome {
    let p = prepare(&default_config()).unwrap();
    let model = ModalModel::with_uniform_damping(p.model.basis.clone(), MIX_ZETA).unwrap();
    let mut mode = model.basis.fundamental(6).unwrap().clone();
    mode.frequency = reference::MD6_OUT_OF_PLANE_KHZ * 1e3;
    let ext = ExternalMode::lateral_proxy(reference::LATERAL_MODE_KHZ * 1e3, MIX_ZETA);
    let b = &model.basis;
    let grid = Arc::new(SampleGrid::cartesian(128, b.inner_radius, b.outer_radius).unwrap());
    let mix = mixed_response(&model, &mode, &ext, reference::MIXED_DRIVE_KHZ * 1e3, grid).unwrap();
    let ratio = mix.weights[0] / mix.weights[1];
    let ca = mix.field.correlation(&mix.components[0]).unwrap();
    let cb = mix.field.correlation(&mix.components[1]).unwrap();
    let pass = (1.0 / MIX_WEIGHT_FACTOR..=MIX_WEIGHT_FACTOR).contains(&ratio)
        && ca.abs() < MIX_CORRELATION_MAX
        && cb.abs() < MIX_CORRELATION_MAX;
    outcome(
        pass,
        format!(
            "weight ratio out-of-plane/lateral {ratio:.3} (within ×{MIX_WEIGHT_FACTOR}), correlation with pure modes {ca:.3} / {cb:.3} (< {MIX_CORRELATION_MAX})"
        ),
    )
}

fn run_all_commands(cfg: &RunConfig, out: &Path) -> Vec<(String, Vec<u8>)> {
    let p = prepare(cfg).unwrap();
    pipeline::cmd_modes(&p, out).unwrap();
    pipeline::cmd_respond(&p, out).unwrap();
    pipeline::cmd_fringes(&p, out).unwrap();
    pipeline::cmd_fit(&p, out).unwrap();
    pipeline::cmd_report(&p, out).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c11_determinism() -> Outcome {
    let mut cfg = default_config();
    cfg.seed = 1234;
    cfg.optics.phase_noise = 0.05;
    cfg.fringes.image_size = 96;
    cfg.response.duration = 2e-3;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = run_all_commands(&cfg, a.path());
    let fb = run_all_commands(&cfg, b.path());
    let same = fa == fb;
    let bytes: usize = fa.iter().map(|(_, v)| v.len()).sum();
    outcome(
        same && !fa.is_empty(),
        format!("{} output files ({bytes} bytes) byte-identical across two seeded runs: {same}", fa.len()),
    )
}

fn main() {
    let criteria: [Check; 11] = [
        ("eigen-solver oracle equivalence", c1_oracle),
        ("degeneracy and orthogonality", c2_degeneracy),
        ("calibration anchor and ordering", c3_calibration),
        ("settling-time reproduction", c4_settling),
        ("radial amplitude ordering", c5_probe_ordering),
        ("traveling-wave identity", c6_traveling),
        ("holography round-trip", c7_holography),
        ("strobe-phase arithmetic", c8_strobe_arithmetic),
        ("sinusoid fit exactness and equivariance", c9_fit_exactness),
        ("mixed-mode demonstration", c10_mixed),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {}: {} | {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
