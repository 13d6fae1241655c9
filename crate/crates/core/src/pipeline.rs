//! Stage wiring shared by the command-line front end and the integration tests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, CircleSample, FitResult, SampleSource};
use crate::config::RunConfig;
use crate::dynamics::{
    self, calibrate_force_per_volt, damping_for_settling, DriveConfig, ModalModel, PhaseLayout,
    SteadyState, SETTLING_BAND,
};
use crate::error::{Error, Result};
use crate::geometry::{homogenize, EffectivePlate};
use crate::grid::{DisplacementField, SampleGrid};
use crate::holography::{self, PhaseMap};
use crate::io::{f32_dump_bytes, pgm_bytes, probe_csv, write_atomic};
use crate::modal::{calibrate, solve_modes, ModalBasis};
use crate::reference;

/// Everything derived from a configuration before any stage-specific work.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub plate: EffectivePlate,
    /// Stiffness factor applied by calibration (1 without calibration).
    pub calibration_scale: f64,
    pub model: ModalModel,
    pub drive: DriveConfig,
}

impl Prepared {
    pub fn basis(&self) -> &ModalBasis {
        &self.model.basis
    }
}

/// Homogenizes, solves (and calibrates) the basis, sets damping and resolves the drive.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let m = &config.modal;
    let disc = m.discretization();
    let mut plate = homogenize(&config.geometry, &config.material)?;
    let mut basis = solve_modes(&plate, m.n_max, m.modes_per_n, &disc)?;
    let mut calibration_scale = 1.0;
    if let Some(target) = m.calibration {
        let cal = calibrate(&plate, &basis, target.n, target.frequency)?;
        calibration_scale = cal.scale;
        plate = cal.plate;
        basis = solve_modes(&plate, m.n_max, m.modes_per_n, &disc)?;
    }
    for (&n, &eps) in &m.pair_detuning {
        basis = basis.with_pair_detuning(n, eps)?;
    }

    let d = &config.drive;
    let nd = d.electrode_harmonic;
    let drive_frequency = match d.drive_frequency {
        Some(f) => f,
        None => basis
            .fundamental(nd)
            .ok_or_else(|| Error::Config(format!("electrode harmonic {nd} has no mode")))?
            .frequency,
    };
    let mut model = match config.response.settling_time {
        Some(t) => ModalModel::with_uniform_damping(basis, damping_for_settling(t, drive_frequency, SETTLING_BAND)?)?,
        None => ModalModel::new(basis, &config.material)?,
    };
    for e in &config.external_modes {
        model = model.with_external(e.clone())?;
    }
    let mut drive = DriveConfig {
        drive_frequency,
        peak_to_peak_voltage: d.peak_to_peak_voltage,
        force_per_volt: 1.0,
        electrode_harmonic: nd,
        phase_layout: d.phase_layout,
    };
    drive.force_per_volt = match d.force_per_volt {
        Some(f) => f,
        None => calibrate_force_per_volt(&model, &drive, (model.basis.outer_radius, 0.0), d.edge_amplitude)?,
    };
    Ok(Prepared {
        config: config.clone(),
        plate,
        calibration_scale,
        model,
        drive,
    })
}

/// Files written by a command plus a short human-readable summary.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

impl CommandOutput {
    fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }
}

pub fn cmd_modes(p: &Prepared, out: &Path) -> Result<CommandOutput> {
    let basis = p.basis();
    let mut o = CommandOutput::default();
    o.write(out, "modes.csv", basis.to_csv().as_bytes())?;
    o.write(out, "mode_profiles.txt", basis.profiles_dump().as_bytes())?;
    let s = &mut o.summary;
    let _ = writeln!(s, "{} modes, stiffness scale {:.6}", basis.len(), p.calibration_scale);
    for n in 0..=p.config.modal.n_max {
        if let Some(m) = basis.fundamental(n) {
            let _ = writeln!(s, "n = {n}: {:.2} Hz", m.frequency);
        }
    }
    Ok(o)
}

/// Probe points `(r, θ)` from the configuration.
pub fn probe_points(p: &Prepared) -> Vec<(f64, f64)> {
    let g = &p.config.geometry;
    let r = &p.config.response;
    let radii = r.probe_radii.clone().unwrap_or_else(|| {
        vec![
            g.tooth_band_inner_radius,
            0.5 * (g.tooth_band_inner_radius + g.outer_radius),
            g.outer_radius,
        ]
    });
    radii.into_iter().map(|x| (x, r.probe_theta)).collect()
}

pub fn cmd_respond(p: &Prepared, out: &Path) -> Result<CommandOutput> {
    let dt = p.config.response.dt.unwrap_or_else(|| p.model.default_time_step(&p.drive));
    let traj = dynamics::respond(&p.model, &p.drive, p.config.response.duration, dt)?;
    let probes = dynamics::probe(&p.model, &traj, &probe_points(p))?;

    let mut report = String::new();
    let zeta = p.model.damping_for(p.drive.electrode_harmonic);
    let _ = writeln!(report, "drive_frequency_Hz {}", p.drive.drive_frequency);
    let _ = writeln!(report, "peak_to_peak_voltage_V {}", p.drive.peak_to_peak_voltage);
    let _ = writeln!(report, "force_per_volt_N_per_V {}", p.drive.force_per_volt);
    let _ = writeln!(report, "damping_ratio {zeta}");
    let _ = writeln!(report, "dt_s {dt}");
    let _ = writeln!(report, "settling_band {SETTLING_BAND}");
    let _ = writeln!(report, "point_id,r_m,theta_rad,steady_amplitude_m,settling_time_s");
    for (id, pr) in probes.iter().enumerate() {
        let settle = pr.settling_time.map_or("not_settled".to_string(), |t| t.to_string());
        let _ = writeln!(report, "{id},{},{},{},{settle}", pr.r, pr.theta, pr.steady_amplitude);
    }

    let mut o = CommandOutput::default();
    o.write(out, "probes.csv", probe_csv(&traj.times, &probes).as_bytes())?;
    o.write(out, "settling.txt", report.as_bytes())?;
    let s = &mut o.summary;
    for (id, pr) in probes.iter().enumerate() {
        let _ = writeln!(
            s,
            "probe {id} r = {:.2} mm: amplitude {:.2} nm, settling {}",
            pr.r * 1e3,
            pr.steady_amplitude * 1e9,
            pr.settling_time.map_or("not reached".into(), |t| format!("{:.3} ms", t * 1e3))
        );
    }
    Ok(o)
}

fn fmt_deg(x: f64) -> String {
    format!("{x}").replace('-', "m")
}

/// Steady snapshot at a strobe phase, scaled by the strobe pulse gain.
pub fn strobe_snapshot(
    p: &Prepared,
    ss: &SteadyState,
    grid: Arc<SampleGrid>,
    strobe_phase_deg: f64,
) -> DisplacementField {
    let mut f = ss.snapshot(&p.model, grid, strobe_phase_deg);
    let gain = p.config.optics.strobe_gain();
    if gain != 1.0 {
        f.values.iter_mut().for_each(|v| *v *= gain);
    }
    f
}

fn image_grid(p: &Prepared) -> Result<Arc<SampleGrid>> {
    let b = p.basis();
    Ok(Arc::new(SampleGrid::cartesian(
        p.config.fringes.image_size,
        b.inner_radius,
        b.outer_radius,
    )?))
}

/// Drive of one harmonic at its own resonance with a standing (single-phase) pattern.
pub fn standing_drive(p: &Prepared, n: u32, zero: bool) -> Result<DriveConfig> {
    let f = p
        .basis()
        .fundamental(n)
        .ok_or_else(|| Error::Domain(format!("harmonic {n} absent from basis")))?
        .frequency;
    let mut drive = DriveConfig {
        drive_frequency: f,
        electrode_harmonic: n,
        phase_layout: PhaseLayout::SinglePhase,
        ..p.drive.clone()
    };
    drive.force_per_volt = if zero {
        0.0
    } else {
        calibrate_force_per_volt(&p.model, &drive, (p.basis().outer_radius, 0.0), p.config.drive.edge_amplitude)?
    };
    Ok(drive)
}

fn phase_dump(map: &PhaseMap) -> Vec<u8> {
    let mut header = map.grid.describe();
    header.push(format!("strobe_phase_a_deg {}", map.strobe_phase_a));
    header.push(format!("strobe_phase_b_deg {}", map.strobe_phase_b));
    header.push("units rad".into());
    f32_dump_bytes("wrapped_phase", &header, &map.phase)
}

pub fn cmd_fringes(p: &Prepared, out: &Path) -> Result<CommandOutput> {
    let grid = image_grid(p)?;
    let optics = &p.config.optics;
    let fr = &p.config.fringes;
    let mut o = CommandOutput::default();

    for &n in &fr.harmonics {
        let drive = standing_drive(p, n, fr.zero_drive)?;
        let ss = dynamics::steady_state(&p.model, &drive)?;
        let amp = ss.amplitude_field(&p.model, grid.clone());
        let img = holography::time_averaged(&amp, optics)?;
        let bytes = pgm_bytes(img.width(), img.height(), &img.to_gray())?;
        o.write(out, &format!("time_averaged_n{n}.pgm"), &bytes)?;
        let _ = writeln!(o.summary, "time-averaged n = {n} at {:.2} Hz", drive.drive_frequency);
    }

    let mut drive = p.drive.clone();
    if fr.zero_drive {
        drive.force_per_volt = 0.0;
    }
    let ss = dynamics::steady_state(&p.model, &drive)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.config.seed);
    if let Some((&a, rest)) = fr.strobe_phases_deg.split_first() {
        let fa = strobe_snapshot(p, &ss, grid.clone(), a);
        for &b in rest {
            let fb = strobe_snapshot(p, &ss, grid.clone(), b);
            let map = holography::stroboscopic(&fa, &fb, a, b, optics)?.with_noise(optics.phase_noise, &mut rng)?;
            let stem = format!(
                "strobe_n{}_{}deg_{}deg",
                drive.electrode_harmonic,
                fmt_deg(a),
                fmt_deg(b)
            );
            o.write(out, &format!("{stem}.pgm"), &pgm_bytes(grid.width(), grid.height(), &map.to_gray())?)?;
            o.write(out, &format!("{stem}.f32"), &phase_dump(&map))?;
            let _ = writeln!(o.summary, "stroboscopic n = {} strobe {a}° -> {b}°", drive.electrode_harmonic);
        }
    }
    Ok(o)
}

/// Result of the circle-fit stage.
#[derive(Debug, Clone)]
pub struct FitRun {
    pub radius: f64,
    pub n: u32,
    pub fits: Vec<(f64, FitResult)>,
    pub track: analysis::StrobeTrack,
    pub asymmetry: Option<f64>,
    pub samples: Vec<CircleSample>,
}

/// Samples the driven steady state on the analysis circle at each strobe phase,
/// optionally through a synthetic hologram against a rest exposure, and fits each.
pub fn run_fit(p: &Prepared) -> Result<FitRun> {
    let a = &p.config.analysis;
    let b = p.basis();
    let radius = a.circle_radius.unwrap_or(b.outer_radius);
    let grid = Arc::new(SampleGrid::circle(radius, a.circle_samples, b.inner_radius, b.outer_radius)?);
    let ss = dynamics::steady_state(&p.model, &p.drive)?;
    let optics = &p.config.optics;
    let mut rng = ChaCha8Rng::seed_from_u64(p.config.seed);
    let rest = DisplacementField {
        values: vec![0.0; grid.len()],
        grid: grid.clone(),
    };

    let mut samples = Vec::with_capacity(a.strobe_phases_deg.len());
    for &s in &a.strobe_phases_deg {
        let snap = strobe_snapshot(p, &ss, grid.clone(), s);
        let sample = if a.via_hologram {
            let map = holography::stroboscopic(&rest, &snap, s, s, optics)?.with_noise(optics.phase_noise, &mut rng)?;
            let disp = holography::unwrap_to_displacement(&map, optics)?;
            CircleSample::from_ring(&disp, 0, SampleSource::Hologram)?
        } else {
            CircleSample::from_ring(&snap, 0, SampleSource::Simulation)?
        };
        samples.push(sample);
    }
    let n = match a.mode_number {
        Some(n) => n,
        None => analysis::detect_mode_number(&samples[0])?,
    };
    let fits = a
        .strobe_phases_deg
        .iter()
        .zip(&samples)
        .map(|(&s, sample)| Ok((s, analysis::fit_sinusoid(sample, n)?)))
        .collect::<Result<Vec<_>>>()?;
    let track = analysis::track_strobe_phase(&fits)?;
    let only: Vec<FitResult> = fits.iter().map(|(_, f)| *f).collect();
    let asymmetry = analysis::asymmetry_index(&only).ok();
    Ok(FitRun {
        radius,
        n,
        fits,
        track,
        asymmetry,
        samples,
    })
}

pub fn cmd_fit(p: &Prepared, out: &Path) -> Result<CommandOutput> {
    let run = run_fit(p)?;
    let mut o = CommandOutput::default();
    o.write(out, "fits.csv", analysis::fits_csv(&run.fits).as_bytes())?;
    let mut text = format!("circle_radius_m {}\n", run.radius);
    text.push_str(&analysis::summary(&run.track, run.asymmetry));
    o.write(out, "fit_summary.txt", text.as_bytes())?;
    o.summary = text;
    Ok(o)
}

/// Lowest-family frequencies of n = 1..7 in kHz.
pub fn computed_table(basis: &ModalBasis) -> Vec<Option<f64>> {
    basis
        .family_frequencies(1..=7)
        .into_iter()
        .map(|f| f.map(|x| x / 1e3))
        .collect()
}

pub fn cmd_report(p: &Prepared, out: &Path) -> Result<CommandOutput> {
    let table = computed_table(p.basis());
    let mut text = reference::render_report(&table);
    let present: Vec<f64> = table.iter().flatten().copied().collect();
    let ascending = present.windows(2).all(|w| w[1] > w[0]);
    let _ = writeln!(text, "computed Md ordering strictly ascending: {}", if ascending { "yes" } else { "no" });
    let mut o = CommandOutput::default();
    o.write(out, "report.txt", text.as_bytes())?;
    o.write(out, "report.csv", reference::render_csv(&table).as_bytes())?;
    o.summary = text;
    Ok(o)
}
