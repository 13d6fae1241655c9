//! Measured and simulated excitation frequencies of the notched plastic stator,
//! modes Md1..Md7, in kHz.

use std::fmt::Write as _;

pub const DATASET_VERSION: &str = "notched-plastic-stator/1";

/// Largest simulation-vs-experiment gap quoted with the dataset, percent.
pub const QUOTED_MAX_GAP_PERCENT: f64 = 12.60;

/// Frequency of the lowest lateral (in-plane) mode near Md6, kHz.
pub const LATERAL_MODE_KHZ: f64 = 42.757;
/// Out-of-plane Md6 eigenfrequency quoted next to the lateral mode, kHz.
pub const MD6_OUT_OF_PLANE_KHZ: f64 = 41.154;
/// Drive frequency at which a mixed Md6 pattern was observed, kHz.
pub const MIXED_DRIVE_KHZ: f64 = 42.124;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub label: &'static str,
    pub khz: [Option<f64>; 7],
}

pub const NPM1: ReferenceRow = ReferenceRow {
    label: "NPM1",
    khz: [Some(3.68), Some(6.77), Some(14.74), Some(23.57), Some(33.03), None, None],
};

pub const NPM2: ReferenceRow = ReferenceRow {
    label: "NPM2",
    khz: [Some(3.97), Some(6.98), Some(14.50), Some(23.08), Some(31.86), Some(42.63), None],
};

pub const SIMULATION: ReferenceRow = ReferenceRow {
    label: "Simulation",
    khz: [Some(3.68), Some(6.10), Some(13.69), Some(22.36), Some(31.27), Some(41.15), Some(48.87)],
};

pub const ROWS: [ReferenceRow; 3] = [NPM1, NPM2, SIMULATION];

/// Signed deviation of `value` from `reference`, percent of the reference.
pub fn deviation_percent(value: f64, reference: f64) -> f64 {
    100.0 * (value - reference) / reference
}

/// Largest |Simulation − NPM| gap in the dataset, percent of the measured value.
pub fn dataset_max_gap_percent() -> f64 {
    let mut worst = 0.0f64;
    for row in [NPM1, NPM2] {
        for (m, s) in row.khz.iter().zip(SIMULATION.khz) {
            if let (Some(m), Some(s)) = (m, s) {
                worst = worst.max(deviation_percent(s, *m).abs());
            }
        }
    }
    worst
}

/// One comparison line per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub mode: usize,
    pub computed_khz: Option<f64>,
    /// (reference value, deviation percent) per dataset row; `None` where missing.
    pub against: [Option<(f64, f64)>; 3],
}

/// Compares computed Md1..Md7 frequencies (kHz) with every reference row.
pub fn compare(computed_khz: &[Option<f64>]) -> Vec<ComparisonRow> {
    (0..7)
        .map(|i| {
            let c = computed_khz.get(i).copied().flatten();
            let mut against = [None; 3];
            for (slot, row) in against.iter_mut().zip(ROWS) {
                if let (Some(r), Some(c)) = (row.khz[i], c) {
                    *slot = Some((r, deviation_percent(c, r)));
                }
            }
            ComparisonRow {
                mode: i + 1,
                computed_khz: c,
                against,
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Plain-text report. Deviations above the quoted gap are marked with `!`; the report
/// never fails on magnitude.
pub fn render_report(computed_khz: &[Option<f64>]) -> String {
    let rows = compare(computed_khz);
    let mut out = String::new();
    let _ = writeln!(out, "reference dataset {DATASET_VERSION}");
    let _ = writeln!(out, "frequencies in kHz, deviation = (computed - reference) / reference");
    let _ = writeln!(out);
    let _ = write!(out, "{:<16}", "");
    for r in &rows {
        let _ = write!(out, "{:>9}", format!("Md{}", r.mode));
    }
    let _ = writeln!(out);
    let _ = write!(out, "{:<16}", "computed");
    for r in &rows {
        let _ = write!(out, "{:>9}", cell(r.computed_khz));
    }
    let _ = writeln!(out);
    for row in ROWS {
        let _ = write!(out, "{:<16}", row.label);
        for v in row.khz {
            let _ = write!(out, "{:>9}", cell(v));
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out);
    for (k, row) in ROWS.iter().enumerate() {
        let _ = write!(out, "{:<16}", format!("dev {}", row.label));
        for r in &rows {
            let text = match r.against[k] {
                Some((_, d)) => {
                    let flag = if d.abs() > QUOTED_MAX_GAP_PERCENT { "!" } else { "" };
                    let d = (d * 100.0).round() / 100.0 + 0.0;
                    format!("{d:+.2}%{flag}")
                }
                None => "-".into(),
            };
            let _ = write!(out, "{text:>9}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "quoted simulation-vs-experiment gap {QUOTED_MAX_GAP_PERCENT:.2}%, dataset gap {:.3}%",
        dataset_max_gap_percent()
    );
    out
}

/// `mode,computed_kHz,<row>_kHz,<row>_dev_percent,...`
pub fn render_csv(computed_khz: &[Option<f64>]) -> String {
    let mut out = String::from("mode,computed_kHz");
    for row in ROWS {
        let _ = write!(out, ",{0}_kHz,{0}_dev_percent", row.label);
    }
    out.push('\n');
    for r in compare(computed_khz) {
        let _ = write!(out, "Md{},{}", r.mode, r.computed_khz.map_or(String::new(), |v| v.to_string()));
        for (k, row) in ROWS.iter().enumerate() {
            match r.against[k] {
                Some((v, d)) => {
                    let _ = write!(out, ",{v},{d}");
                }
                None => {
                    let ref_cell = row.khz[r.mode - 1].map_or(String::new(), |v| v.to_string());
                    let _ = write!(out, ",{ref_cell},");
                }
            }
        }
        out.push('\n');
    }
    out
}
