//! Run reports, tabular exports and minimal SVG plots.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, MODES};
use crate::discovery::{DensifyTrajectory, LandscapeGrid, SubsetReport, SweepCell};
use crate::error::{Error, Result};
use crate::kinematics::LoadMode;
use crate::model::{stress, ModelFamily, ParamVector, N_TERMS};
use crate::optimizer::{FitResult, MultiRestartResult};

/// Bumped whenever the report layout changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Per-term stresses of one model on a dataset's control grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressCurve {
    pub mode: LoadMode,
    pub control: Vec<f64>,
    pub measured: Vec<f64>,
    pub model: Vec<f64>,
    /// `per_term[k][i]` is term `k` at `control[i]`.
    pub per_term: Vec<Vec<f64>>,
}

pub fn stress_curves(params: &ParamVector, dataset: &Dataset) -> Result<Vec<StressCurve>> {
    let mut curves = Vec::new();
    for mode in MODES {
        let pts = dataset.protocol(mode);
        if pts.is_empty() {
            continue;
        }
        let mut curve = StressCurve {
            mode,
            control: Vec::with_capacity(pts.len()),
            measured: Vec::with_capacity(pts.len()),
            model: Vec::with_capacity(pts.len()),
            per_term: vec![Vec::with_capacity(pts.len()); N_TERMS],
        };
        for p in pts {
            let s = stress(params, mode, p.control)?;
            curve.control.push(p.control);
            curve.measured.push(p.stress);
            curve.model.push(s.total);
            for (k, v) in s.per_term.iter().enumerate() {
                curve.per_term[k].push(*v);
            }
        }
        curves.push(curve);
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub provenance: String,
    pub n_tension: usize,
    pub n_compression: usize,
    pub n_shear: usize,
}

impl From<&Dataset> for DatasetSummary {
    fn from(d: &Dataset) -> Self {
        DatasetSummary {
            provenance: d.provenance.clone(),
            n_tension: d.tension.len(),
            n_compression: d.compression.len(),
            n_shear: d.shear.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReportBody {
    Generate { path: String, points: usize },
    Fit { ensemble: MultiRestartResult },
    Subsets { alpha: f64, reports: Vec<SubsetReport>, near_best: Vec<bool>, crossover: Option<f64> },
    Densify { trajectory: DensifyTrajectory },
    Sweep { cells: Vec<SweepCell> },
    Landscape { grid: LandscapeGrid, csv: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: Vec<String>,
    /// Resolved flags; rerunning with them reproduces every number.
    pub config: serde_json::Value,
    pub dataset: Option<DatasetSummary>,
    pub result: ReportBody,
    pub stress_curves: Option<Vec<StressCurve>>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Long-format grid: one row per cell.
pub fn landscape_csv(grid: &LandscapeGrid) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wi = format!("w{}", grid.axis_i.term + 1);
    let wj = format!("w{}", grid.axis_j.term + 1);
    w.write_record([wi.as_str(), wj.as_str(), "loss"]).map_err(csv_err)?;
    for (a, row) in grid.values.iter().enumerate() {
        let x = grid.axis_i.value(a, grid.resolution);
        for (b, v) in row.iter().enumerate() {
            let y = grid.axis_j.value(b, grid.resolution);
            w.write_record([x.to_string(), y.to_string(), v.to_string()]).map_err(csv_err)?;
        }
    }
    finish_csv(w)
}

pub fn subsets_csv(family: ModelFamily, reports: &[SubsetReport], alpha: f64, near_best: &[bool]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rank".to_string(), "terms".into(), "k".into(), "data_loss".into(), "penalized_loss".into()];
    header.extend((0..N_TERMS).map(|k| format!("w{}", k + 1)));
    if family == ModelFamily::Invariant8 {
        header.extend(["e2", "e4", "e6", "e8"].map(String::from));
    }
    header.extend(["near_best".into(), "error".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in reports.iter().enumerate() {
        let terms: Vec<String> = r.mask.terms().map(|k| (k + 1).to_string()).collect();
        let mut row = vec![
            (i + 1).to_string(),
            terms.join(" "),
            r.k().to_string(),
            r.data_loss.to_string(),
            r.penalized_loss(alpha).to_string(),
        ];
        match &r.fitted {
            Some(f) => row.extend(f.params.to_free().iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), family.n_free())),
        }
        row.push(near_best.get(i).copied().unwrap_or(false).to_string());
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    finish_csv(w)
}

pub fn sweep_csv(family: ModelFamily, cells: &[SweepCell]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "p", "alpha", "n_runs", "n_failed", "active_mean", "active_std", "r2_tension", "r2_compression",
        "r2_shear", "r2_pooled", "r2_pooled_std",
    ]
    .map(String::from)
    .to_vec();
    for k in 0..family.n_free() {
        let name = if k < N_TERMS { format!("w{}", k + 1) } else { format!("e{}", 2 * (k - N_TERMS) + 2) };
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for c in cells {
        let mean = |s: Option<crate::optimizer::Stats>| opt(s.map(|s| s.mean));
        let mut row = vec![
            c.p.to_string(),
            c.alpha.to_string(),
            c.n_runs.to_string(),
            c.failures.len().to_string(),
            mean(c.active_terms),
            opt(c.active_terms.map(|s| s.std)),
            mean(c.r2.tension),
            mean(c.r2.compression),
            mean(c.r2.shear),
            mean(c.r2.pooled),
            opt(c.r2.pooled.map(|s| s.std)),
        ];
        for k in 0..family.n_free() {
            let s = c.weights.get(k).copied().flatten();
            row.push(opt(s.map(|s| s.mean)));
            row.push(opt(s.map(|s| s.std)));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    finish_csv(w)
}

pub fn fit_runs_csv(family: ModelFamily, fits: &[FitResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["seed", "total_loss", "data_loss", "active_terms", "epochs", "converged"].map(String::from).to_vec();
    header.extend((0..family.n_free()).map(|k| {
        if k < N_TERMS { format!("w{}", k + 1) } else { format!("e{}", 2 * (k - N_TERMS) + 2) }
    }));
    w.write_record(&header).map_err(csv_err)?;
    for f in fits {
        let mut row = vec![
            f.seed.to_string(),
            f.loss.total.to_string(),
            f.loss.data().to_string(),
            f.active_terms.to_string(),
            f.epochs_run.to_string(),
            f.converged.to_string(),
        ];
        row.extend(f.params.to_free().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Heat map of `log10(loss)` with the argmin marked.
pub fn landscape_svg(grid: &LandscapeGrid) -> String {
    let n = grid.resolution;
    let size = 400.0;
    let cell = size / n as f64;
    let finite: Vec<f64> =
        grid.values.iter().flatten().copied().filter(|v| v.is_finite()).map(|v| v.max(1e-12).log10()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = size + 60.0,
        h = size + 60.0
    );
    let _ = writeln!(s, r#"<g transform="translate(40,10)">"#);
    for (a, row) in grid.values.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            let fill = if v.is_finite() {
                let t = (v.max(1e-12).log10() - lo) / span;
                let r = (255.0 * t) as u8;
                let g = (255.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8;
                let bl = (255.0 * (1.0 - t)) as u8;
                format!("#{r:02x}{g:02x}{bl:02x}")
            } else {
                "#ffffff".into()
            };
            // w_i on the horizontal axis, w_j upwards
            let x = a as f64 * cell;
            let y = size - (b + 1) as f64 * cell;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{c:.2}" height="{c:.2}" fill="{fill}"/>"#,
                c = cell + 0.05
            );
        }
    }
    let (a, b) = grid.argmin;
    let _ = writeln!(
        s,
        r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="white" stroke="black"/>"#,
        (a as f64 + 0.5) * cell,
        size - (b as f64 + 0.5) * cell
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="{:.0}" font-size="12" text-anchor="middle">w{} [{}, {}]</text>"#,
        size / 2.0,
        size + 30.0,
        grid.axis_i.term + 1,
        grid.axis_i.min,
        grid.axis_i.max
    );
    let _ = writeln!(
        s,
        r#"<text x="-25" y="{:.0}" font-size="12" transform="rotate(-90,-25,{:.0})" text-anchor="middle">w{} [{}, {}]</text>"#,
        size / 2.0,
        size / 2.0,
        grid.axis_j.term + 1,
        grid.axis_j.min,
        grid.axis_j.max
    );
    s.push_str("</g>\n</svg>\n");
    s
}

/// Mean ± std of each amplitude per sweep cell, one panel per cell.
pub fn sweep_svg(cells: &[SweepCell]) -> String {
    let panel_w = 220.0;
    let panel_h = 160.0;
    let cols = 4usize;
    let rows = cells.len().div_ceil(cols).max(1);
    let max_w = cells
        .iter()
        .flat_map(|c| (0..N_TERMS).filter_map(|k| c.weights.get(k).copied().flatten()))
        .map(|s| s.mean + s.std)
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#,
        w = panel_w * cols as f64,
        h = panel_h * rows as f64
    );
    for (i, c) in cells.iter().enumerate() {
        let ox = (i % cols) as f64 * panel_w;
        let oy = (i / cols) as f64 * panel_h;
        let base = oy + panel_h - 25.0;
        let scale = (panel_h - 50.0) / max_w;
        let _ = writeln!(
            s,
            r#"<text x="{:.0}" y="{:.0}" font-size="11">p={} alpha={}</text>"#,
            ox + 10.0,
            oy + 14.0,
            c.p,
            c.alpha
        );
        for k in 0..N_TERMS {
            let Some(st) = c.weights.get(k).copied().flatten() else { continue };
            let x = ox + 15.0 + k as f64 * 25.0;
            let h = st.mean * scale;
            let _ = writeln!(
                s,
                r##"<rect x="{x:.1}" y="{:.1}" width="16" height="{h:.1}" fill="#4a7ab5"/>"##,
                base - h
            );
            let top = base - (st.mean + st.std) * scale;
            let bottom = base - (st.mean - st.std).max(0.0) * scale;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{top:.1}" y2="{bottom:.1}" stroke="black"/>"#,
                cx = x + 8.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">{}</text>"#,
                x + 8.0,
                base + 12.0,
                k + 1
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
