//! Datasets: synthetic generation, CSV/JSON I/O and goodness-of-fit.
//!
//! CSV layout, one file per dataset:
//!
//! ```text
//! # provenance: <free text>          (optional)
//! mode,control,stress_kpa
//! tension,1.1,0.25
//! compression,0.9,-0.41
//! shear,0.2,0.33
//! ```
//!
//! `control` is the stretch for uniaxial modes and the shear amount for
//! shear. Numbers are written in the shortest decimal form that parses back
//! to the identical `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::LoadMode;
use crate::model::{stress, ParamVector};

pub const CSV_HEADER: [&str; 3] = ["mode", "control", "stress_kpa"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub control: f64,
    pub stress: f64,
}

/// Averaged stress curves for tension, compression and shear.
///
/// Compression stresses are stored signed (negative). The normalization
/// statistics always equal the extrema of the stored stresses and are `0`
/// for an empty protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub tension: Vec<DataPoint>,
    pub compression: Vec<DataPoint>,
    pub shear: Vec<DataPoint>,
    pub provenance: String,
    pub max_tension_stress: f64,
    pub min_compression_stress: f64,
    pub max_shear_stress: f64,
}

fn pairs(v: &[(f64, f64)]) -> Vec<DataPoint> {
    v.iter().map(|&(control, stress)| DataPoint { control, stress }).collect()
}

impl Dataset {
    pub fn new(
        tension: Vec<DataPoint>,
        compression: Vec<DataPoint>,
        shear: Vec<DataPoint>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let check = |pts: &[DataPoint], name: &str, ok: &dyn Fn(f64) -> bool| -> Result<()> {
            for (i, p) in pts.iter().enumerate() {
                if !p.control.is_finite() || !p.stress.is_finite() {
                    return Err(Error::Config(format!("{name} point {i} is not finite")));
                }
                if !ok(p.control) {
                    return Err(Error::Config(format!(
                        "{name} point {i} has inadmissible control {}",
                        p.control
                    )));
                }
            }
            Ok(())
        };
        check(&tension, "tension", &|l| l >= 1.0)?;
        check(&compression, "compression", &|l| l <= 1.0 && l > 0.0)?;
        check(&shear, "shear", &|_| true)?;
        let mut d = Dataset {
            tension,
            compression,
            shear,
            provenance: provenance.into(),
            max_tension_stress: 0.0,
            min_compression_stress: 0.0,
            max_shear_stress: 0.0,
        };
        d.refresh_stats();
        Ok(d)
    }

    pub fn from_pairs(
        tension: &[(f64, f64)],
        compression: &[(f64, f64)],
        shear: &[(f64, f64)],
        provenance: impl Into<String>,
    ) -> Result<Self> {
        Dataset::new(pairs(tension), pairs(compression), pairs(shear), provenance)
    }

    fn refresh_stats(&mut self) {
        let fold = |pts: &[DataPoint], init: f64, f: fn(f64, f64) -> f64| {
            if pts.is_empty() {
                0.0
            } else {
                pts.iter().map(|p| p.stress).fold(init, f)
            }
        };
        self.max_tension_stress = fold(&self.tension, f64::NEG_INFINITY, f64::max);
        self.min_compression_stress = fold(&self.compression, f64::INFINITY, f64::min);
        self.max_shear_stress = fold(&self.shear, f64::NEG_INFINITY, f64::max);
    }

    pub fn protocol(&self, mode: LoadMode) -> &[DataPoint] {
        match mode {
            LoadMode::UniaxialTension => &self.tension,
            LoadMode::UniaxialCompression => &self.compression,
            LoadMode::SimpleShear => &self.shear,
        }
    }

    /// Normalization divisor of a protocol (its extreme recorded stress).
    pub fn normalizer(&self, mode: LoadMode) -> f64 {
        match mode {
            LoadMode::UniaxialTension => self.max_tension_stress,
            LoadMode::UniaxialCompression => self.min_compression_stress,
            LoadMode::SimpleShear => self.max_shear_stress,
        }
    }

    pub fn len(&self) -> usize {
        self.tension.len() + self.compression.len() + self.shear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy with every measured stress multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let s = |pts: &[DataPoint]| -> Vec<DataPoint> {
            pts.iter().map(|p| DataPoint { control: p.control, stress: c * p.stress }).collect()
        };
        Dataset::new(s(&self.tension), s(&self.compression), s(&self.shear), self.provenance.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

pub const MODES: [LoadMode; 3] = [
    LoadMode::UniaxialTension,
    LoadMode::UniaxialCompression,
    LoadMode::SimpleShear,
];

pub fn mode_tag(mode: LoadMode) -> &'static str {
    match mode {
        LoadMode::UniaxialTension => "tension",
        LoadMode::UniaxialCompression => "compression",
        LoadMode::SimpleShear => "shear",
    }
}

/// Control ranges for synthetic data, each as `(first, last)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRanges {
    pub tension: (f64, f64),
    pub compression: (f64, f64),
    pub shear: (f64, f64),
}

impl Default for SyntheticRanges {
    fn default() -> Self {
        SyntheticRanges {
            tension: (1.0, 2.0),
            compression: (1.0, 0.5),
            shear: (0.0, 0.5),
        }
    }
}

impl SyntheticRanges {
    /// Ranges of the averaged gray-matter brain curves.
    pub fn brain() -> Self {
        SyntheticRanges {
            tension: (1.0, 1.1),
            compression: (1.0, 0.9),
            shear: (0.0, 0.2),
        }
    }
}

/// Optional additive Gaussian noise on synthetic stresses, scaled by each
/// protocol's extreme stress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub relative_sigma: f64,
    pub seed: u64,
}

fn linspace(a: f64, b: f64, increments: usize) -> impl Iterator<Item = f64> {
    (0..=increments).map(move |i| {
        if i == increments {
            b
        } else {
            a + (b - a) * i as f64 / increments as f64
        }
    })
}

/// Forward-simulates `increments + 1` equidistant points per protocol.
pub fn generate_synthetic(
    params: &ParamVector,
    ranges: &SyntheticRanges,
    increments: usize,
    noise: Option<NoiseSpec>,
) -> Result<Dataset> {
    params.validate()?;
    if increments == 0 {
        return Err(Error::Config("need at least one increment".into()));
    }
    let ordered = ranges.tension.0 >= 1.0
        && ranges.tension.1 >= ranges.tension.0
        && ranges.compression.0 <= 1.0
        && ranges.compression.1 <= ranges.compression.0
        && ranges.compression.1 > 0.0
        && ranges.shear.1 >= ranges.shear.0;
    if !ordered {
        return Err(Error::Config(format!("synthetic ranges out of order: {ranges:?}")));
    }
    let sample = |mode: LoadMode, (a, b): (f64, f64)| -> Result<Vec<DataPoint>> {
        linspace(a, b, increments)
            .map(|c| Ok(DataPoint { control: c, stress: stress(params, mode, c)?.total }))
            .collect()
    };
    let mut d = Dataset::new(
        sample(LoadMode::UniaxialTension, ranges.tension)?,
        sample(LoadMode::UniaxialCompression, ranges.compression)?,
        sample(LoadMode::SimpleShear, ranges.shear)?,
        format!("synthetic {} {:?}", params.family, params.to_free()),
    )?;
    if let Some(n) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
        for mode in MODES {
            let scale = d.normalizer(mode).abs() * n.relative_sigma;
            let pts = match mode {
                LoadMode::UniaxialTension => &mut d.tension,
                LoadMode::UniaxialCompression => &mut d.compression,
                LoadMode::SimpleShear => &mut d.shear,
            };
            for p in pts.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                p.stress += scale * z;
            }
        }
        d.refresh_stats();
    }
    Ok(d)
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    if !dataset.provenance.is_empty() {
        writeln!(buf, "# provenance: {}", dataset.provenance.replace('\n', " "))?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(CSV_HEADER).map_err(|e| Error::Io(e.to_string()))?;
        for mode in MODES {
            for p in dataset.protocol(mode) {
                w.write_record([mode_tag(mode), &p.control.to_string(), &p.stress.to_string()])
                    .map_err(|e| Error::Io(e.to_string()))?;
            }
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let default_provenance = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    parse_csv(&text, &default_provenance)
}

/// Parses the CSV text format; `default_provenance` is used when the file has no provenance line.
pub fn parse_csv(text: &str, default_provenance: &str) -> Result<Dataset> {
    let mut provenance = None;
    let mut header_seen = false;
    let (mut ten, mut com, mut shr) = (Vec::new(), Vec::new(), Vec::new());
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(p) = comment.trim().strip_prefix("provenance:") {
                provenance.get_or_insert_with(|| p.trim().to_string());
            }
            continue;
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(line.as_bytes());
        let record = rdr
            .records()
            .next()
            .transpose()
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?
            .ok_or_else(|| Error::Parse { line: line_no, message: "empty record".into() })?;
        if !header_seen {
            if record.iter().collect::<Vec<_>>() != CSV_HEADER {
                return Err(Error::Schema {
                    line: line_no,
                    message: format!("expected header '{}'", CSV_HEADER.join(",")),
                });
            }
            header_seen = true;
            continue;
        }
        if record.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid {what} '{s}'"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse { line: line_no, message: format!("non-finite {what}") })
            }
        };
        let point = DataPoint { control: num(&record[1], "control")?, stress: num(&record[2], "stress")? };
        let bad = |m: &str| Error::Schema { line: line_no, message: m.to_string() };
        match &record[0] {
            "tension" if point.control >= 1.0 => ten.push(point),
            "tension" => return Err(bad("tension stretch must be >= 1")),
            "compression" if point.control <= 1.0 && point.control > 0.0 => com.push(point),
            "compression" => return Err(bad("compression stretch must be in (0, 1]")),
            "shear" => shr.push(point),
            other => return Err(bad(&format!("unknown mode tag '{other}'"))),
        }
    }
    if !header_seen {
        return Err(Error::Schema { line: 1, message: "missing header".into() });
    }
    Dataset::new(ten, com, shr, provenance.unwrap_or_else(|| default_provenance.to_string()))
}

/// Model stresses evaluated on a dataset's controls, protocol by protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStresses {
    pub tension: Vec<f64>,
    pub compression: Vec<f64>,
    pub shear: Vec<f64>,
}

impl ModeStresses {
    pub fn evaluate(params: &ParamVector, dataset: &Dataset) -> Result<Self> {
        let eval = |mode: LoadMode| -> Result<Vec<f64>> {
            dataset.protocol(mode).iter().map(|p| Ok(stress(params, mode, p.control)?.total)).collect()
        };
        Ok(ModeStresses {
            tension: eval(LoadMode::UniaxialTension)?,
            compression: eval(LoadMode::UniaxialCompression)?,
            shear: eval(LoadMode::SimpleShear)?,
        })
    }

    pub fn get(&self, mode: LoadMode) -> &[f64] {
        match mode {
            LoadMode::UniaxialTension => &self.tension,
            LoadMode::UniaxialCompression => &self.compression,
            LoadMode::SimpleShear => &self.shear,
        }
    }
}

/// Per-protocol coefficients of determination; `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RSquared {
    pub tension: Option<f64>,
    pub compression: Option<f64>,
    pub shear: Option<f64>,
}

impl RSquared {
    pub fn get(&self, mode: LoadMode) -> Option<f64> {
        match mode {
            LoadMode::UniaxialTension => self.tension,
            LoadMode::UniaxialCompression => self.compression,
            LoadMode::SimpleShear => self.shear,
        }
    }

    /// Mean of the defined per-protocol values.
    pub fn pooled(&self) -> Option<f64> {
        let v: Vec<f64> = [self.tension, self.compression, self.shear].into_iter().flatten().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn r2_single(model: &[f64], data: &[DataPoint]) -> Option<f64> {
    if data.len() < 2 || model.len() != data.len() {
        return None;
    }
    let mean = data.iter().map(|p| p.stress).sum::<f64>() / data.len() as f64;
    let ss_tot: f64 = data.iter().map(|p| (p.stress - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = model.iter().zip(data).map(|(m, p)| (p.stress - m).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

/// `1 − SS_res/SS_tot` per protocol.
pub fn r_squared(model: &ModeStresses, dataset: &Dataset) -> RSquared {
    RSquared {
        tension: r2_single(&model.tension, &dataset.tension),
        compression: r2_single(&model.compression, &dataset.compression),
        shear: r2_single(&model.shear, &dataset.shear),
    }
}

pub fn model_r_squared(params: &ParamVector, dataset: &Dataset) -> Result<RSquared> {
    Ok(r_squared(&ModeStresses::evaluate(params, dataset)?, dataset))
}
