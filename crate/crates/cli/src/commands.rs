use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use layerscat::geometry::{parameter_grid, BoundaryCurve, CurveFile};
use layerscat::imaging::{default_radius, find_peaks, imaging_grid, ImagingData, PeakSet};
use layerscat::newton_lm::{initial_curves, run_recursive, FrequencySummary, InversionResult};
use layerscat::synth::{read_dataset, synthesize, write_dataset, PhaselessDataset};
use layerscat::{Error, Starlike};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};

pub const TRAJECTORY_FORMAT: &str = "layerscat-trajectory";
pub const CURVES_FORMAT: &str = "layerscat-curves";

/// Which measurement set `synth` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    /// Full pair tensor at the imaging wave number.
    Imaging,
    /// Listed pairs over the frequency schedule.
    Inversion,
}

/// `prefix` with `suffix` appended to its file name.
pub fn output_path(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

pub fn synth(scenario: &ScenarioConfig, stage: Stage, out: &Path) -> CliResult<PhaselessDataset> {
    let spec = match stage {
        Stage::Imaging => scenario.imaging_spec()?,
        Stage::Inversion => scenario.inversion_spec()?,
    };
    let data = synthesize(&spec, Some(scenario.hash()))?;
    ensure_parent(out)?;
    write_dataset(&data, out).map_err(|e| CliError::at(out, e))?;
    Ok(data)
}

pub fn load_dataset(path: &Path) -> CliResult<PhaselessDataset> {
    read_dataset(path).map_err(|e| CliError::at(path, e))
}

/// Paths written by `image`.
#[derive(Debug, Clone)]
pub struct ImageOutputs {
    pub grid_csv: PathBuf,
    pub pgm: PathBuf,
    pub pgm_scale: PathBuf,
    pub peaks: PathBuf,
}

impl ImageOutputs {
    pub fn new(prefix: &Path) -> Self {
        Self {
            grid_csv: output_path(prefix, "-grid.csv"),
            pgm: output_path(prefix, ".pgm"),
            pgm_scale: output_path(prefix, ".pgm.json"),
            peaks: output_path(prefix, "-peaks.json"),
        }
    }
}

pub fn image(scenario: &ScenarioConfig, data: &PhaselessDataset, block: usize, prefix: &Path) -> CliResult<PeakSet> {
    let hash = scenario.hash();
    let imaging = ImagingData::from_dataset(data, block)?;
    let settings = &scenario.imaging;
    let grid = imaging_grid(&imaging, &settings.region)?;
    let radius = settings.radius.unwrap_or_else(|| default_radius(&imaging.medium));
    let mut peaks = find_peaks(&grid, settings.threshold, radius);
    peaks.config_hash = Some(hash.clone());

    let out = ImageOutputs::new(prefix);
    ensure_parent(&out.grid_csv)?;
    grid.write_csv(&out.grid_csv, Some(&hash)).map_err(|e| CliError::at(&out.grid_csv, e))?;
    grid.write_pgm(&out.pgm, &out.pgm_scale, Some(&hash)).map_err(|e| CliError::at(&out.pgm, e))?;
    peaks.write_json(&out.peaks).map_err(|e| CliError::at(&out.peaks, e))?;
    Ok(peaks)
}

/// Concatenates the frequency blocks of several datasets of one scenario,
/// ordered by wave number.
pub fn merge_datasets(mut sets: Vec<PhaselessDataset>) -> CliResult<PhaselessDataset> {
    if sets.is_empty() {
        return Err(CliError::Config("no dataset given".into()));
    }
    let mut merged = sets.remove(0);
    for other in sets {
        let (a, b) = (merged.spec(), other.spec());
        if a.n != b.n || a.n_f != b.n_f {
            return Err(CliError::Config(format!(
                "datasets disagree on the medium or observation grid (n {} vs {}, n_f {} vs {})",
                a.n, b.n, a.n_f, b.n_f
            )));
        }
        merged.header.spec.blocks.extend(other.header.spec.blocks);
        merged.values.extend(other.values);
    }
    let mut order: Vec<usize> = (0..merged.values.len()).collect();
    let blocks = &merged.header.spec.blocks;
    order.sort_by(|&i, &j| blocks[i].k_plus.total_cmp(&blocks[j].k_plus));
    merged.header.spec.blocks = order.iter().map(|&i| blocks[i].clone()).collect();
    merged.values = order.iter().map(|&i| merged.values[i].clone()).collect();
    merged.check_layout()?;
    Ok(merged)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvesFile {
    pub format: String,
    pub config_hash: String,
    pub curves: Vec<CurveFile>,
    #[serde(default)]
    pub summaries: Vec<FrequencySummary>,
}

/// Reads the curves of a previous `invert` run, or a single curve file.
pub fn read_curves(path: &Path) -> CliResult<Vec<Starlike>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let files = match serde_json::from_str::<CurvesFile>(&text) {
        Ok(f) => f.curves,
        Err(_) => vec![serde_json::from_str::<CurveFile>(&text).map_err(|e| CliError::at(path, Error::Json(e)))?],
    };
    Ok(files.iter().map(Starlike::from_file).collect::<layerscat::Result<_>>()?)
}

#[derive(Debug, Clone)]
pub struct InvertOutputs {
    pub trajectory: PathBuf,
    pub curves: PathBuf,
    pub boundary_csv: PathBuf,
}

impl InvertOutputs {
    pub fn new(prefix: &Path) -> Self {
        Self {
            trajectory: output_path(prefix, "-trajectory.jsonl"),
            curves: output_path(prefix, "-curves.json"),
            boundary_csv: output_path(prefix, "-boundary.csv"),
        }
    }
}

/// Starting curves for `invert`: resumed from a file or circles at the peaks.
pub enum Start {
    Peaks(PathBuf),
    Resume(PathBuf),
}

pub fn invert(
    scenario: &ScenarioConfig,
    data: &PhaselessDataset,
    start: &Start,
    prefix: &Path,
) -> CliResult<InversionResult> {
    let hash = scenario.hash();
    let newton = scenario.inversion()?.newton;
    let initial = match start {
        Start::Peaks(p) => {
            let peaks = PeakSet::read_json(p).map_err(|e| CliError::at(p, e))?;
            initial_curves(&peaks, &newton)?
        }
        Start::Resume(p) => read_curves(p)?.iter().map(|c| c.with_order(newton.order)).collect(),
    };

    let out = InvertOutputs::new(prefix);
    let mut log = create(&out.trajectory)?;
    let header = serde_json::json!({
        "format": TRAJECTORY_FORMAT,
        "version": 1,
        "config_hash": hash,
        "data_config_hash": data.header.config_hash,
    });
    let write_err = |e: std::io::Error| Error::Io(e);
    writeln!(log, "{header}").map_err(|e| CliError::io(&out.trajectory, e))?;
    let result = run_recursive(data, initial, &newton, |rec| {
        let line = serde_json::to_string(rec)?;
        writeln!(log, "{line}").map_err(write_err)?;
        log::debug!("block {} iteration {}: E = {:.4e}", rec.block, rec.iteration, rec.error);
        Ok(())
    })
    .map_err(|e| match e {
        Error::Io(source) => CliError::io(&out.trajectory, source),
        Error::Domain(m) | Error::Geometry(m) => CliError::Numerical(m),
        other => CliError::Core(other),
    })?;
    log.flush().map_err(|e| CliError::io(&out.trajectory, e))?;

    let file = CurvesFile {
        format: CURVES_FORMAT.into(),
        config_hash: hash.clone(),
        curves: result.curves.iter().map(Starlike::to_file).collect(),
        summaries: result.summaries.clone(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| CliError::Core(e.into()))? + "\n";
    std::fs::write(&out.curves, text).map_err(|e| CliError::io(&out.curves, e))?;
    write_boundary(&result.curves, &hash, &out.boundary_csv)?;
    Ok(result)
}

fn write_boundary(curves: &[Starlike], hash: &str, path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "# config_hash={hash}").map_err(io)?;
    writeln!(w, "component,x,y").map_err(io)?;
    for (c, curve) in curves.iter().enumerate() {
        for t in parameter_grid::<f64>(256) {
            let p = curve.point(t);
            writeln!(w, "{c},{:.16e},{:.16e}", p[0], p[1]).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
