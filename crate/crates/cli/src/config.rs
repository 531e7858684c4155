//! Scenario files: named experiment presets, flag overrides and the hash
//! recorded in every output header.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use layerscat::geometry::{BuiltinCurve, CurveFile, Shape};
use layerscat::imaging::ImagingRegion;
use layerscat::newton_lm::NewtonConfig;
use layerscat::presets::Regime;
use layerscat::synth::{FrequencyBlock, NoiseSpec, SynthSpec};
use layerscat::Medium;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Presets shipped with the binary, used when no `--config` is given.
pub const BUILTIN_PRESETS: &str = include_str!("../presets/scenarios.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub presets: BTreeMap<String, ScenarioConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub medium: MediumSection,
    pub truth: Vec<TruthShape>,
    pub data: DataSection,
    pub noise: NoiseSpec,
    pub imaging: ImagingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inversion: Option<InversionSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    /// Refractive index `(k-/k+)^2`.
    pub n: f64,
}

/// A truth obstacle: a library shape or a curve file on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthShape {
    Builtin(BuiltinCurve),
    Disk { center: [f64; 2], radius: f64 },
    Starlike(CurveFile),
    /// Path of a curve JSON file, relative to the scenario file.
    CurveFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_f: usize,
    /// Incident directions of the imaging tensor.
    pub n_d: usize,
    /// Boundary nodes per obstacle in the data solves.
    #[serde(default = "default_data_nodes")]
    pub nodes: usize,
}

fn default_data_nodes() -> usize {
    layerscat::bie::DATA_NODES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingSection {
    pub k_plus: f64,
    pub region: ImagingRegion,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Peak suppression radius; one lower-medium wavelength if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

fn default_threshold() -> f64 {
    layerscat::imaging::DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSection {
    /// Supplies schedule and pairs when they are not listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    /// Incident angle pairs in radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub newton: NewtonConfig,
}

impl InversionSection {
    pub fn schedule(&self) -> CliResult<Vec<f64>> {
        match (&self.schedule, self.regime) {
            (Some(s), _) => Ok(s.clone()),
            (None, Some(r)) => Ok(r.schedule()),
            (None, None) => Err(CliError::Config("inversion needs a schedule or a regime".into())),
        }
    }

    pub fn pairs(&self) -> CliResult<Vec<[f64; 2]>> {
        match (&self.pairs, self.regime) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(r)) => Ok(r.pairs()),
            (None, None) => Err(CliError::Config("inversion needs pairs or a regime".into())),
        }
    }
}

/// Reads a scenario file (or the built-in presets) and picks one preset.
pub fn load(path: Option<&Path>, preset: Option<&str>) -> CliResult<ScenarioConfig> {
    let (text, origin, base) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
            p.display().to_string(),
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (BUILTIN_PRESETS.to_string(), "built-in presets".to_string(), PathBuf::new()),
    };
    let file: ConfigFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{origin}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let mut scenario = match preset {
        Some(name) => file.presets.get(name).cloned().ok_or_else(|| {
            let known: Vec<&str> = file.presets.keys().map(String::as_str).collect();
            CliError::Config(format!("{origin}: no preset {name:?} (available: {})", known.join(", ")))
        })?,
        None if file.presets.len() == 1 => file.presets.into_values().next().expect("one preset"),
        None => return Err(CliError::Config(format!("{origin}: several presets, choose one with --preset"))),
    };
    scenario.inline_curve_files(&base)?;
    Ok(scenario)
}

impl ScenarioConfig {
    /// Replaces curve-file references by their contents so the hash covers them.
    fn inline_curve_files(&mut self, base: &Path) -> CliResult<()> {
        for t in &mut self.truth {
            if let TruthShape::CurveFile(p) = t {
                let full = base.join(&*p);
                let text = std::fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))?;
                let curve: CurveFile = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
                *t = TruthShape::Starlike(curve);
            }
        }
        Ok(())
    }

    pub fn shapes(&self) -> CliResult<Vec<Shape>> {
        self.truth
            .iter()
            .map(|t| match t {
                TruthShape::Builtin(b) => Ok(Shape::Builtin(*b)),
                TruthShape::Disk { center, radius } => Ok(Shape::Disk { center: *center, radius: *radius }),
                TruthShape::Starlike(c) => Ok(Shape::Starlike(c.clone())),
                TruthShape::CurveFile(p) => Err(CliError::Config(format!("curve file {} not loaded", p.display()))),
            })
            .collect()
    }

    pub fn inversion(&self) -> CliResult<&InversionSection> {
        self.inversion.as_ref().ok_or_else(|| CliError::Config("scenario has no inversion section".into()))
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> CliResult<()> {
        if self.truth.is_empty() {
            return Err(CliError::Config("truth must list at least one obstacle".into()));
        }
        for shape in self.shapes()? {
            shape.build()?;
        }
        if self.data.n_f == 0 || self.data.n_d == 0 || self.data.nodes < 8 {
            return Err(CliError::Config("data needs n_f, n_d > 0 and at least 8 nodes".into()));
        }
        self.imaging_medium()?;
        self.imaging.region.validate()?;
        if !(self.imaging.threshold > 0.0 && self.imaging.threshold <= 1.0) {
            return Err(CliError::Config(format!("threshold {} must be in (0, 1]", self.imaging.threshold)));
        }
        if let Some(inv) = &self.inversion {
            inv.newton.validate()?;
            self.inversion_spec()?.validate()?;
        }
        Ok(())
    }

    pub fn imaging_medium(&self) -> CliResult<Medium> {
        Ok(Medium::new(self.imaging.k_plus, self.medium.n)?)
    }

    pub fn imaging_spec(&self) -> CliResult<SynthSpec> {
        let block = FrequencyBlock::full_tensor(&self.imaging_medium()?, self.data.n_d);
        self.spec_with(vec![block])
    }

    pub fn inversion_spec(&self) -> CliResult<SynthSpec> {
        let inv = self.inversion()?;
        let pairs = inv.pairs()?;
        let mut schedule = inv.schedule()?;
        if schedule.is_empty() || pairs.is_empty() {
            return Err(CliError::Config("inversion schedule and pairs must be nonempty".into()));
        }
        if schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config("inversion schedule must be strictly increasing".into()));
        }
        schedule.dedup();
        self.spec_with(schedule.iter().map(|&k| FrequencyBlock::from_angle_pairs(k, &pairs)).collect())
    }

    fn spec_with(&self, blocks: Vec<FrequencyBlock>) -> CliResult<SynthSpec> {
        let spec = SynthSpec {
            n: self.medium.n,
            n_f: self.data.n_f,
            nodes: self.data.nodes,
            truth: self.shapes()?,
            blocks,
            noise: self.noise,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
