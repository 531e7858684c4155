//! Phaseless datasets: intensities of superposed plane-wave pairs, additive
//! noise, and the on-disk format (JSON header line followed by CSV rows).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bie::simulate;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, Shape};
use crate::medium::DirectionKind;
use crate::scalar::Real;
use crate::Medium;

pub const DATASET_FORMAT: &str = "layerscat-phaseless";
pub const DATASET_VERSION: u32 = 1;
/// Identity of the noise stream: ChaCha20 keyed by the seed, one stream per
/// data block, normals by the Marsaglia polar method.
pub const NOISE_GENERATOR: &str = "chacha20-stream-polar";

/// Marsaglia polar method on uniform doubles from `rng`.
pub fn standard_normals<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let (u, v, s) = loop {
            let u: f64 = 2.0 * rng.gen::<f64>() - 1.0;
            let v: f64 = 2.0 * rng.gen::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                break (u, v, s);
            }
        };
        let f = (-2.0 * s.ln() / s).sqrt();
        out.push(u * f);
        out.push(v * f);
    }
    out.truncate(count);
    out
}

/// Normal stream for one data block.
pub fn block_normals(seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    standard_normals(&mut rng, count)
}

/// Perturbs intensities by `delta * xi / |xi| * |values|` (Euclidean norms),
/// so the relative perturbation is exactly `delta`.
pub fn add_noise_with<T: Real>(values: &[T], delta: T, xi: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("cannot add noise to an empty vector".into()));
    }
    if !(delta >= T::zero()) {
        return Err(Error::InvalidParameter(format!("noise level {delta} must be nonnegative")));
    }
    if xi.len() != values.len() {
        return Err(Error::Layout(format!("{} normals for {} values", xi.len(), values.len())));
    }
    if delta == T::zero() {
        return Ok(values.to_vec());
    }
    let norm = |v: &[T]| v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
    let scale = delta * norm(values) / norm(xi);
    Ok(values.iter().zip(xi).map(|(&v, &x)| v + scale * x).collect())
}

pub fn add_noise(values: &[f64], delta: f64, seed: u64, stream: u64) -> Result<Vec<f64>> {
    add_noise_with(values, delta, &block_normals(seed, stream, values.len()))
}

/// Stream index of the block for frequency `b`, pair `q`.
pub fn stream_index(b: usize, q: usize) -> u64 {
    ((b as u64) << 32) | q as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub delta: f64,
    pub seed: u64,
}

/// Measurements at one frequency: the single incident directions and the
/// index pairs whose superpositions are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBlock {
    pub k_plus: f64,
    pub incident: Vec<f64>,
    pub pairs: Vec<[usize; 2]>,
}

impl FrequencyBlock {
    /// Every ordered pair of an `n_d`-point incident aperture grid, row-major.
    pub fn full_tensor(medium: &Medium, n_d: usize) -> Self {
        let incident = medium.aperture_grid(DirectionKind::Incident, n_d);
        let pairs = (0..n_d).flat_map(|l| (0..n_d).map(move |i| [l, i])).collect();
        Self { k_plus: medium.k_plus, incident, pairs }
    }

    /// Explicit list of direction pairs; repeated angles share one solve.
    pub fn from_angle_pairs(k_plus: f64, angle_pairs: &[[f64; 2]]) -> Self {
        let mut incident: Vec<f64> = Vec::new();
        let mut index = |a: f64| match incident.iter().position(|&b| b == a) {
            Some(p) => p,
            None => {
                incident.push(a);
                incident.len() - 1
            }
        };
        let pairs = angle_pairs.iter().map(|&[a, b]| [index(a), index(b)]).collect();
        Self { k_plus, incident, pairs }
    }

    pub fn angle_pair(&self, q: usize) -> [f64; 2] {
        let [l, i] = self.pairs[q];
        [self.incident[l], self.incident[i]]
    }

    /// Side length if the block is the full pair tensor of an aperture grid.
    pub fn tensor_side(&self, medium: &Medium) -> Option<usize> {
        let n = self.incident.len();
        let grid = medium.aperture_grid(DirectionKind::Incident, n);
        let grid_ok = grid.iter().zip(&self.incident).all(|(a, b)| (a - b).abs() < 1e-12);
        let pairs_ok = self.pairs.len() == n * n
            && self.pairs.iter().enumerate().all(|(p, &[l, i])| l == p / n && i == p % n);
        (grid_ok && pairs_ok).then_some(n)
    }
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Refractive index `n = (k-/k+)^2`.
    pub n: f64,
    pub n_f: usize,
    /// Boundary nodes per obstacle component in the data solves.
    pub nodes: usize,
    pub truth: Vec<Shape>,
    pub blocks: Vec<FrequencyBlock>,
    pub noise: NoiseSpec,
}

impl SynthSpec {
    pub fn medium(&self, block: usize) -> Result<Medium> {
        let b = self
            .blocks
            .get(block)
            .ok_or_else(|| Error::Layout(format!("no frequency block {block}")))?;
        Medium::new(b.k_plus, self.n)
    }

    pub fn observation(&self, block: usize) -> Result<Vec<f64>> {
        Ok(self.medium(block)?.aperture_grid(DirectionKind::Observation, self.n_f))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_f == 0 || self.blocks.is_empty() || self.truth.is_empty() {
            return Err(Error::InvalidParameter("dataset needs observations, blocks and a truth".into()));
        }
        for b in 0..self.blocks.len() {
            let m = self.medium(b)?;
            let blk = &self.blocks[b];
            for &t in &blk.incident {
                m.check_aperture(t, DirectionKind::Incident)?;
            }
            if blk.pairs.iter().flatten().any(|&p| p >= blk.incident.len()) {
                return Err(Error::Layout(format!("block {b} refers to a missing incident direction")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(flatten)]
    pub spec: SynthSpec,
}

/// Intensities `|u_inf(x_j, d1, d2)|^2`, indexed `[block][pair][observation]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaselessDataset {
    pub header: DatasetHeader,
    pub values: Vec<Vec<Vec<f64>>>,
}

impl PhaselessDataset {
    pub fn spec(&self) -> &SynthSpec {
        &self.header.spec
    }

    pub fn check_layout(&self) -> Result<()> {
        let spec = self.spec();
        if self.values.len() != spec.blocks.len() {
            return Err(Error::Format(format!(
                "{} value blocks for {} frequencies",
                self.values.len(),
                spec.blocks.len()
            )));
        }
        for (b, (vals, blk)) in self.values.iter().zip(&spec.blocks).enumerate() {
            if vals.len() != blk.pairs.len() {
                return Err(Error::Format(format!("block {b}: {} rows for {} pairs", vals.len(), blk.pairs.len())));
            }
            if let Some(row) = vals.iter().find(|r| r.len() != spec.n_f) {
                return Err(Error::Format(format!("block {b}: row of length {} but n_f = {}", row.len(), spec.n_f)));
            }
        }
        Ok(())
    }
}

/// Noiseless intensities for one block from the given obstacle.
pub fn clean_block(
    curves: &[&dyn BoundaryCurve<f64>],
    medium: &Medium,
    nodes: usize,
    block: &FrequencyBlock,
    obs: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let table = simulate(curves, medium, nodes, &block.incident, obs)?;
    Ok(block
        .pairs
        .iter()
        .map(|&[l, i]| table.pair(l, i).iter().map(|v| v.norm_sqr()).collect())
        .collect())
}

/// Runs the forward solves and applies the noise model block by block.
pub fn synthesize(spec: &SynthSpec, config_hash: Option<String>) -> Result<PhaselessDataset> {
    spec.validate()?;
    let shapes = spec.truth.iter().map(Shape::build).collect::<Result<Vec<_>>>()?;
    let curves: Vec<&dyn BoundaryCurve<f64>> = shapes.iter().map(|b| b.as_ref()).collect();
    let mut values = Vec::with_capacity(spec.blocks.len());
    for (b, blk) in spec.blocks.iter().enumerate() {
        let m = spec.medium(b)?;
        let obs = spec.observation(b)?;
        log::info!("synthesizing block {b}: k+ = {}, {} pairs", blk.k_plus, blk.pairs.len());
        let clean = clean_block(&curves, &m, spec.nodes, blk, &obs)?;
        let noisy = clean
            .iter()
            .enumerate()
            .map(|(q, row)| add_noise(row, spec.noise.delta, spec.noise.seed, stream_index(b, q)))
            .collect::<Result<Vec<_>>>()?;
        values.push(noisy);
    }
    Ok(PhaselessDataset {
        header: DatasetHeader {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            generator: NOISE_GENERATOR.into(),
            config_hash,
            spec: spec.clone(),
        },
        values,
    })
}

pub fn write_dataset(data: &PhaselessDataset, path: &Path) -> Result<()> {
    data.check_layout()?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", serde_json::to_string(&data.header)?)?;
    write!(w, "block,pair")?;
    for j in 0..data.spec().n_f {
        write!(w, ",obs_{j}")?;
    }
    writeln!(w)?;
    for (b, rows) in data.values.iter().enumerate() {
        for (q, row) in rows.iter().enumerate() {
            write!(w, "{b},{q}")?;
            for v in row {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<PhaselessDataset> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&first)?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Format(format!("not a phaseless dataset (format {:?})", header.format)));
    }
    if header.version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "dataset version {} unsupported (expected {DATASET_VERSION})",
            header.version
        )));
    }
    if header.generator != NOISE_GENERATOR {
        return Err(Error::Format(format!("unknown noise generator {:?}", header.generator)));
    }
    let _columns = lines.next().ok_or_else(|| Error::Format("missing column header".into()))??;
    let spec = &header.spec;
    let mut values: Vec<Vec<Vec<f64>>> = spec.blocks.iter().map(|b| Vec::with_capacity(b.pairs.len())).collect();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 3;
        let mut fields = line.split(',');
        let mut index = |what: &str| -> Result<usize> {
            fields
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("line {row}: bad {what} index")))
        };
        let (b, q) = (index("block")?, index("pair")?);
        let vals = fields
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("line {row}: {e}")))?;
        if vals.len() != spec.n_f {
            return Err(Error::Format(format!("line {row}: {} values but n_f = {}", vals.len(), spec.n_f)));
        }
        let blk = values
            .get_mut(b)
            .ok_or_else(|| Error::Format(format!("line {row}: block {b} not in header")))?;
        if q != blk.len() {
            return Err(Error::Format(format!("line {row}: expected pair {}, found {q}", blk.len())));
        }
        blk.push(vals);
    }
    let data = PhaselessDataset { header, values };
    data.check_layout()?;
    Ok(data)
}
