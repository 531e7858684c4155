//! Direct imaging from phaseless pair data: the discrete indicator on a
//! sampling grid, peak extraction, and grid/peak output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::DirectionKind;
use crate::synth::PhaselessDataset;
use crate::Medium;

/// Relative size of the imaginary residue tolerated before a value is
/// reported as inaccurate.
pub const IMAG_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Incident-side quantities shared by every sampling point.
#[derive(Debug, Clone)]
struct Aperture {
    /// `k- d^t_l`, transmitted wave vectors of the incident grid.
    wavevectors: Vec<[f64; 2]>,
    transmission: Vec<f64>,
    obs_weight: f64,
    inc_weight: f64,
}

impl Aperture {
    fn new(medium: &Medium, n_f: usize, incident: &[f64]) -> Result<Self> {
        let p = medium.aperture_length();
        let mut wavevectors = Vec::with_capacity(incident.len());
        let mut transmission = Vec::with_capacity(incident.len());
        for &t in incident {
            wavevectors.push(medium.transmitted_wavevector(t, DirectionKind::Incident)?);
            transmission.push(medium.fresnel(t)?.transmission);
        }
        Ok(Self {
            wavevectors,
            transmission,
            obs_weight: p / n_f as f64,
            inc_weight: p / incident.len() as f64,
        })
    }

    /// `T_l exp(-i k- z . d^t_l)`.
    fn phases(&self, z: [f64; 2]) -> DVector<Complex64> {
        DVector::from_iterator(
            self.wavevectors.len(),
            self.wavevectors
                .iter()
                .zip(&self.transmission)
                .map(|(k, &t)| Complex64::from_polar(t, -(k[0] * z[0] + k[1] * z[1]))),
        )
    }
}

/// Phaseless pair intensities at one frequency, reduced to what the
/// indicator needs: the observation sums of the (symmetrized) pair tensor
/// and of the single-wave intensities `|u(d_l, d_l)|^2 / 4`.
#[derive(Debug, Clone)]
pub struct ImagingData {
    pub medium: Medium,
    pub n_f: usize,
    pub incident: Vec<f64>,
    aperture: Aperture,
    pair_sums: DMatrix<f64>,
    single_sums: DVector<f64>,
}

impl ImagingData {
    /// `tensor[l * n_d + i][j] = |u_inf(x_j, d_l, d_i)|^2` over the incident
    /// aperture grid `incident`.
    pub fn from_tensor(medium: &Medium, incident: &[f64], tensor: &[Vec<f64>]) -> Result<Self> {
        let n_d = incident.len();
        if n_d == 0 || tensor.len() != n_d * n_d {
            return Err(Error::Layout(format!("{} pair rows for {n_d} incident directions", tensor.len())));
        }
        let n_f = tensor[0].len();
        if n_f == 0 || tensor.iter().any(|r| r.len() != n_f) {
            return Err(Error::Layout("pair rows must share a nonzero observation count".into()));
        }
        let grid = medium.aperture_grid(DirectionKind::Incident, n_d);
        if grid.iter().zip(incident).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(Error::Layout("incident directions are not the aperture grid".into()));
        }
        let sums: Vec<f64> = tensor.iter().map(|r| r.iter().sum()).collect();
        // noise breaks the d1 <-> d2 symmetry of the pair data; average it out
        let pair_sums = DMatrix::from_fn(n_d, n_d, |l, i| 0.5 * (sums[l * n_d + i] + sums[i * n_d + l]));
        let single_sums = DVector::from_fn(n_d, |l, _| sums[l * n_d + l] / 4.0);
        Ok(Self {
            medium: *medium,
            n_f,
            incident: incident.to_vec(),
            aperture: Aperture::new(medium, n_f, incident)?,
            pair_sums,
            single_sums,
        })
    }

    pub fn from_dataset(data: &PhaselessDataset, block: usize) -> Result<Self> {
        let spec = data.spec();
        let medium = spec.medium(block)?;
        let blk = &spec.blocks[block];
        if blk.tensor_side(&medium).is_none() {
            return Err(Error::Layout(format!("block {block} is not a full pair tensor over the aperture grid")));
        }
        Self::from_tensor(&medium, &blk.incident, &data.values[block])
    }

    pub fn n_d(&self) -> usize {
        self.incident.len()
    }

    /// Complex value of the assembled three-term sum (real up to roundoff)
    /// and the magnitude scale of its terms.
    pub fn value_complex(&self, z: [f64; 2]) -> (Complex64, f64) {
        self.combine(&self.aperture.phases(z))
    }

    fn combine(&self, a: &DVector<Complex64>) -> (Complex64, f64) {
        let conj = a.map(|v| v.conj());
        let sa = self.pair_sums.map(|v| Complex64::new(v, 0.0)) * &conj;
        let pair = a.dot(&sa);
        let sum_a: Complex64 = a.iter().sum();
        let weighted_a: Complex64 = a.iter().zip(self.single_sums.iter()).map(|(x, s)| x * s).sum();
        let single = sum_a.conj() * weighted_a + sum_a * weighted_a.conj();
        let w = self.aperture.obs_weight * self.aperture.inc_weight * self.aperture.inc_weight;
        (w * (pair - single), w * (pair.norm() + single.norm()))
    }

    /// Indicator value at `z`; fails if the imaginary residue is not small.
    pub fn value(&self, z: [f64; 2]) -> Result<f64> {
        let (v, scale) = self.value_complex(z);
        check_real(v, scale)
    }
}

fn check_real(v: Complex64, scale: f64) -> Result<f64> {
    if v.im.abs() > IMAG_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Accuracy { achieved: v.im.abs() / scale });
    }
    Ok(v.re)
}

/// The same indicator from complex single-wave far fields `u[(j, l)]`:
/// `W_f sum_j (|v_j|^2 + |w_j|^2)` with the weighted aperture sums
/// `v_j = W_d sum_l u_jl T_l e^{-i k- z.d^t_l}` and the `+` analogue `w_j`.
pub fn indicator_from_far_fields(medium: &Medium, incident: &[f64], u: &DMatrix<Complex64>, z: [f64; 2]) -> Result<f64> {
    if u.ncols() != incident.len() {
        return Err(Error::Layout(format!("{} columns for {} incident directions", u.ncols(), incident.len())));
    }
    let ap = Aperture::new(medium, u.nrows(), incident)?;
    let a = ap.phases(z);
    let b = a.map(|v| v.conj());
    let v = u * &a * Complex64::new(ap.inc_weight, 0.0);
    let w = u * &b * Complex64::new(ap.inc_weight, 0.0);
    Ok(ap.obs_weight * (v.norm_squared() + w.norm_squared()))
}

/// Rectangular sampling region with `nx * ny` nodes including the edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingRegion {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl ImagingRegion {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x[0] < self.x[1] && self.y[0] < self.y[1] && self.nx >= 2 && self.ny >= 2;
        if !ok || !self.x.iter().chain(&self.y).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!("empty or degenerate sampling region {self:?}")));
        }
        if self.y[1] > 0.0 {
            return Err(Error::Domain(format!("sampling region reaches y = {} > 0", self.y[1])));
        }
        Ok(())
    }

    pub fn node(&self, ix: usize, iy: usize) -> [f64; 2] {
        let fx = ix as f64 / (self.nx - 1) as f64;
        let fy = iy as f64 / (self.ny - 1) as f64;
        [self.x[0] + fx * (self.x[1] - self.x[0]), self.y[0] + fy * (self.y[1] - self.y[0])]
    }
}

/// Indicator values at the region nodes, `values[iy * nx + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingGrid {
    pub region: ImagingRegion,
    pub values: Vec<f64>,
}

pub fn imaging_grid(data: &ImagingData, region: &ImagingRegion) -> Result<ImagingGrid> {
    region.validate()?;
    let ap = &data.aperture;
    // the phase factors separate in the two coordinates
    let xs: Vec<f64> = (0..region.nx).map(|ix| region.node(ix, 0)[0]).collect();
    let col_phase: Vec<Vec<Complex64>> = xs
        .iter()
        .map(|&x| {
            ap.wavevectors
                .iter()
                .zip(&ap.transmission)
                .map(|(k, &t)| Complex64::from_polar(t, -k[0] * x))
                .collect()
        })
        .collect();
    let rows = (0..region.ny)
        .into_par_iter()
        .map(|iy| {
            let y = region.node(0, iy)[1];
            let row_phase: Vec<Complex64> =
                ap.wavevectors.iter().map(|k| Complex64::from_polar(1.0, -k[1] * y)).collect();
            (0..region.nx)
                .map(|ix| {
                    let a = DVector::from_iterator(
                        row_phase.len(),
                        col_phase[ix].iter().zip(&row_phase).map(|(c, r)| c * r),
                    );
                    let (v, scale) = data.combine(&a);
                    check_real(v, scale)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImagingGrid { region: *region, values: rows.concat() })
}

impl ImagingGrid {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.region.nx + ix]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn argmax(&self) -> ([f64; 2], f64) {
        let (k, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
        (self.region.node(k % self.region.nx, k / self.region.nx), v)
    }

    /// Node table `x,y,value`, preceded by a `# config_hash=` comment when a
    /// hash is given.
    pub fn write_csv(&self, path: &Path, config_hash: Option<&str>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        if let Some(h) = config_hash {
            writeln!(w, "# config_hash={h}")?;
        }
        writeln!(w, "x,y,value")?;
        for iy in 0..self.region.ny {
            for ix in 0..self.region.nx {
                let p = self.region.node(ix, iy);
                writeln!(w, "{:.16e},{:.16e},{:.16e}", p[0], p[1], self.get(ix, iy))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// 8-bit binary PGM with linear min-max scaling, top row at the largest
    /// `y`; the scale goes to a JSON sidecar next to it.
    pub fn write_pgm(&self, path: &Path, sidecar: &Path, config_hash: Option<&str>) -> Result<()> {
        let (lo, hi) = self.min_max();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "P5")?;
        if let Some(h) = config_hash {
            writeln!(w, "# config_hash {h}")?;
        }
        write!(w, "{} {}\n255\n", self.region.nx, self.region.ny)?;
        for iy in (0..self.region.ny).rev() {
            let row: Vec<u8> = (0..self.region.nx)
                .map(|ix| (255.0 * (self.get(ix, iy) - lo) / span).round().clamp(0.0, 255.0) as u8)
                .collect();
            w.write_all(&row)?;
        }
        w.flush()?;
        let mut scale = serde_json::json!({ "min": lo, "max": hi, "width": self.region.nx, "height": self.region.ny });
        if let Some(h) = config_hash {
            scale["config_hash"] = h.into();
        }
        std::fs::write(sidecar, serde_json::to_string_pretty(&scale)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub location: [f64; 2],
    pub value: f64,
}

/// Local maxima sorted by value, at least `radius` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub threshold: f64,
    pub radius: f64,
    pub peaks: Vec<Peak>,
}

impl PeakSet {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Default suppression radius: one wavelength in the lower medium.
pub fn default_radius(medium: &Medium) -> f64 {
    2.0 * std::f64::consts::PI / medium.k_minus
}

/// Offset in units of the grid step of the vertex of the parabola through
/// three equally spaced samples, clipped to half a step.
fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let curvature = left - 2.0 * center + right;
    if curvature < 0.0 {
        (0.5 * (left - right) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Nodes that dominate their 8-neighbourhood and reach `threshold` times
/// the global maximum, selected greedily by value with suppression.
/// Locations are refined below the grid spacing by a parabolic fit along
/// each axis (interior nodes only).
pub fn find_peaks(grid: &ImagingGrid, threshold: f64, radius: f64) -> PeakSet {
    let (nx, ny) = (grid.region.nx, grid.region.ny);
    let (lo, hi) = grid.min_max();
    let mut out = PeakSet { config_hash: None, threshold, radius, peaks: Vec::new() };
    if !(hi > lo) || !(hi > 0.0) {
        log::warn!("imaging grid is flat or nonpositive; no peaks");
        return out;
    }
    let mut candidates = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let v = grid.get(ix, iy);
            if v < threshold * hi {
                continue;
            }
            let dominates = (iy.saturating_sub(1)..(iy + 2).min(ny))
                .flat_map(|jy| (ix.saturating_sub(1)..(ix + 2).min(nx)).map(move |jx| (jx, jy)))
                .all(|(jx, jy)| grid.get(jx, jy) <= v);
            if dominates {
                candidates.push(Peak { location: refine(grid, ix, iy), value: v });
            }
        }
    }
    // stable sort keeps the row-major order among ties
    candidates.sort_by(|a, b| b.value.total_cmp(&a.value));
    for c in candidates {
        let far = out.peaks.iter().all(|p| {
            let d = [p.location[0] - c.location[0], p.location[1] - c.location[1]];
            d[0].hypot(d[1]) >= radius
        });
        if far {
            out.peaks.push(c);
        }
    }
    out
}

fn refine(grid: &ImagingGrid, ix: usize, iy: usize) -> [f64; 2] {
    let r = &grid.region;
    let mut p = r.node(ix, iy);
    let v = grid.get(ix, iy);
    if ix > 0 && ix + 1 < r.nx {
        let step = (r.x[1] - r.x[0]) / (r.nx - 1) as f64;
        p[0] += step * parabolic_offset(grid.get(ix - 1, iy), v, grid.get(ix + 1, iy));
    }
    if iy > 0 && iy + 1 < r.ny {
        let step = (r.y[1] - r.y[0]) / (r.ny - 1) as f64;
        p[1] += step * parabolic_offset(grid.get(ix, iy - 1), v, grid.get(ix, iy + 1));
    }
    p
}
