//! Nyström discretization of the combined-layer boundary integral equation
//! `(1/2 I + K - i S) phi = f` for sound-soft obstacles below the interface.
//!
//! The free-space part of each self-interaction block uses the logarithmic
//! product quadrature on `2n` equispaced nodes; the reflected part and all
//! interactions between distinct components are smooth and use the trapezoid
//! rule. Far fields follow from the combined-layer representation with the
//! layered far-field kernel.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::BoundaryCurve;
use crate::layered_green::{FarFieldFactor, ReflectedTerm, SommerfeldQuadrature};
use crate::medium::MediumParams;
use crate::special::{bessel_j0, bessel_j1, hankel0, hankel1, log_quadrature_weights, EULER_GAMMA};

type Medium = MediumParams<f64>;
pub type CMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Minimum clearance between an obstacle and the interface.
pub const INTERFACE_MARGIN: f64 = 1e-6;

/// Default node counts per obstacle component.
pub const DATA_NODES: usize = 256;
pub const INVERSION_NODES: usize = 128;

/// Quadrature nodes on one or more closed boundary components.
#[derive(Debug, Clone)]
pub struct BoundaryNodes {
    pub points: Vec<[f64; 2]>,
    pub d1: Vec<[f64; 2]>,
    pub d2: Vec<[f64; 2]>,
    pub speed: Vec<f64>,
    /// Parameter value of each node on its own component.
    pub params: Vec<f64>,
    /// Trapezoid weight `2 pi / N` of the component each node belongs to.
    pub weight: Vec<f64>,
    pub components: Vec<Range<usize>>,
}

impl BoundaryNodes {
    pub fn new(curves: &[&dyn BoundaryCurve<f64>], nodes_per_curve: usize) -> Result<Self> {
        if nodes_per_curve < 8 || !nodes_per_curve.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "node count {nodes_per_curve} must be even and at least 8"
            )));
        }
        if curves.is_empty() {
            return Err(Error::InvalidParameter("no boundary components".into()));
        }
        let mut out = Self {
            points: Vec::new(),
            d1: Vec::new(),
            d2: Vec::new(),
            speed: Vec::new(),
            params: Vec::new(),
            weight: Vec::new(),
            components: Vec::new(),
        };
        let h = 2.0 * PI / nodes_per_curve as f64;
        for (ci, c) in curves.iter().enumerate() {
            let start = out.points.len();
            for j in 0..nodes_per_curve {
                let t = j as f64 * h;
                let p = c.point(t);
                let d = c.d1(t);
                let s = d[0].hypot(d[1]);
                if !(s > 0.0) || !s.is_finite() || !p[0].is_finite() || !p[1].is_finite() {
                    return Err(Error::Geometry(format!("component {ci}: degenerate node at t = {t}")));
                }
                if p[1] > -INTERFACE_MARGIN {
                    return Err(Error::Domain(format!(
                        "component {ci} reaches x2 = {:.3e}",
                        p[1]
                    )));
                }
                out.points.push(p);
                out.d1.push(d);
                out.d2.push(c.d2(t));
                out.speed.push(s);
                out.params.push(t);
                out.weight.push(h);
            }
            out.components.push(start..out.points.len());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Outward normal scaled by the speed, `(x2', -x1')`.
    #[inline]
    pub fn scaled_normal(&self, j: usize) -> [f64; 2] {
        [self.d1[j][1], -self.d1[j][0]]
    }

    pub fn unit_normal(&self, j: usize) -> [f64; 2] {
        let n = self.scaled_normal(j);
        [n[0] / self.speed[j], n[1] / self.speed[j]]
    }

    fn component_of(&self, j: usize) -> usize {
        self.components.iter().position(|r| r.contains(&j)).unwrap()
    }
}

/// Assembled and factorized system for one obstacle configuration and one
/// wave number, reusable across right-hand sides.
pub struct BieSystem {
    pub medium: Medium,
    pub nodes: BoundaryNodes,
    matrix: CMatrix,
    lu: LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    adjoint: OnceLock<std::result::Result<LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>, ()>>,
}

impl std::fmt::Debug for BieSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BieSystem")
            .field("medium", &self.medium)
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

/// Free-space double- and single-layer kernels split as
/// `L = L1 ln(4 sin^2((t - tau)/2)) + L2` (and likewise `M`).
struct SplitKernels {
    l1: Complex64,
    l2: Complex64,
    m1: Complex64,
    m2: Complex64,
}

fn split_kernels(nodes: &BoundaryNodes, i: usize, j: usize, k: f64) -> SplitKernels {
    let sj = nodes.speed[j];
    if i == j {
        let d1 = nodes.d1[i];
        let d2 = nodes.d2[i];
        let curv = (d1[1] * d2[0] - d1[0] * d2[1]) / (sj * sj);
        let l2 = Complex64::new(curv / (4.0 * PI), 0.0);
        let m1 = Complex64::new(-sj / (4.0 * PI), 0.0);
        let m2 = (I * 0.25 - EULER_GAMMA / (2.0 * PI) - (k * sj / 2.0).ln() / (2.0 * PI)) * sj;
        return SplitKernels { l1: Complex64::new(0.0, 0.0), l2, m1, m2 };
    }
    let xi = nodes.points[i];
    let xj = nodes.points[j];
    let diff = [xi[0] - xj[0], xi[1] - xj[1]];
    let r = diff[0].hypot(diff[1]);
    let n = nodes.scaled_normal(j);
    let ndot = n[0] * diff[0] + n[1] * diff[1];
    let kr = k * r;
    let h0 = hankel0(kr);
    let h1 = hankel1(kr);
    let j0 = bessel_j0(kr);
    let j1 = bessel_j1(kr);
    let dt = nodes.params[i] - nodes.params[j];
    let log = (4.0 * (dt / 2.0).sin().powi(2)).ln();
    let l = I * (k / 4.0) * h1 / r * ndot;
    let l1 = Complex64::new(-(k / (4.0 * PI)) * j1 / r * ndot, 0.0);
    let m = I * 0.25 * h0 * sj;
    let m1 = Complex64::new(-j0 * sj / (4.0 * PI), 0.0);
    SplitKernels { l1, l2: l - l1 * log, m1, m2: m - m1 * log }
}

/// `dPhi/dnu_y |x'_j| - i Phi |x'_j|` for well-separated nodes.
fn smooth_free_space(nodes: &BoundaryNodes, i: usize, j: usize, k: f64) -> Complex64 {
    let xi = nodes.points[i];
    let xj = nodes.points[j];
    let diff = [xi[0] - xj[0], xi[1] - xj[1]];
    let r = diff[0].hypot(diff[1]);
    let n = nodes.scaled_normal(j);
    let ndot = n[0] * diff[0] + n[1] * diff[1];
    let kr = k * r;
    I * (k / 4.0) * hankel1(kr) / r * ndot - I * (I * 0.25 * hankel0(kr)) * nodes.speed[j]
}

/// Reflected-part contribution `dH/dnu_y |x'_j| - i H |x'_j|`.
#[inline]
fn reflected_entry(nodes: &BoundaryNodes, j: usize, h: &ReflectedTerm) -> Complex64 {
    let n = nodes.scaled_normal(j);
    let g = h.grad_y();
    g[0] * n[0] + g[1] * n[1] - I * h.value * nodes.speed[j]
}

impl BieSystem {
    /// Assembles and factorizes the system for the given boundary components.
    pub fn assemble(curves: &[&dyn BoundaryCurve<f64>], medium: &Medium, nodes_per_curve: usize) -> Result<Self> {
        let nodes = BoundaryNodes::new(curves, nodes_per_curve)?;
        Self::from_nodes(nodes, medium, &SommerfeldQuadrature::default())
    }

    pub fn from_nodes(nodes: BoundaryNodes, medium: &Medium, quad: &SommerfeldQuadrature) -> Result<Self> {
        let matrix = assemble_matrix(&nodes, medium, quad)?;
        let lu = matrix.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::SingularSystem);
        }
        Ok(Self { medium: *medium, nodes, matrix, lu, adjoint: OnceLock::new() })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Solves `A phi = f` for every column of `rhs`.
    pub fn solve_many(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if rhs.nrows() != self.len() {
            return Err(Error::Layout(format!("rhs has {} rows, system has {}", rhs.nrows(), self.len())));
        }
        self.lu.solve(rhs).ok_or(Error::SingularSystem)
    }

    pub fn solve_density(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let b = CMatrix::from_column_slice(rhs.len(), 1, rhs);
        Ok(self.solve_many(&b)?.column(0).iter().copied().collect())
    }

    fn adjoint_lu(&self) -> Result<&LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> {
        self.adjoint
            .get_or_init(|| {
                let lu = self.matrix.transpose().lu();
                if lu.is_invertible() {
                    Ok(lu)
                } else {
                    Err(())
                }
            })
            .as_ref()
            .map_err(|_| Error::SingularSystem)
    }

    /// Solves the adjoint-type equation `(1/2 I + K' - i S) psi = g` through
    /// the identity `K' = D^-1 K^T D` (`D` the diagonal of speeds), which the
    /// Nyström matrices satisfy exactly because the quadrature weights and
    /// kernel splittings are symmetric.
    pub fn solve_adjoint_many(&self, rhs: &CMatrix) -> Result<CMatrix> {
        let lu = self.adjoint_lu()?;
        let mut b = rhs.clone();
        for (i, mut row) in b.row_iter_mut().enumerate() {
            row *= Complex64::new(self.nodes.speed[i], 0.0);
        }
        let mut z = lu.solve(&b).ok_or(Error::SingularSystem)?;
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row /= Complex64::new(self.nodes.speed[i], 0.0);
        }
        Ok(z)
    }

    /// Dirichlet data `-u0` of a plane wave incident at `theta_d`.
    pub fn incident_data(&self, theta_d: f64) -> Result<Vec<Complex64>> {
        self.nodes
            .points
            .iter()
            .map(|&p| Ok(-self.medium.background_field(p, theta_d)?.value))
            .collect()
    }

    /// Right-hand side `du0/dnu - i u0` of the equation for the total-field
    /// normal derivative.
    fn normal_derivative_data(&self, theta_d: f64) -> Result<Vec<Complex64>> {
        (0..self.len())
            .map(|j| {
                let s = self.medium.background_field(self.nodes.points[j], theta_d)?;
                let n = self.nodes.unit_normal(j);
                Ok(s.grad[0] * n[0] + s.grad[1] * n[1] - I * s.value)
            })
            .collect()
    }

    /// Normal derivative of the total field on the boundary for each
    /// incident angle (one column per angle).
    pub fn total_normal_derivative(&self, thetas_d: &[f64]) -> Result<CMatrix> {
        let n = self.len();
        let mut rhs = CMatrix::zeros(n, thetas_d.len());
        for (c, &th) in thetas_d.iter().enumerate() {
            let g = self.normal_derivative_data(th)?;
            rhs.column_mut(c).copy_from_slice(&g);
        }
        self.solve_adjoint_many(&rhs)
    }

    /// Densities for plane waves at each incident angle (one column each).
    pub fn densities(&self, thetas_d: &[f64]) -> Result<CMatrix> {
        let n = self.len();
        let mut rhs = CMatrix::zeros(n, thetas_d.len());
        for (c, &th) in thetas_d.iter().enumerate() {
            let f = self.incident_data(th)?;
            rhs.column_mut(c).copy_from_slice(&f);
        }
        self.solve_many(&rhs)
    }

    /// Matrix mapping a density to far-field values at `thetas_obs`:
    /// `u_inf = (K_inf - i S_inf) phi`.
    pub fn far_field_operator(&self, thetas_obs: &[f64]) -> Result<CMatrix> {
        let n = self.len();
        let factors = thetas_obs
            .iter()
            .map(|&t| FarFieldFactor::new(t, &self.medium))
            .collect::<Result<Vec<_>>>()?;
        Ok(CMatrix::from_fn(thetas_obs.len(), n, |r, j| {
            let k = factors[r].eval(self.nodes.points[j]);
            let nv = self.nodes.scaled_normal(j);
            (k.grad_y[0] * nv[0] + k.grad_y[1] * nv[1] - I * k.value * self.nodes.speed[j]) * self.nodes.weight[j]
        }))
    }

    /// Matrix mapping boundary values `psi` to `-S_inf psi`.
    pub fn single_layer_far_field_operator(&self, thetas_obs: &[f64]) -> Result<CMatrix> {
        let factors = thetas_obs
            .iter()
            .map(|&t| FarFieldFactor::new(t, &self.medium))
            .collect::<Result<Vec<_>>>()?;
        Ok(CMatrix::from_fn(thetas_obs.len(), self.len(), |r, j| {
            -factors[r].eval(self.nodes.points[j]).value * self.nodes.speed[j] * self.nodes.weight[j]
        }))
    }

    pub fn far_field(&self, density: &[Complex64], thetas_obs: &[f64]) -> Result<Vec<Complex64>> {
        let op = self.far_field_operator(thetas_obs)?;
        let d = DVector::from_column_slice(density);
        Ok((op * d).iter().copied().collect())
    }
}

/// Trigonometric interpolation of `N` equispaced samples of a periodic
/// function to `M` equispaced points (`M` a multiple of `N`).
pub fn trig_interpolate(samples: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = samples.len();
    let half = n / 2;
    let coeffs: Vec<(i64, Complex64)> = (-(half as i64)..=half as i64)
        .map(|k| {
            let mut c = Complex64::new(0.0, 0.0);
            for (j, f) in samples.iter().enumerate() {
                c += f * Complex64::from_polar(1.0, -2.0 * PI * (k * j as i64) as f64 / n as f64);
            }
            // split the Nyquist mode evenly between +-N/2
            let w = if k.unsigned_abs() as usize == half && n.is_multiple_of(2) { 0.5 } else { 1.0 };
            (k, c * (w / n as f64))
        })
        .collect();
    (0..m)
        .map(|p| {
            let t = 2.0 * PI * p as f64 / m as f64;
            coeffs.iter().map(|(k, c)| c * Complex64::from_polar(1.0, *k as f64 * t)).sum()
        })
        .collect()
}

/// Combined-layer potential `(D - i S) phi` of a density given at `N`
/// equispaced nodes of `curve`, evaluated at `x` off the boundary. The
/// density is interpolated to `N * upsample` nodes first, which keeps the
/// trapezoid rule accurate close to the boundary.
pub fn combined_potential(
    curve: &dyn BoundaryCurve<f64>,
    medium: &Medium,
    density: &[Complex64],
    x: [f64; 2],
    upsample: usize,
) -> Result<Complex64> {
    let m = density.len() * upsample.max(1);
    let fine = trig_interpolate(density, m);
    let quad = SommerfeldQuadrature::default();
    let w = 2.0 * PI / m as f64;
    let terms = (0..m)
        .into_par_iter()
        .map(|j| {
            let t = j as f64 * w;
            let y = curve.point(t);
            let d = curve.d1(t);
            let g = crate::layered_green::green_total_with(&quad, x, y, medium)?;
            let kern = g.grad_y[0] * d[1] - g.grad_y[1] * d[0] - I * g.value * d[0].hypot(d[1]);
            Ok(kern * fine[j] * w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.into_iter().sum())
}

fn assemble_matrix(nodes: &BoundaryNodes, medium: &Medium, quad: &SommerfeldQuadrature) -> Result<CMatrix> {
    let n = nodes.len();
    let k = medium.k_minus;
    let matched = medium.is_matched();

    // reflected part, using H(x_j, x_i) = H(x_i, x_j) with du flipped
    let upper: Vec<Vec<ReflectedTerm>> = if matched {
        Vec::new()
    } else {
        (0..n)
            .into_par_iter()
            .map(|i| {
                (i..n)
                    .map(|j| {
                        let (xi, xj) = (nodes.points[i], nodes.points[j]);
                        quad.reflected(medium, xi[0] - xj[0], xi[1] + xj[1])
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
    };
    let h_at = |i: usize, j: usize| -> ReflectedTerm {
        if i <= j {
            upper[i][j - i]
        } else {
            let t = upper[j][i - j];
            ReflectedTerm { du: -t.du, duv: -t.duv, ..t }
        }
    };

    let comp: Vec<usize> = (0..n).map(|j| nodes.component_of(j)).collect();
    let log_weights: Vec<Vec<f64>> = nodes
        .components
        .iter()
        .map(|r| log_quadrature_weights(r.len()))
        .collect();

    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ci = comp[i];
            (0..n)
                .map(|j| {
                    let mut a = if i == j { Complex64::new(0.5, 0.0) } else { Complex64::new(0.0, 0.0) };
                    let w = nodes.weight[j];
                    if comp[j] == ci {
                        let s = split_kernels(nodes, i, j, k);
                        let m = (i as isize - j as isize).unsigned_abs();
                        let r = log_weights[ci][m];
                        a += (s.l1 - I * s.m1) * r + (s.l2 - I * s.m2) * w;
                    } else {
                        a += smooth_free_space(nodes, i, j, k) * w;
                    }
                    if !matched {
                        a += reflected_entry(nodes, j, &h_at(i, j)) * w;
                    }
                    a
                })
                .collect()
        })
        .collect();
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Complex far fields for single plane waves: `values[(obs, inc)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldTable {
    pub obs: Vec<f64>,
    pub inc: Vec<f64>,
    pub values: CMatrix,
}

impl FarFieldTable {
    /// Far field of the superposition of incident waves `l` and `i`.
    pub fn pair(&self, l: usize, i: usize) -> Vec<Complex64> {
        (0..self.obs.len()).map(|j| self.values[(j, l)] + self.values[(j, i)]).collect()
    }
}

/// Solves for every incident angle once and evaluates the far fields.
pub fn simulate(
    curves: &[&dyn BoundaryCurve<f64>],
    medium: &Medium,
    nodes_per_curve: usize,
    thetas_inc: &[f64],
    thetas_obs: &[f64],
) -> Result<FarFieldTable> {
    let sys = BieSystem::assemble(curves, medium, nodes_per_curve)?;
    simulate_with(&sys, thetas_inc, thetas_obs)
}

pub fn simulate_with(sys: &BieSystem, thetas_inc: &[f64], thetas_obs: &[f64]) -> Result<FarFieldTable> {
    let dens = sys.densities(thetas_inc)?;
    let op = sys.far_field_operator(thetas_obs)?;
    Ok(FarFieldTable { obs: thetas_obs.to_vec(), inc: thetas_inc.to_vec(), values: op * dens })
}
