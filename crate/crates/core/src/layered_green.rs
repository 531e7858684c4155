//! Green function of the two-layer medium for sources in the lower half-plane,
//! its far-field kernel, and the aperture integral `B0`.
//!
//! For `x, y` below the interface `G = Phi + H` with `Phi` the free-space
//! kernel of the lower medium. `H` and the transmitted field above the
//! interface are Sommerfeld integrals over the horizontal wave number `xi`:
//!
//! ```text
//! H(x, y) = i/(2 pi) int_0^inf R(xi)/beta_-  cos(xi u) exp(-i beta_- v) dxi
//! G(x, y) = i/(2 pi) int_0^inf 2/(beta_- + beta_+) cos(xi u) exp(i beta_+ x2 - i beta_- y2) dxi
//! ```
//!
//! with `u = x1 - y1`, `v = x2 + y2`, `beta_pm = sqrt(k_pm^2 - xi^2)`
//! (`Im beta >= 0`) and `R = (beta_- - beta_+)/(beta_- + beta_+)`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{DirectionKind, MediumParams};
use crate::special::{gauss_legendre_16, hankel0, hankel1};

type Medium = MediumParams<f64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Kernel value with both gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenEval {
    pub value: Complex64,
    pub grad_x: [Complex64; 2],
    pub grad_y: [Complex64; 2],
}

/// `H` as a function of `(u, v)` together with the partials used by the
/// boundary integral operators and the interpolation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectedTerm {
    pub value: Complex64,
    pub du: Complex64,
    pub dv: Complex64,
    pub duv: Complex64,
}

impl ReflectedTerm {
    pub const ZERO: Self = Self {
        value: Complex64 { re: 0.0, im: 0.0 },
        du: Complex64 { re: 0.0, im: 0.0 },
        dv: Complex64 { re: 0.0, im: 0.0 },
        duv: Complex64 { re: 0.0, im: 0.0 },
    };

    pub fn grad_x(&self) -> [Complex64; 2] {
        [self.du, self.dv]
    }

    pub fn grad_y(&self) -> [Complex64; 2] {
        [-self.du, self.dv]
    }
}

/// Panel layout for the Sommerfeld integrals.
///
/// `[0, inf)` is split at `min(k-, k+)`, `max(k-, k+)` and a truncation point
/// past which the integrand is below `exp(-tail_exponent)`. Each interval is
/// mapped by `xi = mid - half cos(t)`, which removes the square-root branch
/// behaviour at both ends, and integrated with composite 16-point
/// Gauss-Legendre panels in `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SommerfeldQuadrature {
    /// Largest phase change (radians) covered by one panel.
    pub panel_phase: f64,
    pub tail_exponent: f64,
    /// Floor on `|x2 + y2|` in units of `1/k-`.
    pub depth_min: f64,
    pub min_panels: usize,
}

impl Default for SommerfeldQuadrature {
    fn default() -> Self {
        Self { panel_phase: 6.0, tail_exponent: 36.0, depth_min: 1e-3, min_panels: 2 }
    }
}

/// `beta = sqrt(k^2 - xi^2)` on the branch with non-negative imaginary part.
#[inline]
fn beta(k: f64, xi: f64) -> Complex64 {
    let d = (k - xi) * (k + xi);
    if d >= 0.0 {
        Complex64::new(d.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-d).sqrt())
    }
}

/// `exp(i z)` for complex `z`.
#[inline]
fn cis(z: Complex64) -> Complex64 {
    let m = (-z.im).exp();
    let (s, c) = z.re.sin_cos();
    Complex64::new(m * c, m * s)
}

impl SommerfeldQuadrature {
    /// Twice as many panels everywhere; used for self-convergence checks.
    pub fn refined(&self) -> Self {
        Self { panel_phase: self.panel_phase / 2.0, min_panels: self.min_panels * 2, ..*self }
    }

    fn panels(&self, phase: f64) -> usize {
        self.min_panels.max(1 + (phase / self.panel_phase).ceil() as usize)
    }

    /// Integrates `f` over `[a, b]` with the cosine map and `m` panels.
    fn integrate<const K: usize>(
        &self,
        a: f64,
        b: f64,
        m: usize,
        f: &mut impl FnMut(f64) -> [Complex64; K],
        acc: &mut [Complex64; K],
    ) {
        if b <= a {
            return;
        }
        let (nodes, weights) = gauss_legendre_16();
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let width = PI / m as f64;
        for p in 0..m {
            let t0 = p as f64 * width;
            for (x, w) in nodes.iter().zip(weights) {
                let t = t0 + 0.5 * width * (x + 1.0);
                let (st, ct) = t.sin_cos();
                let jac = half * st * 0.5 * width * w;
                let vals = f(mid - half * ct);
                for (s, v) in acc.iter_mut().zip(vals) {
                    *s += v * jac;
                }
            }
        }
    }

    /// Breakpoints `0, k_min, k_max, xi_max` (intervals past `xi_max` dropped).
    fn breakpoints(km: f64, kp: f64, xi_max: f64) -> [(f64, f64); 3] {
        let lo = km.min(kp);
        let hi = km.max(kp);
        let clip = |x: f64| x.min(xi_max);
        [(0.0, clip(lo)), (clip(lo), clip(hi)), (clip(hi), xi_max.max(hi))]
    }

    /// Reflected part `H` and its partials at `u = x1 - y1`, `v = x2 + y2 < 0`.
    pub fn reflected(&self, medium: &Medium, u: f64, v: f64) -> Result<ReflectedTerm> {
        if !(v < 0.0) {
            return Err(Error::Domain(format!("x2 + y2 = {v} must be negative")));
        }
        if medium.is_matched() {
            return Ok(ReflectedTerm::ZERO);
        }
        let km = medium.k_minus;
        let kp = medium.k_plus;
        let depth = (-v).max(self.depth_min / km);
        let au = u.abs();
        let decay = self.tail_exponent / depth;
        let xi_max = (km * km + decay * decay).sqrt().max(kp.max(km) + decay.min(km));

        let mut acc = [Complex64::new(0.0, 0.0); 4];
        let mut integrand = |xi: f64| {
            let bm = beta(km, xi);
            let bp = beta(kp, xi);
            let r = (bm - bp) / (bm + bp);
            let e = cis(-bm * v);
            let (s, c) = (xi * au).sin_cos();
            let re = r * e;
            let re_b = re / bm;
            [re_b * c, re_b * (-xi * s), re * c, re * (-xi * s)]
        };
        for (a, b) in Self::breakpoints(km, kp, xi_max) {
            if b <= a {
                continue;
            }
            let phase = (b - a) * au + depth * (beta(km, a) - beta(km, b)).norm();
            let m = self.panels(phase);
            self.integrate(a, b, m, &mut integrand, &mut acc);
        }
        let pref = I / (2.0 * PI);
        let sign = if u < 0.0 { -1.0 } else { 1.0 };
        Ok(ReflectedTerm {
            value: pref * acc[0],
            du: pref * acc[1] * sign,
            dv: acc[2] / (2.0 * PI),
            duv: acc[3] / (2.0 * PI) * sign,
        })
    }

    /// Field above the interface (`x2 > 0`) due to a point source at `y`
    /// (`y2 < 0`).
    pub fn transmitted(&self, medium: &Medium, x: [f64; 2], y: [f64; 2]) -> Result<GreenEval> {
        if !(x[1] > 0.0) || !(y[1] < 0.0) {
            return Err(Error::Domain(format!(
                "transmitted kernel needs x2 > 0 > y2, got x2 = {}, y2 = {}",
                x[1], y[1]
            )));
        }
        let km = medium.k_minus;
        let kp = medium.k_plus;
        let u = x[0] - y[0];
        let au = u.abs();
        let depth = (x[1] - y[1]).max(self.depth_min / km);
        let decay = self.tail_exponent / depth;
        let xi_max = (km.max(kp).powi(2) + decay * decay).sqrt();

        let mut acc = [Complex64::new(0.0, 0.0); 5];
        let mut integrand = |xi: f64| {
            let bm = beta(km, xi);
            let bp = beta(kp, xi);
            let f = 2.0 / (bm + bp) * cis(bp * x[1] - bm * y[1]);
            let (s, c) = (xi * au).sin_cos();
            let fc = f * c;
            let fs = f * (-xi * s);
            [fc, fs, I * bp * fc, -I * bm * fc, Complex64::new(0.0, 0.0)]
        };
        for (a, b) in Self::breakpoints(km, kp, xi_max) {
            if b <= a {
                continue;
            }
            let phase = (b - a) * au
                + x[1] * (beta(kp, a) - beta(kp, b)).norm()
                + y[1].abs() * (beta(km, a) - beta(km, b)).norm();
            let m = self.panels(phase);
            self.integrate(a, b, m, &mut integrand, &mut acc);
        }
        let pref = I / (2.0 * PI);
        let sign = if u < 0.0 { -1.0 } else { 1.0 };
        let du = pref * acc[1] * sign;
        Ok(GreenEval {
            value: pref * acc[0],
            grad_x: [du, pref * acc[2]],
            grad_y: [-du, pref * acc[3]],
        })
    }
}

/// Free-space kernel `(i/4) H0(k |x - y|)` with its gradients.
pub fn free_space_phi(x: [f64; 2], y: [f64; 2], k: f64) -> Result<GreenEval> {
    let d = [y[0] - x[0], y[1] - x[1]];
    let r = d[0].hypot(d[1]);
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    let value = I * 0.25 * hankel0(k * r);
    let g = -I * (0.25 * k) * hankel1(k * r) / r;
    let grad_y = [g * d[0], g * d[1]];
    Ok(GreenEval { value, grad_x: [-grad_y[0], -grad_y[1]], grad_y })
}

/// Reflected part `H(x, y)` for `x, y` below the interface.
pub fn reflected_term(x: [f64; 2], y: [f64; 2], medium: &Medium) -> Result<GreenEval> {
    check_below(x)?;
    check_below(y)?;
    let h = SommerfeldQuadrature::default().reflected(medium, x[0] - y[0], x[1] + y[1])?;
    Ok(GreenEval { value: h.value, grad_x: h.grad_x(), grad_y: h.grad_y() })
}

fn check_below(p: [f64; 2]) -> Result<()> {
    if !(p[1] < 0.0) {
        return Err(Error::Domain(format!("point ({}, {}) is not below the interface", p[0], p[1])));
    }
    Ok(())
}

/// Layered Green function for a source `y` below the interface and a field
/// point `x` on either side.
pub fn green_total(x: [f64; 2], y: [f64; 2], medium: &Medium) -> Result<GreenEval> {
    green_total_with(&SommerfeldQuadrature::default(), x, y, medium)
}

pub fn green_total_with(
    quad: &SommerfeldQuadrature,
    x: [f64; 2],
    y: [f64; 2],
    medium: &Medium,
) -> Result<GreenEval> {
    check_below(y)?;
    if x[1] > 0.0 {
        if medium.is_matched() {
            return free_space_phi(x, y, medium.k_minus);
        }
        return quad.transmitted(medium, x, y);
    }
    if x[1] == 0.0 {
        return Err(Error::Domain("field point on the interface".into()));
    }
    let phi = free_space_phi(x, y, medium.k_minus)?;
    let h = quad.reflected(medium, x[0] - y[0], x[1] + y[1])?;
    let gx = h.grad_x();
    let gy = h.grad_y();
    Ok(GreenEval {
        value: phi.value + h.value,
        grad_x: [phi.grad_x[0] + gx[0], phi.grad_x[1] + gx[1]],
        grad_y: [phi.grad_y[0] + gy[0], phi.grad_y[1] + gy[1]],
    })
}

/// Far-field kernel value and `y`-gradient for observation angle `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldKernel {
    pub value: Complex64,
    pub grad_y: [Complex64; 2],
}

/// Observation-angle data shared by all source points: the prefactor
/// `e^{i pi/4} T / sqrt(8 pi k+)` and the wave vector `k- x_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldFactor {
    pub amplitude: Complex64,
    pub wavevector: [f64; 2],
}

impl FarFieldFactor {
    pub fn new(theta: f64, medium: &Medium) -> Result<Self> {
        let t = medium.fresnel_kind(theta, DirectionKind::Observation)?.transmission;
        let w = medium.transmitted_wavevector(theta, DirectionKind::Observation)?;
        let amplitude = Complex64::from_polar(1.0, PI / 4.0) * (t / (8.0 * PI * medium.k_plus).sqrt());
        Ok(Self { amplitude, wavevector: w })
    }

    #[inline]
    pub fn eval(&self, y: [f64; 2]) -> FarFieldKernel {
        let phase = -(self.wavevector[0] * y[0] + self.wavevector[1] * y[1]);
        let value = self.amplitude * Complex64::from_polar(1.0, phase);
        FarFieldKernel {
            value,
            grad_y: [-I * self.wavevector[0] * value, -I * self.wavevector[1] * value],
        }
    }
}

pub fn farfield_kernel(theta: f64, y: [f64; 2], medium: &Medium) -> Result<FarFieldKernel> {
    Ok(FarFieldFactor::new(theta, medium)?.eval(y))
}

/// Default node count for [`eval_b0`].
pub const B0_DEFAULT_ORDER: usize = 2048;

/// `B0(y) = int T(theta_d)^2 exp(i k- y . d_t) dtheta_d` over the incident
/// aperture, by composite Gauss-Legendre with `order` nodes (rounded up to a
/// multiple of 16).
///
/// When `k+ >= k-` the integral is taken in the refracted angle, which keeps
/// the integrand smooth at the critical angle.
pub fn eval_b0(y: [f64; 2], medium: &Medium, order: usize) -> Result<Complex64> {
    let (nodes, weights) = gauss_legendre_16();
    let panels = order.div_ceil(16).max(1);
    let kp = medium.k_plus;
    let km = medium.k_minus;
    let in_refracted = kp >= km;
    let (lo, hi) = if in_refracted {
        (PI, 2.0 * PI)
    } else {
        medium.aperture(DirectionKind::Incident)
    };
    let width = (hi - lo) / panels as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let a = lo + p as f64 * width;
        for (x, w) in nodes.iter().zip(weights) {
            let s = a + 0.5 * width * (x + 1.0);
            let (st, ct) = s.sin_cos();
            let (t, wv, jac) = if in_refracted {
                // s is the refracted angle; k+ sin(theta_d) from Snell
                let ksd = -((kp - km * ct) * (kp + km * ct)).max(0.0).sqrt();
                let a_inc = ksd;
                let b_tr = km * st;
                let t = 2.0 * a_inc / (a_inc + b_tr);
                let jac = if ksd == 0.0 { 0.0 } else { km * st / ksd };
                (t, [km * ct, km * st], jac)
            } else {
                let a_inc = kp * st;
                let vert = -((km - kp * ct) * (km + kp * ct)).max(0.0).sqrt();
                let t = 2.0 * a_inc / (a_inc + vert);
                (t, [kp * ct, vert], 1.0)
            };
            let phase = wv[0] * y[0] + wv[1] * y[1];
            sum += Complex64::from_polar(t * t * jac * 0.5 * width * w, phase);
        }
    }
    Ok(sum)
}

/// Bicubic Hermite table of `H(u, v)` on a tensor grid, storing value and
/// the partials `du`, `dv`, `duv` at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTable {
    pub k_plus: f64,
    pub k_minus: f64,
    pub u_axis: Vec<f64>,
    pub v_axis: Vec<f64>,
    /// Node data, `v`-major: entry `iv * nu + iu`.
    pub nodes: Vec<ReflectedTerm>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableHeader {
    format: String,
    version: u32,
    k_plus: f64,
    k_minus: f64,
    u_axis: Vec<f64>,
    v_axis: Vec<f64>,
}

const TABLE_FORMAT: &str = "layerscat-reflection-table";
const TABLE_VERSION: u32 = 1;

fn hermite_basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2]
}

fn hermite_basis_deriv(s: f64) -> [f64; 4] {
    let s2 = s * s;
    [6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s]
}

fn locate(axis: &[f64], x: f64) -> Result<(usize, f64, f64)> {
    let n = axis.len();
    let lo = axis[0];
    let hi = axis[n - 1];
    if x < lo - 1e-12 * (hi - lo) || x > hi + 1e-12 * (hi - lo) {
        return Err(Error::Domain(format!("{x} outside table range [{lo}, {hi}]")));
    }
    let h = (hi - lo) / (n - 1) as f64;
    let i = (((x - lo) / h).floor() as usize).min(n - 2);
    let s = ((x - axis[i]) / h).clamp(0.0, 1.0);
    Ok((i, s, h))
}

impl ReflectionTable {
    /// Tabulates `H` on `nu x nv` equispaced nodes covering `u_range x v_range`.
    pub fn build(
        medium: &Medium,
        quad: &SommerfeldQuadrature,
        u_range: (f64, f64),
        v_range: (f64, f64),
        nu: usize,
        nv: usize,
    ) -> Result<Self> {
        if nu < 2 || nv < 2 || !(v_range.1 < 0.0) || u_range.1 <= u_range.0 || v_range.1 <= v_range.0 {
            return Err(Error::InvalidParameter("degenerate reflection table range".into()));
        }
        let axis = |(a, b): (f64, f64), n: usize| -> Vec<f64> {
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        };
        let u_axis = axis(u_range, nu);
        let v_axis = axis(v_range, nv);
        let nodes = (0..nu * nv)
            .into_par_iter()
            .map(|idx| quad.reflected(medium, u_axis[idx % nu], v_axis[idx / nu]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { k_plus: medium.k_plus, k_minus: medium.k_minus, u_axis, v_axis, nodes })
    }

    /// Interpolated `H`, `dH/du`, `dH/dv` at `(u, v)`.
    pub fn eval(&self, u: f64, v: f64) -> Result<ReflectedTerm> {
        let nu = self.u_axis.len();
        let (iu, su, hu) = locate(&self.u_axis, u)?;
        let (iv, sv, hv) = locate(&self.v_axis, v)?;
        let (bu, du) = (hermite_basis(su), hermite_basis_deriv(su));
        let (bv, dv) = (hermite_basis(sv), hermite_basis_deriv(sv));
        let mut out = ReflectedTerm::ZERO;
        for (cu, cv) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
            let n = &self.nodes[(iv + cv) * nu + iu + cu];
            // Hermite slots: value at 2c, derivative (scaled by h) at 2c+1
            let (pu, qu) = (bu[2 * cu], bu[2 * cu + 1] * hu);
            let (pv, qv) = (bv[2 * cv], bv[2 * cv + 1] * hv);
            let (dpu, dqu) = (du[2 * cu] / hu, du[2 * cu + 1]);
            let (dpv, dqv) = (dv[2 * cv] / hv, dv[2 * cv + 1]);
            out.value += n.value * (pu * pv) + n.du * (qu * pv) + n.dv * (pu * qv) + n.duv * (qu * qv);
            out.du += n.value * (dpu * pv) + n.du * (dqu * pv) + n.dv * (dpu * qv) + n.duv * (dqu * qv);
            out.dv += n.value * (pu * dpv) + n.du * (qu * dpv) + n.dv * (pu * dqv) + n.duv * (qu * dqv);
        }
        Ok(out)
    }

    /// Writes a JSON header line followed by CSV rows
    /// `iu,iv,re,im,re_du,im_du,re_dv,im_dv,re_duv,im_duv`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = TableHeader {
            format: TABLE_FORMAT.into(),
            version: TABLE_VERSION,
            k_plus: self.k_plus,
            k_minus: self.k_minus,
            u_axis: self.u_axis.clone(),
            v_axis: self.v_axis.clone(),
        };
        writeln!(f, "{}", serde_json::to_string(&header)?)?;
        let nu = self.u_axis.len();
        for (idx, n) in self.nodes.iter().enumerate() {
            writeln!(
                f,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                idx % nu,
                idx / nu,
                n.value.re,
                n.value.im,
                n.du.re,
                n.du.im,
                n.dv.re,
                n.dv.im,
                n.duv.re,
                n.duv.im
            )?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty table file".into()))??;
        let header: TableHeader = serde_json::from_str(&first)?;
        if header.format != TABLE_FORMAT || header.version != TABLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported table format {} v{}",
                header.format, header.version
            )));
        }
        let nu = header.u_axis.len();
        let nv = header.v_axis.len();
        let mut nodes = vec![ReflectedTerm::ZERO; nu * nv];
        let mut seen = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("table row {}: malformed", lineno + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 10 {
                return Err(bad());
            }
            let iu: usize = cols[0].parse().map_err(|_| bad())?;
            let iv: usize = cols[1].parse().map_err(|_| bad())?;
            if iu >= nu || iv >= nv {
                return Err(bad());
            }
            let x: Vec<f64> = cols[2..].iter().map(|c| c.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
            nodes[iv * nu + iu] = ReflectedTerm {
                value: Complex64::new(x[0], x[1]),
                du: Complex64::new(x[2], x[3]),
                dv: Complex64::new(x[4], x[5]),
                duv: Complex64::new(x[6], x[7]),
            };
            seen += 1;
        }
        if seen != nu * nv {
            return Err(Error::Format(format!("expected {} table rows, found {seen}", nu * nv)));
        }
        Ok(Self { k_plus: header.k_plus, k_minus: header.k_minus, u_axis: header.u_axis, v_axis: header.v_axis, nodes })
    }
}
