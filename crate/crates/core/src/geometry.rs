//! Closed boundary curves: starlike trigonometric shapes (the reconstruction
//! space), fixed benchmark shapes, boundary frames and the Sobolev penalty.
//!
//! Every curve is parametrized over `[0, 2 pi)` counter-clockwise, so the
//! outward normal is `(x2', -x1') / |x'|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest admissible radius after the positivity projection.
pub const RADIUS_FLOOR: f64 = 0.05;
/// Grid size used to check and enforce positivity of the radial function.
pub const POSITIVITY_GRID: usize = 1024;

/// A smooth closed curve given by its parametrization and two derivatives.
pub trait BoundaryCurve<T: Real>: Send + Sync {
    fn point(&self, t: T) -> [T; 2];
    fn d1(&self, t: T) -> [T; 2];
    fn d2(&self, t: T) -> [T; 2];
}

/// Point, unit tangent, outward unit normal and speed at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFrame<T> {
    pub point: [T; 2],
    pub tangent: [T; 2],
    pub normal: [T; 2],
    pub speed: T,
}

pub fn eval_boundary<T: Real, C: BoundaryCurve<T> + ?Sized>(curve: &C, t: T) -> Result<BoundaryFrame<T>> {
    let p = curve.point(t);
    let d = curve.d1(t);
    let speed = d[0].hypot(d[1]);
    if !(speed > T::zero()) || !speed.is_finite() {
        return Err(Error::Geometry(format!("degenerate parametrization at t = {t}")));
    }
    Ok(BoundaryFrame {
        point: p,
        tangent: [d[0] / speed, d[1] / speed],
        normal: [d[1] / speed, -d[0] / speed],
        speed,
    })
}

/// Equispaced parameter values `2 pi j / n`.
pub fn parameter_grid<T: Real>(n: usize) -> Vec<T> {
    let h = T::lit(2.0) * T::PI() / T::from_usize(n).unwrap();
    (0..n).map(|j| T::from_usize(j).unwrap() * h).collect()
}

/// Highest point of the curve over `samples` equispaced parameters.
pub fn max_height<T: Real, C: BoundaryCurve<T> + ?Sized>(curve: &C, samples: usize) -> T {
    parameter_grid::<T>(samples)
        .into_iter()
        .map(|t| curve.point(t)[1])
        .fold(T::neg_infinity(), T::max)
}

/// Enclosed area by the trapezoid rule applied to `1/2 (x1 x2' - x2 x1')`.
pub fn enclosed_area<T: Real, C: BoundaryCurve<T> + ?Sized>(curve: &C, samples: usize) -> T {
    let h = T::lit(2.0) * T::PI() / T::from_usize(samples).unwrap();
    let sum = parameter_grid::<T>(samples).into_iter().fold(T::zero(), |acc, t| {
        let p = curve.point(t);
        let d = curve.d1(t);
        acc + p[0] * d[1] - p[1] * d[0]
    });
    T::lit(0.5) * h * sum
}

/// Polygon through `samples` equispaced curve points.
pub fn polygon<T: Real, C: BoundaryCurve<T> + ?Sized>(curve: &C, samples: usize) -> Vec<[T; 2]> {
    parameter_grid::<T>(samples).into_iter().map(|t| curve.point(t)).collect()
}

/// Shoelace area of a closed polygon (positive for counter-clockwise order).
pub fn shoelace_area<T: Real>(poly: &[[T; 2]]) -> T {
    let n = poly.len();
    let mut s = T::zero();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s = s + a[0] * b[1] - b[0] * a[1];
    }
    T::lit(0.5) * s
}

/// Area of the symmetric difference of two simple closed curves, computed
/// with horizontal scanlines through polygonal approximations.
pub fn symmetric_difference_area<T: Real>(
    a: &dyn BoundaryCurve<T>,
    b: &dyn BoundaryCurve<T>,
    samples: usize,
    scanlines: usize,
) -> T {
    let pa = polygon(a, samples);
    let pb = polygon(b, samples);
    let (lo, hi) = pa.iter().chain(&pb).fold((T::infinity(), T::neg_infinity()), |(lo, hi), p| {
        (lo.min(p[1]), hi.max(p[1]))
    });
    let dy = (hi - lo) / T::from_usize(scanlines).unwrap();
    let mut total = T::zero();
    for s in 0..scanlines {
        let y = lo + (T::from_usize(s).unwrap() + T::lit(0.5)) * dy;
        let ia = crossings(&pa, y);
        let ib = crossings(&pb, y);
        total = total + xor_length(&ia, &ib) * dy;
    }
    total
}

fn crossings<T: Real>(poly: &[[T; 2]], y: T) -> Vec<T> {
    let n = poly.len();
    let mut xs = Vec::new();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        if (p[1] <= y) != (q[1] <= y) {
            let s = (y - p[1]) / (q[1] - p[1]);
            xs.push(p[0] + s * (q[0] - p[0]));
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs
}

/// Length of the symmetric difference of two even-odd interval sets given by
/// sorted crossing abscissae.
fn xor_length<T: Real>(a: &[T], b: &[T]) -> T {
    let mut events: Vec<T> = a.iter().chain(b).copied().collect();
    events.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut len = T::zero();
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut prev = T::zero();
    for (k, &x) in events.iter().enumerate() {
        if k > 0 && ((ia % 2 == 1) != (ib % 2 == 1)) {
            len = len + (x - prev);
        }
        if ia < a.len() && a[ia] == x {
            ia += 1;
        } else {
            ib += 1;
        }
        prev = x;
    }
    len
}

/// Curve `center + r(theta) (cos theta, sin theta)` with
/// `r = c_0 + sum_l c_l cos(l theta) + c_{l+M} sin(l theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StarlikeCurve<T> {
    pub center: [T; 2],
    /// `2M + 1` radial coefficients: constant, cosines `1..=M`, sines `1..=M`.
    pub coeffs: Vec<T>,
    pub order: usize,
}

/// On-disk curve format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFile {
    pub center: [f64; 2],
    pub coeffs: Vec<f64>,
    #[serde(rename = "M")]
    pub order: usize,
}

/// Value of the `index`-th radial basis function at `theta`.
pub fn radial_basis<T: Real>(order: usize, index: usize, theta: T) -> T {
    if index == 0 {
        T::one()
    } else if index <= order {
        (T::from_usize(index).unwrap() * theta).cos()
    } else {
        (T::from_usize(index - order).unwrap() * theta).sin()
    }
}

/// Diagonal of the squared `H^s` norm in the radial basis:
/// `2 pi` for the constant, `pi (1 + l^2)^s` for both modes of order `l`.
pub fn hs_weights<T: Real>(order: usize, s: T) -> Vec<T> {
    let mut w = vec![T::zero(); 2 * order + 1];
    w[0] = T::lit(2.0) * T::PI();
    for l in 1..=order {
        let lf = T::from_usize(l).unwrap();
        let wl = T::PI() * (T::one() + lf * lf).powf(s);
        w[l] = wl;
        w[l + order] = wl;
    }
    w
}

/// Squared `H^s(0, 2 pi)` norm of a radial function in the basis above.
pub fn hs_norm_sq<T: Real>(coeffs: &[T], s: T) -> T {
    assert!(coeffs.len() % 2 == 1, "expected 2M+1 coefficients");
    let order = (coeffs.len() - 1) / 2;
    hs_weights(order, s)
        .iter()
        .zip(coeffs)
        .fold(T::zero(), |acc, (w, c)| acc + *w * *c * *c)
}

/// Least-squares fit of `2M+1` coefficients to samples of `r` at
/// `2 pi j / K`, `K > 2M`. The basis is discretely orthogonal there.
pub fn fit_radial<T: Real>(samples: &[T], order: usize) -> Result<Vec<T>> {
    let k = samples.len();
    if k <= 2 * order {
        return Err(Error::InvalidParameter(format!(
            "need more than {} samples to fit order {order}, got {k}",
            2 * order
        )));
    }
    let kf = T::from_usize(k).unwrap();
    let thetas = parameter_grid::<T>(k);
    let mut c = vec![T::zero(); 2 * order + 1];
    c[0] = samples.iter().fold(T::zero(), |a, &v| a + v) / kf;
    for l in 1..=order {
        let lf = T::from_usize(l).unwrap();
        let (mut a, mut b) = (T::zero(), T::zero());
        for (&v, &t) in samples.iter().zip(&thetas) {
            a = a + v * (lf * t).cos();
            b = b + v * (lf * t).sin();
        }
        // the Nyquist cosine has norm K instead of K/2
        let scale = if 2 * l == k { T::one() / kf } else { T::lit(2.0) / kf };
        c[l] = a * scale;
        c[l + order] = b * scale;
    }
    Ok(c)
}

impl<T: Real> StarlikeCurve<T> {
    pub fn new(center: [T; 2], coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() % 2 != 1 {
            return Err(Error::Geometry(format!(
                "radial coefficient count {} is not of the form 2M+1",
                coeffs.len()
            )));
        }
        if coeffs.iter().chain(&center).any(|c| !c.is_finite()) {
            return Err(Error::Geometry("non-finite curve parameter".into()));
        }
        let order = (coeffs.len() - 1) / 2;
        Ok(Self { center, coeffs, order })
    }

    pub fn circle(center: [T; 2], radius: T, order: usize) -> Self {
        let mut coeffs = vec![T::zero(); 2 * order + 1];
        coeffs[0] = radius;
        Self { center, coeffs, order }
    }

    pub fn param_count(&self) -> usize {
        2 * self.order + 1
    }

    /// `r`, `r'`, `r''` at `theta`.
    pub fn radius_derivatives(&self, theta: T) -> (T, T, T) {
        let m = self.order;
        let (mut r, mut r1, mut r2) = (self.coeffs[0], T::zero(), T::zero());
        for l in 1..=m {
            let lf = T::from_usize(l).unwrap();
            let (s, c) = (lf * theta).sin_cos();
            let (a, b) = (self.coeffs[l], self.coeffs[l + m]);
            r = r + a * c + b * s;
            r1 = r1 + lf * (b * c - a * s);
            r2 = r2 - lf * lf * (a * c + b * s);
        }
        (r, r1, r2)
    }

    pub fn radius(&self, theta: T) -> T {
        self.radius_derivatives(theta).0
    }

    pub fn min_radius(&self, samples: usize) -> T {
        parameter_grid::<T>(samples)
            .into_iter()
            .map(|t| self.radius(t))
            .fold(T::infinity(), T::min)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.min_radius(POSITIVITY_GRID);
        if !(m > T::zero()) {
            return Err(Error::Geometry(format!("radial function not positive (min {m})")));
        }
        Ok(())
    }

    /// Floors `r` at `r_min` on the positivity grid and refits, repeating
    /// until the refit curve clears half the floor.
    pub fn project_positive(&mut self, r_min: T) -> bool {
        let thetas = parameter_grid::<T>(POSITIVITY_GRID);
        let mut changed = false;
        for _ in 0..50 {
            let samples: Vec<T> = thetas.iter().map(|&t| self.radius(t)).collect();
            let lowest = samples.iter().copied().fold(T::infinity(), T::min);
            if lowest >= r_min * T::lit(0.5) && (changed || lowest >= r_min) {
                break;
            }
            changed = true;
            let floored: Vec<T> = samples.into_iter().map(|v| v.max(r_min)).collect();
            self.coeffs = fit_radial(&floored, self.order).expect("grid exceeds 2M+1");
        }
        changed
    }

    /// Parameter vector `(a1, a2, c_0, ..., c_2M)`.
    pub fn to_params(&self) -> Vec<T> {
        let mut p = vec![self.center[0], self.center[1]];
        p.extend_from_slice(&self.coeffs);
        p
    }

    pub fn from_params(params: &[T]) -> Result<Self> {
        if params.len() < 3 {
            return Err(Error::Geometry("parameter vector too short".into()));
        }
        Self::new([params[0], params[1]], params[2..].to_vec())
    }

    /// The same curve in a higher (or equal) Fourier order.
    pub fn with_order(&self, order: usize) -> Self {
        let mut c = vec![T::zero(); 2 * order + 1];
        c[0] = self.coeffs[0];
        for l in 1..=self.order.min(order) {
            c[l] = self.coeffs[l];
            c[l + order] = self.coeffs[l + self.order];
        }
        Self { center: self.center, coeffs: c, order }
    }
}

impl<T: Real> BoundaryCurve<T> for StarlikeCurve<T> {
    fn point(&self, t: T) -> [T; 2] {
        let r = self.radius(t);
        let (s, c) = t.sin_cos();
        [self.center[0] + r * c, self.center[1] + r * s]
    }

    fn d1(&self, t: T) -> [T; 2] {
        let (r, r1, _) = self.radius_derivatives(t);
        radial_d1(r, r1, t)
    }

    fn d2(&self, t: T) -> [T; 2] {
        let (r, r1, r2) = self.radius_derivatives(t);
        radial_d2(r, r1, r2, t)
    }
}

fn radial_d1<T: Real>(r: T, r1: T, t: T) -> [T; 2] {
    let (s, c) = t.sin_cos();
    [r1 * c - r * s, r1 * s + r * c]
}

fn radial_d2<T: Real>(r: T, r1: T, r2: T, t: T) -> [T; 2] {
    let (s, c) = t.sin_cos();
    let two = T::lit(2.0);
    [r2 * c - two * r1 * s - r * c, r2 * s + two * r1 * c - r * s]
}

impl StarlikeCurve<f64> {
    pub fn to_file(&self) -> CurveFile {
        CurveFile { center: self.center, coeffs: self.coeffs.clone(), order: self.order }
    }

    pub fn from_file(f: &CurveFile) -> Result<Self> {
        if f.coeffs.len() != 2 * f.order + 1 {
            return Err(Error::Format(format!(
                "curve file declares M = {} but has {} coefficients",
                f.order,
                f.coeffs.len()
            )));
        }
        Self::new(f.center, f.coeffs.clone())
    }
}

/// Displacement field `h(theta) = da + dr(theta) (cos theta, sin theta)` at
/// the given parameters, with its normal component `h . nu` on `curve`.
pub fn perturbation_field<T: Real>(
    curve: &StarlikeCurve<T>,
    shift: [T; 2],
    radial: &[T],
    thetas: &[T],
) -> Vec<([T; 2], T)> {
    let order = (radial.len() - 1) / 2;
    thetas
        .iter()
        .map(|&t| {
            let dr = (0..radial.len()).fold(T::zero(), |a, i| a + radial[i] * radial_basis(order, i, t));
            let (s, c) = t.sin_cos();
            let h = [shift[0] + dr * c, shift[1] + dr * s];
            let d = curve.d1(t);
            let speed = d[0].hypot(d[1]);
            let hn = (h[0] * d[1] - h[1] * d[0]) / speed;
            (h, hn)
        })
        .collect()
}

/// The benchmark shapes with fixed placement in the lower half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinCurve {
    Ellipse,
    Apple,
    RoundedTriangle,
    RoundedSquare,
}

impl BuiltinCurve {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ellipse" => Ok(Self::Ellipse),
            "apple" => Ok(Self::Apple),
            "rounded_triangle" => Ok(Self::RoundedTriangle),
            "rounded_square" => Ok(Self::RoundedSquare),
            other => Err(Error::InvalidParameter(format!("unknown curve '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ellipse => "ellipse",
            Self::Apple => "apple",
            Self::RoundedTriangle => "rounded_triangle",
            Self::RoundedSquare => "rounded_square",
        }
    }

    /// Radial function and its derivatives for the two starlike shapes.
    fn radial<T: Real>(&self, t: T) -> Option<([T; 2], T, T, T)> {
        let l = T::lit;
        match self {
            Self::Apple => {
                let (st, ct) = t.sin_cos();
                let (s2, c2) = (l(2.0) * t).sin_cos();
                let p = l(1.0) + l(0.7) * ct;
                let p1 = -l(0.7) * st;
                let p2 = -l(0.7) * ct;
                let (q, q1, q2) = (s2, l(2.0) * c2, -l(4.0) * s2);
                let f = q / p;
                let f1 = q1 / p - q * p1 / (p * p);
                let f2 = q2 / p - l(2.0) * q1 * p1 / (p * p) - q * p2 / (p * p)
                    + l(2.0) * q * p1 * p1 / (p * p * p);
                let r = l(0.5) + l(0.4) * ct + l(0.1) * f;
                let r1 = -l(0.4) * st + l(0.1) * f1;
                let r2 = -l(0.4) * ct + l(0.1) * f2;
                Some(([T::zero(), l(-4.0)], r, r1, r2))
            }
            Self::RoundedTriangle => {
                let (s3, c3) = (l(3.0) * t).sin_cos();
                Some(([l(-2.0), l(-2.0)], l(1.0) + l(0.15) * c3, -l(0.45) * s3, -l(1.35) * c3))
            }
            _ => None,
        }
    }
}

impl<T: Real> BoundaryCurve<T> for BuiltinCurve {
    fn point(&self, t: T) -> [T; 2] {
        let l = T::lit;
        if let Some((c, r, _, _)) = self.radial(t) {
            let (s, co) = t.sin_cos();
            return [c[0] + r * co, c[1] + r * s];
        }
        let (s, c) = t.sin_cos();
        match self {
            Self::Ellipse => [c - l(5.0), l(1.35) * s - l(6.0)],
            _ => [
                l(0.6) * c * c * c + l(0.6) * c + l(1.5),
                l(0.6) * s * s * s + l(0.6) * s - l(4.2),
            ],
        }
    }

    fn d1(&self, t: T) -> [T; 2] {
        let l = T::lit;
        if let Some((_, r, r1, _)) = self.radial(t) {
            return radial_d1(r, r1, t);
        }
        let (s, c) = t.sin_cos();
        match self {
            Self::Ellipse => [-s, l(1.35) * c],
            _ => [-l(1.8) * c * c * s - l(0.6) * s, l(1.8) * s * s * c + l(0.6) * c],
        }
    }

    fn d2(&self, t: T) -> [T; 2] {
        let l = T::lit;
        if let Some((_, r, r1, r2)) = self.radial(t) {
            return radial_d2(r, r1, r2, t);
        }
        let (s, c) = t.sin_cos();
        match self {
            Self::Ellipse => [-c, -l(1.35) * s],
            _ => [
                -l(1.8) * (c * c * c - l(2.0) * c * s * s) - l(0.6) * c,
                l(1.8) * (l(2.0) * s * c * c - s * s * s) - l(0.6) * s,
            ],
        }
    }
}

/// Circle given by center and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk<T> {
    pub center: [T; 2],
    pub radius: T,
}

impl<T: Real> BoundaryCurve<T> for Disk<T> {
    fn point(&self, t: T) -> [T; 2] {
        let (s, c) = t.sin_cos();
        [self.center[0] + self.radius * c, self.center[1] + self.radius * s]
    }

    fn d1(&self, t: T) -> [T; 2] {
        let (s, c) = t.sin_cos();
        [-self.radius * s, self.radius * c]
    }

    fn d2(&self, t: T) -> [T; 2] {
        let (s, c) = t.sin_cos();
        [-self.radius * c, -self.radius * s]
    }
}

/// Any curve the forward solver accepts, with a serializable description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Builtin(BuiltinCurve),
    Disk { center: [f64; 2], radius: f64 },
    Starlike(CurveFile),
}

impl Shape {
    pub fn build(&self) -> Result<Box<dyn BoundaryCurve<f64>>> {
        Ok(match self {
            Shape::Builtin(b) => Box::new(*b),
            Shape::Disk { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Geometry(format!("disk radius {radius} must be positive")));
                }
                Box::new(Disk { center: *center, radius: *radius })
            }
            Shape::Starlike(f) => {
                let c = StarlikeCurve::from_file(f)?;
                c.validate()?;
                Box::new(c)
            }
        })
    }
}
