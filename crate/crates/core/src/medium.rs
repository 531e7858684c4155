//! Two-layer medium: wave numbers, critical angle, Snell/Fresnel algebra and
//! the obstacle-free background field.
//!
//! Directions are carried as polar angles. Incident directions point into the
//! lower half-plane and live in `[pi + theta_c, 2 pi - theta_c]`; observation
//! directions live in `[theta_c, pi - theta_c]`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance used when deciding whether an angle sits inside an aperture.
const APERTURE_SLACK: f64 = 1e-12;

/// Wave numbers of the two half-planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumParams<T> {
    pub k_plus: T,
    pub k_minus: T,
    pub n: T,
    pub theta_c: T,
}

/// On-disk form: only `k_plus` and the refractive index are stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    pub k_plus: f64,
    pub n: f64,
}

/// Whether an angle is an incident direction (pointing down) or an
/// observation direction (pointing up).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionKind {
    Incident,
    Observation,
}

/// Reflection and transmission coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fresnel<T> {
    pub reflection: T,
    pub transmission: T,
}

/// Background field value and its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample<T> {
    pub value: Complex<T>,
    pub grad: [Complex<T>; 2],
}

/// `arccos(k_minus / k_plus)` when the upper medium is faster, 0 otherwise.
pub fn critical_angle<T: Real>(k_plus: T, k_minus: T) -> Result<T> {
    if !(k_plus > T::zero()) || !(k_minus > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "wave numbers must be positive (k+ = {k_plus}, k- = {k_minus})"
        )));
    }
    if k_plus > k_minus {
        Ok((k_minus / k_plus).acos())
    } else {
        Ok(T::zero())
    }
}

impl<T: Real> MediumParams<T> {
    /// Builds the medium from the upper wave number and the refractive index,
    /// `k_minus^2 = n k_plus^2`.
    pub fn new(k_plus: T, n: T) -> Result<Self> {
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!("refractive index {n} must be positive")));
        }
        let k_minus = n.sqrt() * k_plus;
        let theta_c = critical_angle(k_plus, k_minus)?;
        Ok(Self { k_plus, k_minus, n, theta_c })
    }

    pub fn from_wavenumbers(k_plus: T, k_minus: T) -> Result<Self> {
        let theta_c = critical_angle(k_plus, k_minus)?;
        let r = k_minus / k_plus;
        Ok(Self { k_plus, k_minus, n: r * r, theta_c })
    }

    /// Same refractive index, different upper wave number.
    pub fn with_k_plus(&self, k_plus: T) -> Result<Self> {
        Self::new(k_plus, self.n)
    }

    pub fn is_matched(&self) -> bool {
        (self.k_plus - self.k_minus).abs() <= T::epsilon() * self.k_plus * T::lit(4.0)
    }

    /// Angular measure of either aperture, `pi - 2 theta_c`.
    pub fn aperture_length(&self) -> T {
        T::PI() - T::lit(2.0) * self.theta_c
    }

    pub fn aperture(&self, kind: DirectionKind) -> (T, T) {
        match kind {
            DirectionKind::Incident => (T::PI() + self.theta_c, T::lit(2.0) * T::PI() - self.theta_c),
            DirectionKind::Observation => (self.theta_c, T::PI() - self.theta_c),
        }
    }

    pub fn check_aperture(&self, theta: T, kind: DirectionKind) -> Result<()> {
        let (lo, hi) = self.aperture(kind);
        let slack = T::lit(APERTURE_SLACK);
        if theta < lo - slack || theta > hi + slack || !theta.is_finite() {
            return Err(Error::Aperture {
                theta: theta.to_f64().unwrap_or(f64::NAN),
                lo: lo.to_f64().unwrap_or(f64::NAN),
                hi: hi.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Equispaced grid over an aperture, `theta_c + (j-1) P / count` (plus `pi`
    /// for incident directions). The right endpoint is excluded.
    pub fn aperture_grid(&self, kind: DirectionKind, count: usize) -> Vec<T> {
        let (lo, _) = self.aperture(kind);
        let step = self.aperture_length() / T::from_usize(count).unwrap();
        (0..count).map(|j| lo + T::from_usize(j).unwrap() * step).collect()
    }

    /// Refracted angle `theta_t` with `k+ cos(theta) = k- cos(theta_t)`, taken
    /// in `[pi, 2 pi]` for incident and `[0, pi]` for observation directions.
    pub fn transmitted_direction(&self, theta: T, kind: DirectionKind) -> Result<T> {
        let ratio = self.k_plus / self.k_minus * theta.cos();
        let c = if ratio.abs() > T::one() {
            if ratio.abs() > T::one() + T::lit(1e-12) {
                return Err(Error::Evanescent {
                    theta: theta.to_f64().unwrap_or(f64::NAN),
                    ratio: ratio.abs().to_f64().unwrap_or(f64::NAN),
                });
            }
            ratio.signum()
        } else {
            ratio
        };
        Ok(match kind {
            DirectionKind::Incident => T::lit(2.0) * T::PI() - c.acos(),
            DirectionKind::Observation => c.acos(),
        })
    }

    /// Inverse of [`transmitted_direction`](Self::transmitted_direction) for
    /// incident directions: the upper-medium angle whose refraction is `theta_t`.
    pub fn incident_from_transmitted(&self, theta_t: T) -> Result<T> {
        let ratio = self.k_minus / self.k_plus * theta_t.cos();
        if ratio.abs() > T::one() + T::lit(1e-12) {
            return Err(Error::Evanescent {
                theta: theta_t.to_f64().unwrap_or(f64::NAN),
                ratio: ratio.abs().to_f64().unwrap_or(f64::NAN),
            });
        }
        let c = ratio.max(-T::one()).min(T::one());
        Ok(T::lit(2.0) * T::PI() - c.acos())
    }

    /// `k- * (cos theta_t, sin theta_t)`, evaluated without going through the
    /// angle so that matched media reproduce `k+ (cos theta, sin theta)` exactly.
    pub fn transmitted_wavevector(&self, theta: T, kind: DirectionKind) -> Result<[T; 2]> {
        let (s, c) = theta.sin_cos();
        let kp = self.k_plus;
        let km = self.k_minus;
        let disc = (km - kp) * (km + kp) + kp * kp * s * s;
        if disc < -T::lit(1e-12) * km * km {
            return Err(Error::Evanescent {
                theta: theta.to_f64().unwrap_or(f64::NAN),
                ratio: (kp / km * c).abs().to_f64().unwrap_or(f64::NAN),
            });
        }
        let vert = disc.max(T::zero()).sqrt();
        Ok(match kind {
            DirectionKind::Incident => [kp * c, -vert],
            DirectionKind::Observation => [kp * c, vert],
        })
    }

    /// Unit vector of the refracted direction.
    pub fn transmitted_unit(&self, theta: T, kind: DirectionKind) -> Result<[T; 2]> {
        let w = self.transmitted_wavevector(theta, kind)?;
        Ok([w[0] / self.k_minus, w[1] / self.k_minus])
    }

    /// Fresnel coefficients for an incident angle (or, with `Observation`, the
    /// transmission factor of the far-field kernel).
    pub fn fresnel_kind(&self, theta: T, kind: DirectionKind) -> Result<Fresnel<T>> {
        self.check_aperture(theta, kind)?;
        let a = self.k_plus * theta.sin();
        let b = self.transmitted_wavevector(theta, kind)?[1];
        let den = a + b;
        if den == T::zero() {
            // only a grazing wave in matched media gets here; the limit is exact
            if self.is_matched() {
                return Ok(Fresnel { reflection: T::zero(), transmission: T::one() });
            }
            return Err(Error::InvalidParameter("grazing direction".into()));
        }
        Ok(Fresnel { reflection: (a - b) / den, transmission: T::lit(2.0) * a / den })
    }

    pub fn fresnel(&self, theta_d: T) -> Result<Fresnel<T>> {
        self.fresnel_kind(theta_d, DirectionKind::Incident)
    }

    /// Background field `u0` (incident + reflected above the interface,
    /// transmitted below) and its analytic gradient.
    pub fn background_field(&self, x: [T; 2], theta_d: T) -> Result<FieldSample<T>> {
        let coeffs = self.fresnel(theta_d)?;
        let i = Complex::new(T::zero(), T::one());
        if x[1] >= T::zero() {
            let (c, s) = (theta_d.cos(), theta_d.sin());
            let inc = (i * self.k_plus * (x[0] * c + x[1] * s)).exp();
            let refl = (i * self.k_plus * (x[0] * c - x[1] * s)).exp() * coeffs.reflection;
            let ik = i * self.k_plus;
            Ok(FieldSample {
                value: inc + refl,
                grad: [ik * c * (inc + refl), ik * s * (inc - refl)],
            })
        } else {
            let w = self.transmitted_wavevector(theta_d, DirectionKind::Incident)?;
            let v = (i * (x[0] * w[0] + x[1] * w[1])).exp() * coeffs.transmission;
            Ok(FieldSample { value: v, grad: [i * w[0] * v, i * w[1] * v] })
        }
    }
}

impl MediumParams<f64> {
    pub fn spec(&self) -> MediumSpec {
        MediumSpec { k_plus: self.k_plus, n: self.n }
    }
}

impl MediumSpec {
    pub fn build(&self) -> Result<MediumParams<f64>> {
        MediumParams::new(self.k_plus, self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn medium(kp: f64, km: f64) -> MediumParams<f64> {
        MediumParams::from_wavenumbers(kp, km).unwrap()
    }

    #[test]
    fn critical_angle_cases() {
        assert_eq!(critical_angle(1.0, 1.0).unwrap(), 0.0);
        let t = critical_angle(15.0 * PI, 15.0 * PI / 1.5).unwrap();
        assert!((t - (2.0f64 / 3.0).acos()).abs() < 1e-15);
        assert!((t - 0.841069).abs() < 1e-6);
        assert_eq!(critical_angle(10.0 * PI, 14.5 * PI).unwrap(), 0.0);
        assert!(critical_angle(0.0, 1.0).is_err());
        assert!(critical_angle(1.0, -2.0).is_err());
    }

    #[test]
    fn refractive_index_relation() {
        let m = MediumParams::<f64>::new(3.7, 0.25).unwrap();
        assert!((m.k_minus * m.k_minus - m.n * m.k_plus * m.k_plus).abs() < 1e-12 * m.k_minus.powi(2));
        assert!((m.theta_c - PI / 3.0).abs() < 1e-14);
        assert!(MediumParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn transmitted_direction_examples() {
        let m = medium(1.0, 2.0);
        assert!((m.transmitted_direction(1.5 * PI, DirectionKind::Incident).unwrap() - 1.5 * PI).abs() < 1e-15);

        // root of cos(theta) = 2 cos(theta_t) in [pi, 2pi], found by bisection
        let theta = 1.75 * PI;
        let target = theta.cos();
        let (mut lo, mut hi) = (PI, 2.0 * PI);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            // 2 cos is increasing on [pi, 2pi]
            if 2.0 * mid.cos() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let got = m.transmitted_direction(theta, DirectionKind::Incident).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 5.073756).abs() < 1e-6);

        let mm = medium(2.0, 2.0);
        assert!((mm.transmitted_direction(PI / 2.0, DirectionKind::Observation).unwrap() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn evanescent_direction_is_rejected() {
        let m = medium(2.0, 1.0);
        assert!(matches!(
            m.transmitted_direction(PI + 0.1, DirectionKind::Incident),
            Err(Error::Evanescent { .. })
        ));
    }

    #[test]
    fn fresnel_examples() {
        let f = medium(1.0, 1.0).fresnel(1.5 * PI).unwrap();
        assert!(f.reflection.abs() < 1e-15 && (f.transmission - 1.0).abs() < 1e-15);

        let f = medium(2.0, 1.0).fresnel(1.5 * PI).unwrap();
        assert!((f.reflection - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.transmission - 4.0 / 3.0).abs() < 1e-15);

        let m = medium(2.0, 1.0);
        let f = m.fresnel(PI + m.theta_c).unwrap();
        assert!((f.reflection - 1.0).abs() < 1e-7, "{f:?}");
        assert!((f.transmission - 2.0).abs() < 1e-7);

        assert!(m.fresnel(PI + 0.5 * m.theta_c).is_err());
    }

    #[test]
    fn background_field_examples() {
        let v = medium(1.0, 1.0).background_field([0.0, 0.0], 1.5 * PI).unwrap().value;
        assert!((v - Complex::new(1.0, 0.0)).norm() < 1e-15);

        let v = medium(2.0, 1.0).background_field([0.0, -1.0], 1.5 * PI).unwrap().value;
        let expect = Complex::new(0.0, 1.0).exp() * (4.0 / 3.0);
        assert!((v - expect).norm() < 1e-14);
    }

    #[test]
    fn matched_media_degenerates() {
        let m = medium(3.0, 3.0);
        assert_eq!(m.theta_c, 0.0);
        for j in 0..50 {
            let th = PI + PI * (j as f64 + 0.5) / 50.0;
            let f = m.fresnel(th).unwrap();
            assert!(f.reflection.abs() < 1e-14);
            assert!((f.transmission - 1.0).abs() < 1e-14);
            assert!((m.transmitted_direction(th, DirectionKind::Incident).unwrap() - th).abs() < 1e-7);
        }
    }

    #[test]
    fn aperture_grid_layout() {
        let m = MediumParams::new(2.0, 0.25).unwrap();
        let g = m.aperture_grid(DirectionKind::Observation, 4);
        let p = PI - 2.0 * m.theta_c;
        for (j, th) in g.iter().enumerate() {
            assert!((th - (m.theta_c + j as f64 * p / 4.0)).abs() < 1e-15);
        }
        let g = m.aperture_grid(DirectionKind::Incident, 4);
        assert!((g[0] - (PI + m.theta_c)).abs() < 1e-15);
    }

    #[test]
    fn generic_over_f32() {
        let m = MediumParams::<f32>::new(2.0, 0.25).unwrap();
        let th = 1.4f32 * std::f32::consts::PI;
        let f = m.fresnel(th).unwrap();
        assert!((1.0 + f.reflection - f.transmission).abs() < 1e-5);
    }

    fn incident_angle(m: &MediumParams<f64>, s: f64) -> f64 {
        let (lo, hi) = m.aperture(DirectionKind::Incident);
        lo + s * (hi - lo)
    }

    proptest! {
        #[test]
        fn snell_and_fresnel_identities(kp in 0.2f64..40.0, ratio in 0.2f64..3.0, s in 0.0f64..1.0) {
            let m = medium(kp, kp * ratio);
            let th = incident_angle(&m, s);
            let tt = m.transmitted_direction(th, DirectionKind::Incident).unwrap();
            prop_assert!((m.k_plus * th.cos() - m.k_minus * tt.cos()).abs() < 1e-13 * kp);
            prop_assert!((PI..=2.0 * PI).contains(&tt));
            let f = m.fresnel(th).unwrap();
            prop_assert!((1.0 + f.reflection - f.transmission).abs() < 1e-13);

            let (lo, hi) = m.aperture(DirectionKind::Observation);
            let tx = lo + s * (hi - lo);
            let txt = m.transmitted_direction(tx, DirectionKind::Observation).unwrap();
            prop_assert!((m.k_plus * tx.cos() - m.k_minus * txt.cos()).abs() < 1e-13 * kp);
            prop_assert!((0.0..=PI).contains(&txt));
        }

        #[test]
        fn background_field_is_continuous_across_interface(
            kp in 0.5f64..20.0, ratio in 0.3f64..2.5, s in 0.001f64..0.999, x1 in -20.0f64..20.0
        ) {
            let m = medium(kp, kp * ratio);
            let th = incident_angle(&m, s);
            let up = m.background_field([x1, 0.0], th).unwrap();
            let down = m.background_field([x1, -1e-300], th).unwrap();
            let scale = up.value.norm().max(1.0);
            prop_assert!((up.value - down.value).norm() < 1e-12 * scale);
            let gscale = up.grad[1].norm().max(kp);
            prop_assert!((up.grad[1] - down.grad[1]).norm() < 1e-10 * gscale);

            // central differences of each branch against the analytic normal derivative
            let h = 1e-5 / kp;
            let fd_up = (m.background_field([x1, 2.0 * h], th).unwrap().value
                - m.background_field([x1, 0.0], th).unwrap().value) / (2.0 * h);
            let up_mid = m.background_field([x1, h], th).unwrap().grad[1];
            prop_assert!((fd_up - up_mid).norm() < 1e-5 * gscale);
            let fd_down = (m.background_field([x1, -h / 2.0], th).unwrap().value
                - m.background_field([x1, -2.5 * h], th).unwrap().value) / (2.0 * h);
            let down_mid = m.background_field([x1, -1.5 * h], th).unwrap().grad[1];
            prop_assert!((fd_down - down_mid).norm() < 1e-5 * gscale);
        }
    }
}
