//! Self-checks of the numerical kernels against analytic or independent
//! references, reported as JSON.

use std::f64::consts::PI;

use layerscat::bie::simulate;
use layerscat::geometry::{fit_radial, parameter_grid, Disk, StarlikeCurve};
use layerscat::layered_green::{eval_b0, farfield_kernel, green_total, B0_DEFAULT_ORDER};
use layerscat::medium::DirectionKind;
use layerscat::newton_lm::{assemble_jacobian, ForwardState, SpectralResidual};
use layerscat::presets::Regime;
use layerscat::special::{bessel_jn, bessel_yn};
use layerscat::synth::FrequencyBlock;
use layerscat::Medium;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Greens,
    Mie,
    B0,
    Gradient,
    Lm,
    All,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Self::Greens => "greens",
            Self::Mie => "mie",
            Self::B0 => "b0",
            Self::Gradient => "gradient",
            Self::Lm => "lm",
            Self::All => "all",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// The check passes when `value <= limit`.
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, passed: value <= limit }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn run(suite: Suite) -> CliResult<Report> {
    let checks = match suite {
        Suite::Greens => greens()?,
        Suite::Mie => mie()?,
        Suite::B0 => b0()?,
        Suite::Gradient => gradient()?,
        Suite::Lm => lm(),
        Suite::All => {
            let mut all = greens()?;
            all.extend(mie()?);
            all.extend(b0()?);
            all.extend(gradient()?);
            all.extend(lm());
            all
        }
    };
    Ok(Report { suite: suite.name(), passed: checks.iter().all(|c| c.passed), checks })
}

/// Deterministic pseudo-random points in `[-3, 3] x [-4, -0.5]`.
fn sample_points(count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|i| {
            let a = (i as f64 * 0.618_033_988_749_895).fract();
            let b = (i as f64 * 0.754_877_666_246_693).fract();
            [-3.0 + 6.0 * a, -4.0 + 3.5 * b]
        })
        .collect()
}

fn greens() -> CliResult<Vec<Check>> {
    let media = [Medium::from_wavenumbers(2.0, 1.0)?, Medium::from_wavenumbers(1.0, 1.45)?];
    let pts = sample_points(24);
    let (mut recip, mut jump_g, mut jump_dg, mut far) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for m in &media {
        for w in pts.windows(2) {
            let a = green_total(w[0], w[1], m)?.value;
            let b = green_total(w[1], w[0], m)?.value;
            recip = recip.max((a - b).norm() / b.norm());
        }
        // one-sided limits at the interface from offsets h, 2h, 3h
        let h = 1e-3;
        for y in pts.iter().take(8) {
            let x1 = -y[0] * 0.7;
            let side = |sign: f64| -> CliResult<(Complex64, Complex64)> {
                let e: Vec<_> = (1..=3)
                    .map(|j| green_total([x1, sign * j as f64 * h], *y, m))
                    .collect::<layerscat::Result<_>>()?;
                let lim = |f: &dyn Fn(usize) -> Complex64| 3.0 * f(0) - 3.0 * f(1) + f(2);
                Ok((lim(&|j| e[j].value), lim(&|j| e[j].grad_x[1])))
            };
            let (gu, du) = side(1.0)?;
            let (gd, dd) = side(-1.0)?;
            jump_g = jump_g.max((gu - gd).norm() / gu.norm());
            jump_dg = jump_dg.max((du - dd).norm() / du.norm());
        }
        let (lo, hi) = m.aperture(DirectionKind::Observation);
        let r = 1e4 / m.k_plus;
        for s in [0.15, 0.5, 0.8] {
            let th = lo + s * (hi - lo);
            let y = [0.3, -1.7];
            let g = green_total([r * th.cos(), r * th.sin()], y, m)?.value;
            let scaled = g * r.sqrt() * Complex64::from_polar(1.0, -m.k_plus * r);
            let kern = farfield_kernel(th, y, m)?.value;
            far = far.max((scaled - kern).norm() / kern.norm());
        }
    }
    Ok(vec![
        Check::at_most("greens.reciprocity", recip, 1e-10),
        Check::at_most("greens.interface_jump_value", jump_g, 1e-6),
        Check::at_most("greens.interface_jump_normal_derivative", jump_dg, 1e-6),
        Check::at_most("greens.far_field_asymptotics", far, 0.02),
    ])
}

/// Far field of a sound-soft disk in a homogeneous medium.
fn disk_far_field(k: f64, disk: &Disk<f64>, theta_x: f64, theta_d: f64) -> Complex64 {
    let ka = k * disk.radius;
    let terms = (ka + 40.0) as i32;
    let mut s = Complex64::new(0.0, 0.0);
    for m in -terms..=terms {
        let ma = m.abs();
        let j = bessel_jn(ma, ka);
        let h = Complex64::new(j, bessel_yn(ma, ka));
        // J_{-m}/H_{-m} = J_m/H_m
        s += j / h * Complex64::from_polar(1.0, m as f64 * (theta_x - theta_d));
    }
    let c = disk.center;
    let shift = k * ((theta_d.cos() - theta_x.cos()) * c[0] + (theta_d.sin() - theta_x.sin()) * c[1]);
    -(2.0 / (PI * k)).sqrt() * Complex64::from_polar(1.0, shift - PI / 4.0) * s
}

fn mie() -> CliResult<Vec<Check>> {
    let k = 2.0;
    let m = Medium::from_wavenumbers(k, k)?;
    let disk = Disk { center: [0.0, -3.0], radius: 1.0 };
    let interior = |kind| {
        let (lo, hi) = m.aperture(kind);
        move |n: usize| (0..n).map(|j| lo + (hi - lo) * (j as f64 + 0.5) / n as f64).collect::<Vec<f64>>()
    };
    let inc = interior(DirectionKind::Incident)(6);
    let obs = interior(DirectionKind::Observation)(16);
    let table = simulate(&[&disk], &m, 64, &inc, &obs)?;
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for (j, &x) in obs.iter().enumerate() {
        for (l, &d) in inc.iter().enumerate() {
            let exact = disk_far_field(k, &disk, x, d);
            err = err.max((table.values[(j, l)] - exact).norm());
            scale = scale.max(exact.norm());
        }
    }
    Ok(vec![Check::at_most("mie.matched_media_disk_far_field", err / scale, 1e-8)])
}

fn b0() -> CliResult<Vec<Check>> {
    let m = Medium::from_wavenumbers(2.0, 1.0)?;
    let mut worst = f64::NEG_INFINITY;
    for phi in [0.0, PI / 4.0, PI / 2.0, 1.5 * PI] {
        let n = 40;
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let t = 10f64.powf(1.0 + 2.0 * i as f64 / (n - 1) as f64);
            let v = eval_b0([t * phi.cos(), t * phi.sin()], &m, B0_DEFAULT_ORDER)?;
            pts.push((t.ln(), v.norm().ln()));
        }
        worst = worst.max(slope(&pts));
    }
    Ok(vec![Check::at_most("b0.log_log_slope", worst, -0.35)])
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn gradient() -> CliResult<Vec<Check>> {
    let samples: Vec<f64> = parameter_grid::<f64>(1024)
        .into_iter()
        .map(|t| 0.5 + 0.4 * t.cos() + 0.1 * (2.0 * t).sin() / (1.0 + 0.7 * t.cos()))
        .collect();
    let curve = StarlikeCurve::new([0.0, -4.0], fit_radial(&samples, 12)?)?;
    let m = Medium::new(1.5, Regime::CaseA.refractive_index())?;
    let block = FrequencyBlock::from_angle_pairs(1.5, &Regime::CaseA.pairs());
    let (nodes, n_f) = (128, 32);
    let state = ForwardState::new(&[&curve], &m, nodes, &block, n_f)?;
    let jac = assemble_jacobian(&state, std::slice::from_ref(&curve), nodes)?;
    let dir: Vec<f64> = (0..jac.ncols()).map(|i| (i as f64 * 1.7).sin() * 0.5 / (1.0 + i as f64)).collect();
    let lin = &jac * DVector::from_column_slice(&dir);
    let base = state.intensities().concat();
    let mut errs = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let p: Vec<f64> = curve.to_params().iter().zip(&dir).map(|(a, d)| a + eps * d).collect();
        let moved = StarlikeCurve::from_params(&p)?;
        let shifted = ForwardState::new(&[&moved], &m, nodes, &block, n_f)?.intensities().concat();
        let diff: f64 = shifted
            .iter()
            .zip(&base)
            .zip(lin.iter())
            .map(|((a, b), l)| ((a - b) / eps - l).powi(2))
            .sum::<f64>()
            .sqrt();
        errs.push(diff / lin.norm());
    }
    let order = errs.windows(2).map(|w| (w[0] / w[1]).log10()).fold(f64::INFINITY, f64::min);
    // reported as a deficit so that smaller is better
    Ok(vec![Check::at_most("gradient.order_deficit", 1.0 - order, 0.1)])
}

fn lm() -> Vec<Check> {
    let mut worst = 0.0f64;
    for (j, r, rho) in [(2.0f64, 0.7f64, 0.935f64), (0.3, -1.2, 0.5), (5.0, 3.0, 0.99)] {
        let sr = SpectralResidual { sigma: vec![j.abs()], coeffs: vec![r * j.signum()], perp_sq: 0.0, total_sq: r * r };
        let beta = sr.select_beta(rho * rho).beta;
        let exact = j * j * rho / (1.0 - rho);
        worst = worst.max((beta - exact).abs() / exact);
    }
    vec![Check::at_most("lm.scalar_beta", worst, 1e-10)]
}
