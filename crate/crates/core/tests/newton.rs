use std::f64::consts::PI;

use layerscat::geometry::{fit_radial, BoundaryCurve, parameter_grid, Shape, StarlikeCurve};
use layerscat::imaging::{Peak, PeakSet};
use layerscat::newton_lm::{
    assemble_jacobian, initial_curves, lm_step, parameter_fields, relative_error, run_recursive, ForwardState,
    NewtonConfig, SpectralResidual,
};
use layerscat::presets::Regime;
use layerscat::special::{bessel_jn, bessel_yn};
use layerscat::synth::{clean_block, synthesize, FrequencyBlock, NoiseSpec, SynthSpec};
use layerscat::Medium;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn apple(order: usize) -> StarlikeCurve<f64> {
    let samples: Vec<f64> = parameter_grid::<f64>(1024)
        .into_iter()
        .map(|t| 0.5 + 0.4 * t.cos() + 0.1 * (2.0 * t).sin() / (1.0 + 0.7 * t.cos()))
        .collect();
    StarlikeCurve::new([0.0, -4.0], fit_radial(&samples, order).unwrap()).unwrap()
}

fn case_a_block(k: f64) -> FrequencyBlock {
    FrequencyBlock::from_angle_pairs(k, &Regime::CaseA.pairs())
}

#[test]
fn scalar_beta_matches_closed_form() {
    for (j, r, rho) in [(2.0f64, 0.7f64, 0.935f64), (0.3, -1.2, 0.5), (5.0, 3.0, 0.99)] {
        let sr = SpectralResidual { sigma: vec![j.abs()], coeffs: vec![r * j.signum()], perp_sq: 0.0, total_sq: r * r };
        let choice = sr.select_beta(rho * rho);
        let exact = j * j * rho / (1.0 - rho);
        assert!(!choice.fallback);
        assert!((choice.beta - exact).abs() <= 1e-10 * exact, "{} vs {exact}", choice.beta);
    }
    // the same selection in single precision
    let sr = SpectralResidual { sigma: vec![2.0f32], coeffs: vec![0.7], perp_sq: 0.0, total_sq: 0.49 };
    let b = sr.select_beta(0.8f32 * 0.8).beta;
    assert!((b - 16.0).abs() < 1e-4 * 16.0, "{b}");
}

#[test]
fn lm_step_on_scalar_problem_hits_the_ratio() {
    let jac = DMatrix::from_element(1, 1, 2.0);
    let r = DVector::from_element(1, 0.7);
    let step = lm_step(&jac, &r, 1.0, &[1.0], 0.935).unwrap();
    let beta = 4.0 * 0.935 / 0.065;
    assert!((step.beta - beta).abs() < 1e-10 * beta);
    assert!((step.delta[0] - 2.0 * 0.7 / (4.0 + beta)).abs() < 1e-12);
}

#[test]
fn unreachable_ratio_falls_back() {
    // residual orthogonal to the range: the ratio is 1 for every beta
    let sr = SpectralResidual { sigma: vec![1.0], coeffs: vec![0.0], perp_sq: 1.0, total_sq: 1.0 };
    assert!(sr.select_beta(0.5).fallback);
}

proptest! {
    #[test]
    fn ratio_is_increasing_and_tends_to_one(
        sigma in prop::collection::vec(0.01f64..10.0, 1..6),
        seed_coeffs in prop::collection::vec(-1.0f64..1.0, 6),
        perp in 0.0f64..0.5,
    ) {
        let coeffs: Vec<f64> = seed_coeffs[..sigma.len()].to_vec();
        let total = coeffs.iter().map(|c| c * c).sum::<f64>() + perp;
        prop_assume!(total > 1e-6);
        let sr = SpectralResidual { sigma: sigma.clone(), coeffs, perp_sq: perp, total_sq: total };
        let mut last = -1.0;
        for e in -8..8 {
            let r = sr.ratio(10f64.powi(e));
            prop_assert!(r >= last - 1e-15);
            last = r;
        }
        prop_assert!((sr.ratio(1e30) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_norm_decreases_with_the_penalty(rho_lo in 0.3f64..0.6, gap in 0.05f64..0.3) {
        let jac = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 2.0]);
        let r = DVector::from_row_slice(&[0.4, -0.3]);
        let a = lm_step(&jac, &r, 0.5, &[1.0, 3.0], rho_lo).unwrap();
        let b = lm_step(&jac, &r, 0.5, &[1.0, 3.0], (rho_lo + gap).min(0.99)).unwrap();
        prop_assume!(!a.fallback && !b.fallback);
        prop_assert!(b.beta > a.beta);
        prop_assert!(b.delta.norm() < a.delta.norm());
    }
}

fn disk_intensity(k: f64, radius: f64, center: [f64; 2], x: f64, d: [f64; 2]) -> f64 {
    let far = |theta_d: f64| {
        let ka = k * radius;
        let mut s = Complex64::new(0.0, 0.0);
        for m in -50i32..=50 {
            let ma = m.abs();
            let sign = if m < 0 && ma % 2 == 1 { -1.0 } else { 1.0 };
            let h = Complex64::new(bessel_jn(ma, ka), bessel_yn(ma, ka)) * sign;
            s += sign * bessel_jn(ma, ka) / h * Complex64::from_polar(1.0, m as f64 * (x - theta_d));
        }
        let shift = k * ((theta_d.cos() - x.cos()) * center[0] + (theta_d.sin() - x.sin()) * center[1]);
        -(2.0 / (PI * k)).sqrt() * Complex64::from_polar(1.0, -PI / 4.0) * s * Complex64::from_polar(1.0, shift)
    };
    (far(d[0]) + far(d[1])).norm_sqr()
}

#[test]
fn intensities_match_disk_series_in_matched_media() {
    let k = 2.0;
    let m = Medium::from_wavenumbers(k, k).unwrap();
    let circle = StarlikeCurve::circle([0.4, -2.5], 0.6, 3);
    let block = FrequencyBlock::from_angle_pairs(k, &[[1.2 * PI, 1.7 * PI], [1.5 * PI, 1.5 * PI]]);
    let state = ForwardState::new(&[&circle], &m, 64, &block, 12).unwrap();
    let got = state.intensities();
    for (q, row) in got.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let expect = disk_intensity(k, 0.6, [0.4, -2.5], state.obs[j], block.angle_pair(q));
            assert!((v - expect).abs() < 1e-8 * expect.max(1e-3), "{v} vs {expect}");
        }
    }
    // equal directions give four times the single-wave intensity
    let single = FrequencyBlock::from_angle_pairs(k, &[[1.5 * PI, 1.5 * PI]]);
    let s = ForwardState::new(&[&circle], &m, 64, &single, 12).unwrap();
    let u = &s.pair_far[0];
    for (&v, uj) in s.intensities()[0].iter().zip(u) {
        assert!((v - uj.norm_sqr()).abs() < 1e-14 * uj.norm_sqr());
        let half = uj / 2.0;
        assert!((v - 4.0 * half.norm_sqr()).abs() < 1e-12 * uj.norm_sqr());
    }
}

#[test]
fn derivative_is_linear_and_vanishes_for_zero_fields() {
    let m = Medium::new(1.5, 0.25).unwrap();
    let curve = apple(8);
    let state = ForwardState::new(&[&curve], &m, 64, &case_a_block(1.5), 16).unwrap();
    let fields = parameter_fields(std::slice::from_ref(&curve), 64);
    let zero = DMatrix::zeros(64, 1);
    assert!(state.derivative(0, &zero).unwrap().iter().all(|v| *v == 0.0));
    let h1 = fields.column(3).into_owned();
    let h2 = fields.column(7).into_owned() * 0.3;
    let sum = &h1 + &h2;
    let lhs = state.derivative(1, &DMatrix::from_column_slice(64, 1, sum.as_slice())).unwrap();
    let a = state.derivative(1, &DMatrix::from_column_slice(64, 1, h1.as_slice())).unwrap();
    let b = state.derivative(1, &DMatrix::from_column_slice(64, 1, h2.as_slice())).unwrap();
    let scale = lhs.amax();
    assert!((lhs - a - b).amax() <= 1e-12 * scale);
}

#[test]
fn derivative_matches_finite_differences_on_the_apple() {
    let m = Medium::new(1.5, 0.25).unwrap();
    let curve = apple(12);
    let n = 128;
    let block = case_a_block(1.5);
    let state = ForwardState::new(&[&curve], &m, n, &block, 32).unwrap();
    let jac = assemble_jacobian(&state, std::slice::from_ref(&curve), n).unwrap();
    let dir: Vec<f64> = (0..jac.ncols()).map(|i| ((i as f64 * 1.7).sin() * 0.5) / (1.0 + i as f64)).collect();
    let dir_v = DVector::from_column_slice(&dir);
    let lin = &jac * &dir_v;
    let base = state.intensities().concat();
    let mut errs = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let p: Vec<f64> = curve.to_params().iter().zip(&dir).map(|(a, d)| a + eps * d).collect();
        let moved = StarlikeCurve::from_params(&p).unwrap();
        let s = ForwardState::new(&[&moved], &m, n, &block, 32).unwrap();
        let fd: Vec<f64> = s.intensities().concat().iter().zip(&base).map(|(a, b)| (a - b) / eps).collect();
        let diff = fd.iter().zip(lin.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        errs.push(diff / lin.norm());
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log10()).collect();
    assert!(orders.iter().all(|&o| o >= 0.9), "errors {errs:?}, orders {orders:?}");
}

#[test]
fn shift_column_is_the_translation_derivative() {
    let m = Medium::from_wavenumbers(2.0, 2.0).unwrap();
    let circle = StarlikeCurve::circle([0.0, -3.0], 0.5, 4);
    let block = FrequencyBlock::from_angle_pairs(2.0, &[[1.2 * PI, 1.6 * PI]]);
    let state = ForwardState::new(&[&circle], &m, 64, &block, 10).unwrap();
    let jac = assemble_jacobian(&state, std::slice::from_ref(&circle), 64).unwrap();
    // h = (1, 0): h . nu = cos(theta) on the circle
    let hn = DMatrix::from_fn(64, 1, |j, _| (2.0 * PI * j as f64 / 64.0).cos());
    let direct = state.derivative(0, &hn).unwrap();
    assert!((jac.column(0) - direct.column(0)).amax() <= 1e-12 * direct.amax());
}

#[test]
fn jacobian_is_rotation_covariant_for_a_circle() {
    // single-wave intensities rotate with the obstacle, so the sin(l t) column
    // on directions rotated by pi/(2l) equals the cos(l t) column; l = 1 is a
    // translation and leaves single-wave intensities unchanged
    let k = 2.0;
    let m = Medium::from_wavenumbers(k, k).unwrap();
    let order = 4;
    let circle = StarlikeCurve::circle([0.0, -3.0], 0.5, order);
    let n = 64;
    for l in 2..=order {
        let alpha = PI / (2.0 * l as f64);
        let base_inc = [1.05 * PI, 1.2 * PI];
        let base_obs: Vec<f64> = (0..8).map(|j| 0.05 + 0.05 * j as f64).collect();
        let run = |shift: f64| {
            let pairs: Vec<[f64; 2]> = base_inc.iter().map(|&d| [d + shift, d + shift]).collect();
            let block = FrequencyBlock::from_angle_pairs(k, &pairs);
            let obs: Vec<f64> = base_obs.iter().map(|t| t + shift).collect();
            let system = layerscat::bie::BieSystem::assemble(&[&circle], &m, n).unwrap();
            let far = system.far_field_operator(&obs).unwrap();
            let psi = system.total_normal_derivative(&block.incident).unwrap();
            let dens = system.densities(&block.incident).unwrap();
            let u = &far * &dens;
            let hn = parameter_fields(std::slice::from_ref(&circle), n);
            let mut cols = Vec::new();
            for c in [2 + l, 2 + order + l] {
                let mut col = Vec::new();
                for q in 0..block.incident.len() {
                    let rhs = DMatrix::from_fn(n, 1, |r, _| -2.0 * psi[(r, q)] * hn[(r, c)]);
                    let du = &far * system.solve_many(&rhs).unwrap();
                    for j in 0..obs.len() {
                        let uj = 2.0 * u[(j, q)];
                        col.push(2.0 * (uj.conj() * du[(j, 0)]).re);
                    }
                }
                cols.push(DVector::from_vec(col));
            }
            cols
        };
        let base = run(0.0);
        let rotated = run(alpha);
        let rel = (&rotated[1] - &base[0]).norm() / base[0].norm();
        assert!(rel < 1e-6, "l = {l}: {rel:e}");
        assert!((rotated[1].norm() - base[0].norm()).abs() < 1e-6 * base[0].norm());
    }
}

#[test]
fn apple_jacobian_has_three_significant_singular_values() {
    let m = Medium::new(1.5, 0.25).unwrap();
    let curve = apple(25);
    let state = ForwardState::new(&[&curve], &m, 128, &case_a_block(1.5), 64).unwrap();
    let jac = assemble_jacobian(&state, std::slice::from_ref(&curve), 128).unwrap();
    let mut sv: Vec<f64> = jac.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    assert!(sv[2] > 1e-8 * sv[0], "{:?}", &sv[..4]);
}

#[test]
fn relative_error_properties() {
    let m = Medium::new(1.5, 0.25).unwrap();
    let block = case_a_block(1.5);
    let obs = m.aperture_grid(layerscat::medium::DirectionKind::Observation, 32);
    let truth = layerscat::geometry::BuiltinCurve::Apple;
    let data = clean_block(&[&truth], &m, 256, &block, &obs).unwrap();
    let state = ForwardState::new(&[&apple(25)], &m, 128, &block, 32).unwrap();
    let model = state.intensities();
    let e = relative_error(&model, &data).unwrap();
    assert!((0.0..1e-6).contains(&e), "{e:e}");
    let scale = |v: &[Vec<f64>], c: f64| v.iter().map(|r| r.iter().map(|x| x * c).collect()).collect::<Vec<Vec<f64>>>();
    let shifted = StarlikeCurve::circle([0.1, -3.8], 0.5, 4);
    let other = ForwardState::new(&[&shifted], &m, 64, &block, 32).unwrap().intensities();
    let e1 = relative_error(&other, &data).unwrap();
    let e2 = relative_error(&scale(&other, 3.0), &scale(&data, 3.0)).unwrap();
    assert!(e1 > 0.0 && (e1 - e2).abs() < 1e-14 * e1);
}

fn circle_dataset(delta: f64) -> layerscat::synth::PhaselessDataset {
    let spec = SynthSpec {
        n: 0.25,
        n_f: 32,
        nodes: 128,
        truth: vec![Shape::Disk { center: [0.3, -2.5], radius: 0.5 }],
        blocks: vec![case_a_block(3.0)],
        noise: NoiseSpec { delta, seed: 11 },
    };
    synthesize(&spec, None).unwrap()
}

#[test]
fn noiseless_circle_is_recovered_with_monotone_error() {
    let data = circle_dataset(0.0);
    // a smaller residual ratio than the default keeps the run short
    let config = NewtonConfig { order: 4, nodes: 64, rho: 0.6, max_iters_per_freq: 60, ..NewtonConfig::default() };
    let peaks = PeakSet { config_hash: None, threshold: 0.5, radius: 1.0, peaks: vec![Peak { location: [0.15, -2.35], value: 1.0 }] };
    let init = initial_curves(&peaks, &config).unwrap();
    assert_eq!(init[0].center, peaks.peaks[0].location);
    assert_eq!(init[0].coeffs[0], config.r0);
    let result = run_recursive(&data, init, &config, |_| Ok(())).unwrap();
    let errs: Vec<f64> = result.records.iter().map(|r| r.error).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    let last = result.summaries.last().unwrap();
    assert!(last.converged && last.error < config.tau * config.delta_floor, "{errs:?}");
    for r in result.records.iter().filter(|r| r.ratio.is_some() && !r.fallback) {
        let rho2 = config.rho * config.rho;
        assert!((r.ratio.unwrap() - rho2).abs() <= 0.02 * rho2);
    }
    // center and first harmonics trade off, so compare boundary points
    let c = &result.curves[0];
    let worst = parameter_grid::<f64>(128)
        .into_iter()
        .map(|t| {
            let p = c.point(t);
            ((p[0] - 0.3).hypot(p[1] + 2.5) - 0.5).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 5e-3, "{worst:e}");
}

#[test]
fn inversion_is_deterministic() {
    let data = circle_dataset(0.02);
    let config = NewtonConfig { order: 4, nodes: 64, max_iters_per_freq: 3, ..NewtonConfig::default() };
    let init = vec![StarlikeCurve::circle([0.2, -2.4], 0.35, 4)];
    let a = run_recursive(&data, init.clone(), &config, |_| Ok(())).unwrap();
    let b = run_recursive(&data, init, &config, |_| Ok(())).unwrap();
    let lines = |r: &layerscat::newton_lm::InversionResult| {
        r.records.iter().map(|x| serde_json::to_string(x).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(lines(&a), lines(&b));
}
