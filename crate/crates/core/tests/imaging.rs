use layerscat::bie::simulate;
use layerscat::geometry::Disk;
use layerscat::imaging::{find_peaks, imaging_grid, indicator_from_far_fields, ImagingData, ImagingRegion};
use layerscat::medium::DirectionKind;
use layerscat::Medium;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair_tensor(u: &DMatrix<Complex64>) -> Vec<Vec<f64>> {
    let n_d = u.ncols();
    let mut t = Vec::with_capacity(n_d * n_d);
    for l in 0..n_d {
        for i in 0..n_d {
            t.push((0..u.nrows()).map(|j| (u[(j, l)] + u[(j, i)]).norm_sqr()).collect());
        }
    }
    t
}

fn random_field(rng: &mut ChaCha8Rng, n_f: usize, n_d: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n_f, n_d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn media() -> [Medium; 3] {
    [
        Medium::from_wavenumbers(10.0, 5.0).unwrap(),
        Medium::from_wavenumbers(4.0, 5.8).unwrap(),
        Medium::from_wavenumbers(3.0, 3.0).unwrap(),
    ]
}

#[test]
fn phaseless_indicator_equals_complex_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in media() {
        let inc = m.aperture_grid(DirectionKind::Incident, 32);
        let u = random_field(&mut rng, 32, 32);
        let data = ImagingData::from_tensor(&m, &inc, &pair_tensor(&u)).unwrap();
        for _ in 0..20 {
            let z = [rng.gen_range(-4.0..4.0), rng.gen_range(-6.0..0.0)];
            let a = data.value(z).unwrap();
            let b = indicator_from_far_fields(&m, &inc, &u, z).unwrap();
            assert!((a - b).abs() <= 1e-10 * b.abs(), "{a} vs {b}");
        }
    }
}

#[test]
fn indicator_is_real_and_even() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in media() {
        let inc = m.aperture_grid(DirectionKind::Incident, 24);
        // arbitrary nonnegative data, not of pair form and not symmetric
        let tensor: Vec<Vec<f64>> = (0..24 * 24).map(|_| (0..16).map(|_| rng.gen_range(0.0..2.0)).collect()).collect();
        let data = ImagingData::from_tensor(&m, &inc, &tensor).unwrap();
        for _ in 0..20 {
            let z = [rng.gen_range(-4.0..4.0), rng.gen_range(-6.0..6.0)];
            let (v, scale) = data.value_complex(z);
            assert!(v.im.abs() <= 1e-10 * scale, "imaginary residue {:e}", v.im);
            let (w, _) = data.value_complex([-z[0], -z[1]]);
            assert!((v.re - w.re).abs() <= 1e-10 * scale, "{} vs {}", v.re, w.re);
        }
    }
}

#[test]
fn zero_data_gives_zero() {
    let m = Medium::from_wavenumbers(4.0, 2.0).unwrap();
    let inc = m.aperture_grid(DirectionKind::Incident, 8);
    let data = ImagingData::from_tensor(&m, &inc, &vec![vec![0.0; 5]; 64]).unwrap();
    assert_eq!(data.value([0.3, -1.0]).unwrap(), 0.0);
}

#[test]
fn matched_media_reduce_to_homogeneous_functional() {
    // with T = 1 and no refraction the weighted sums are plain plane-wave sums
    let k = 3.0;
    let m = Medium::from_wavenumbers(k, k).unwrap();
    let inc = m.aperture_grid(DirectionKind::Incident, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = random_field(&mut rng, 12, 16);
    let z = [0.7, -1.3];
    let w_d = std::f64::consts::PI / 16.0;
    let w_f = std::f64::consts::PI / 12.0;
    let mut expect = 0.0;
    for j in 0..12 {
        let mut v = Complex64::new(0.0, 0.0);
        let mut w = Complex64::new(0.0, 0.0);
        for (l, &t) in inc.iter().enumerate() {
            let phase = k * (z[0] * t.cos() + z[1] * t.sin());
            v += u[(j, l)] * Complex64::from_polar(w_d, -phase);
            w += u[(j, l)] * Complex64::from_polar(w_d, phase);
        }
        expect += w_f * (v.norm_sqr() + w.norm_sqr());
    }
    let got = ImagingData::from_tensor(&m, &inc, &pair_tensor(&u)).unwrap().value(z).unwrap();
    assert!((got - expect).abs() < 1e-12 * expect, "{got} vs {expect}");
}

#[test]
fn grid_matches_pointwise_values() {
    let m = Medium::from_wavenumbers(5.0, 7.0).unwrap();
    let inc = m.aperture_grid(DirectionKind::Incident, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data = ImagingData::from_tensor(&m, &inc, &pair_tensor(&random_field(&mut rng, 8, 10))).unwrap();
    let region = ImagingRegion { x: [-1.0, 1.0], y: [-2.0, -0.5], nx: 5, ny: 4 };
    let g = imaging_grid(&data, &region).unwrap();
    for iy in 0..4 {
        for ix in 0..5 {
            let v = data.value(region.node(ix, iy)).unwrap();
            assert!((g.get(ix, iy) - v).abs() <= 1e-12 * v.abs().max(1e-300));
        }
    }
}

#[test]
fn small_disk_is_located() {
    let m = Medium::from_wavenumbers(8.0, 11.6).unwrap();
    let disk = Disk { center: [-1.0, -2.0], radius: 0.1 };
    let inc = m.aperture_grid(DirectionKind::Incident, 32);
    let obs = m.aperture_grid(DirectionKind::Observation, 32);
    let u = simulate(&[&disk], &m, 32, &inc, &obs).unwrap().values;
    let data = ImagingData::from_tensor(&m, &inc, &pair_tensor(&u)).unwrap();
    let region = ImagingRegion { x: [-3.0, 3.0], y: [-4.0, 0.0], nx: 61, ny: 41 };
    let g = imaging_grid(&data, &region).unwrap();
    let peaks = find_peaks(&g, 0.5, 2.0 * std::f64::consts::PI / m.k_minus);
    let top = peaks.peaks[0].location;
    let half_wavelength = std::f64::consts::PI / m.k_minus;
    assert!((top[0] + 1.0).hypot(top[1] + 2.0) <= half_wavelength, "{top:?}");
}
