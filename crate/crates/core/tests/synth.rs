use layerscat::geometry::Shape;
use layerscat::synth::{
    add_noise_with,
    add_noise, block_normals, read_dataset, synthesize, write_dataset, FrequencyBlock, NoiseSpec,
    SynthSpec,
};
use layerscat::{Error, Medium};
use proptest::prelude::*;

fn small_spec(delta: f64) -> SynthSpec {
    let m = Medium::new(2.0, 0.25).unwrap();
    SynthSpec {
        n: 0.25,
        n_f: 6,
        nodes: 32,
        truth: vec![Shape::Disk { center: [0.2, -2.0], radius: 0.4 }],
        blocks: vec![
            FrequencyBlock::full_tensor(&m, 3),
            FrequencyBlock::from_angle_pairs(3.0, &[[4.3, 5.0], [4.5, 4.5]]),
        ],
        noise: NoiseSpec { delta, seed: 9 },
    }
}

#[test]
fn golden_noise_stream() {
    let v = add_noise(&[1.0; 4], 0.1, 42, 0).unwrap();
    let bits: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
    assert_eq!(bits, vec![0x3ff074c9505688ca, 0x3fea2b08d8cf2c7b, 0x3fedc0a5c3e67fc2, 0x3feef7c2eb194a18]);
}

#[test]
fn zero_noise_is_identity() {
    let v = vec![0.3, 1.5, 2.0];
    assert_eq!(add_noise(&v, 0.0, 5, 1).unwrap(), v);
}

#[test]
fn empty_vector_is_rejected() {
    assert!(matches!(add_noise(&[], 0.1, 1, 0), Err(Error::InvalidParameter(_))));
}

#[test]
fn different_seeds_are_uncorrelated() {
    let a = block_normals(1, 0, 10_000);
    let b = block_normals(2, 0, 10_000);
    let c = block_normals(1, 1, 10_000);
    let corr = |x: &[f64], y: &[f64]| {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum();
        let sxx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|q| (q - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    };
    assert!(corr(&a, &b).abs() < 0.1);
    assert!(corr(&a, &c).abs() < 0.1);
}

proptest! {
    #[test]
    fn relative_perturbation_equals_delta(
        values in prop::collection::vec(0.0f64..10.0, 1..64),
        delta in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let clean_norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(clean_norm > 1e-6);
        let noisy = add_noise(&values, delta, seed, 0).unwrap();
        let diff = noisy.iter().zip(&values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((diff / clean_norm - delta).abs() < 1e-12);
    }
}

#[test]
fn dataset_round_trip_is_exact() {
    let data = synthesize(&small_spec(0.05), Some("abc".into())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&data, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, data);
}

#[test]
fn resynthesis_from_header_reproduces_payload() {
    let data = synthesize(&small_spec(0.1), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&data, &path).unwrap();
    let header = read_dataset(&path).unwrap().header;
    let again = synthesize(&header.spec, None).unwrap();
    assert_eq!(again.values, data.values);
    let second = dir.path().join("e.csv");
    write_dataset(&again, &second).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn noiseless_pairs_follow_superposition() {
    let data = synthesize(&small_spec(0.0), None).unwrap();
    let blk = &data.spec().blocks[1];
    // pair (4.5, 4.5) is four times the single-wave intensity, which must be positive
    assert_eq!(blk.angle_pair(1), [4.5, 4.5]);
    assert!(data.values[1][1].iter().all(|&v| v > 0.0));
    // the full tensor is symmetric in the pair index without noise
    let t = &data.values[0];
    for l in 0..3 {
        for i in 0..3 {
            for (&a, &b) in t[l * 3 + i].iter().zip(&t[i * 3 + l]) {
                assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
            }
        }
    }
}

fn tamper(path: &std::path::Path, f: impl Fn(String) -> String) {
    let s = std::fs::read_to_string(path).unwrap();
    std::fs::write(path, f(s)).unwrap();
}

#[test]
fn mismatched_row_length_is_a_format_error() {
    let data = synthesize(&small_spec(0.0), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&data, &path).unwrap();
    tamper(&path, |s| s.replace("\"n_f\":6", "\"n_f\":5"));
    assert!(matches!(read_dataset(&path), Err(Error::Format(_))));
}

#[test]
fn version_mismatch_is_rejected() {
    let data = synthesize(&small_spec(0.0), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&data, &path).unwrap();
    tamper(&path, |s| s.replacen("\"version\":1", "\"version\":99", 1));
    assert!(matches!(read_dataset(&path), Err(Error::Format(_))));
}

#[test]
fn truncated_payload_is_rejected() {
    let data = synthesize(&small_spec(0.0), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&data, &path).unwrap();
    tamper(&path, |s| {
        let mut lines: Vec<&str> = s.lines().collect();
        lines.pop();
        lines.join("\n")
    });
    assert!(matches!(read_dataset(&path), Err(Error::Format(_))));
}

#[test]
fn noise_in_single_precision() {
    let v = [1.0f32, 2.0, -0.5, 3.0];
    let xi = [0.3f32, -1.1, 0.7, 0.2];
    let noisy = add_noise_with(&v, 0.1f32, &xi).unwrap();
    let norm = |a: &[f32]| a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let diff: Vec<f32> = noisy.iter().zip(&v).map(|(a, b)| a - b).collect();
    assert!((norm(&diff) / norm(&v) - 0.1).abs() < 1e-6);
}
