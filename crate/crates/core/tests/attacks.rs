use fedsvd::attacks::{
    attack_suite, fastica, ica_blockwise, mean_score, pearson_score, random_baseline, AttackConfig, IcaOptions,
    Method, Side,
};
use fedsvd::linalg::{blockdiag_mul_left, DenseMatrix};
use fedsvd::masks::{generate_p, random_orthogonal, SeededGaussianStream};
use statrs::statistics::Statistics;

fn uniform01(s: &mut SeededGaussianStream) -> f64 {
    (s.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn binary_sources(seed: u64, k: usize, n: usize) -> DenseMatrix {
    let mut s = SeededGaussianStream::new(seed);
    let mut m = DenseMatrix::zeros(k, n);
    for v in m.data_mut() {
        *v = if s.next_u64() & 1 == 0 { -1.0 } else { 1.0 };
    }
    m
}

fn laplace_sources(seed: u64, k: usize, n: usize) -> DenseMatrix {
    let mut s = SeededGaussianStream::new(seed);
    let mut m = DenseMatrix::zeros(k, n);
    for v in m.data_mut() {
        let u = uniform01(&mut s) - 0.5;
        *v = -u.signum() * (1.0 - 2.0 * u.abs()).max(1e-300).ln();
    }
    m
}

fn uniform_sources(seed: u64, k: usize, n: usize) -> DenseMatrix {
    let mut s = SeededGaussianStream::new(seed);
    let mut m = DenseMatrix::zeros(k, n);
    for v in m.data_mut() {
        *v = uniform01(&mut s) - 0.5;
    }
    m
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    a.iter().covariance(b.iter()) / (a.iter().std_dev() * b.iter().std_dev())
}

/// Largest `|ρ|` over all row pairs, straight from sample statistics.
fn oracle_max_abs(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            best = best.max(corr(a.row(i), b.row(j)).abs());
        }
    }
    best
}

#[test]
fn rotated_binary_sources_are_recovered() {
    let src = binary_sources(1, 4, 2000);
    let rot = random_orthogonal(4, &mut SeededGaussianStream::new(2)).unwrap();
    let mixed = rot.matmul(&src).unwrap();
    let out = fastica(&mixed, 4, 3, &IcaOptions::default()).unwrap();
    assert!(out.all_converged());
    let mut taken = [false; 4];
    for i in 0..4 {
        let (j, c) = (0..4)
            .filter(|&j| !taken[j])
            .map(|j| (j, corr(out.sources.row(j), src.row(i)).abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        taken[j] = true;
        assert!(c >= 0.95, "source {i}: {c}");
    }
}

#[test]
fn one_dimensional_signal_comes_back_standardized() {
    let x = laplace_sources(4, 1, 300);
    let out = fastica(&x, 1, 0, &IcaOptions::default()).unwrap();
    let row = x.row(0);
    let mean = row.iter().sum::<f64>() / 300.0;
    let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 300.0).sqrt();
    let sign = out.sources[(0, 0)].signum() * (row[0] - mean).signum();
    for (got, v) in out.sources.row(0).iter().zip(row) {
        assert!((got - sign * (v - mean) / sd).abs() < 1e-10);
    }
}

#[test]
fn gaussian_input_mostly_fails_to_converge() {
    let opts = IcaOptions::default();
    let mut gaussian_failures = 0;
    for seed in 0..8 {
        let g = SeededGaussianStream::new(100 + seed).matrix(6, 1000);
        if !fastica(&g, 6, seed, &opts).unwrap().all_converged() {
            gaussian_failures += 1;
        }
        let mix = SeededGaussianStream::new(200 + seed).matrix(6, 6);
        let u = mix.matmul(&uniform_sources(300 + seed, 6, 1000)).unwrap();
        assert!(fastica(&u, 6, seed, &opts).unwrap().all_converged(), "seed {seed}");
    }
    assert!(gaussian_failures >= 5, "{gaussian_failures} of 8");
}

#[test]
fn full_width_block_is_plain_fastica() {
    let x = laplace_sources(5, 6, 400);
    let opts = IcaOptions::default();
    assert_eq!(ica_blockwise(&x, 6, 11, 6, &opts).unwrap(), fastica(&x, 6, 11, &opts).unwrap());
    assert_eq!(ica_blockwise(&x, 50, 11, 4, &opts).unwrap(), fastica(&x, 4, 11, &opts).unwrap());
}

#[test]
fn knowing_the_block_size_helps() {
    let src = laplace_sources(6, 12, 150);
    let p = generate_p(7, 12, 2).unwrap();
    let masked = blockdiag_mul_left(&p, &src).unwrap();
    let opts = IcaOptions::default();
    let plain = pearson_score(&fastica(&masked, 12, 1, &opts).unwrap().sources, &src).unwrap();
    let known = pearson_score(&ica_blockwise(&masked, 2, 1, 12, &opts).unwrap().sources, &src).unwrap();
    let wrong = pearson_score(&ica_blockwise(&masked, 3, 1, 12, &opts).unwrap().sources, &src).unwrap();
    assert!(known.assignment_mean >= plain.assignment_mean, "{known:?} vs {plain:?}");
    assert!(wrong.assignment_mean < known.assignment_mean, "{wrong:?} vs {known:?}");
    assert!(known.max_abs > 0.99);
}

#[test]
fn score_ignores_order_and_sign() {
    let truth = laplace_sources(8, 5, 60);
    let rec = SeededGaussianStream::new(9).matrix(5, 60);
    let base = pearson_score(&rec, &truth).unwrap();
    assert!((base.max_abs - oracle_max_abs(&rec, &truth)).abs() < 1e-12);

    let order = [3, 0, 4, 1, 2];
    let shuffle = |m: &DenseMatrix| {
        let rows: Vec<Vec<f64>> = order
            .iter()
            .enumerate()
            .map(|(i, &r)| m.row(r).iter().map(|v| if i % 2 == 0 { -v } else { *v }).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        DenseMatrix::from_rows(&refs)
    };
    for (a, b) in [(shuffle(&rec), truth.clone()), (rec.clone(), shuffle(&truth))] {
        let s = pearson_score(&a, &b).unwrap();
        assert!((s.max_abs - base.max_abs).abs() < 1e-12);
        assert!((s.assignment_mean - base.assignment_mean).abs() < 1e-12);
    }
    let mut neg = truth.clone();
    neg.scale(-1.0);
    let s = pearson_score(&shuffle(&neg), &truth).unwrap();
    assert!((s.max_abs - 1.0).abs() < 1e-12 && (s.assignment_mean - 1.0).abs() < 1e-12);
}

#[test]
fn baseline_is_the_score_of_independent_noise() {
    let truth = uniform_sources(10, 8, 200);
    let got = random_baseline(&truth, 5).unwrap();
    let noise = SeededGaussianStream::new(5).matrix(8, 200);
    assert!((got.max_abs - oracle_max_abs(&noise, &truth)).abs() < 1e-12);
    // 64 pairs of length-200 independent rows: well below 0.4.
    assert!(got.max_abs < 0.4);
}

#[test]
fn unmasked_sources_are_exposed_and_masking_hides_them() {
    let x = laplace_sources(11, 8, 1000);
    let mut cfg = AttackConfig {
        b_values: vec![8],
        seeds: vec![0, 1],
        max_components: 8,
        ..AttackConfig::default()
    };
    cfg.identity_masks = true;
    let open = attack_suite(&x, &cfg).unwrap();
    assert_eq!(open.len(), 2 * (2 + 4));
    for r in open.iter().filter(|r| r.side == Side::Rows && r.method != Method::Random) {
        assert!(r.max_abs_pearson >= 0.9, "{r:?}");
        assert!(r.assignment_mean >= 0.9, "{r:?}");
    }

    cfg.identity_masks = false;
    let masked = attack_suite(&x, &cfg).unwrap();
    let rows_ica = |reports: &[fedsvd::attacks::AttackReport]| {
        reports
            .iter()
            .filter(|r| r.side == Side::Rows && r.method == Method::Ica)
            .map(|r| r.max_abs_pearson)
            .fold(0.0, f64::max)
    };
    let baseline = mean_score(&masked, Method::Random, None).unwrap();
    assert!(rows_ica(&masked) < rows_ica(&open));
    assert!(rows_ica(&masked) <= baseline + 0.1, "{} vs {baseline}", rows_ica(&masked));
}

#[test]
fn mean_score_takes_the_stronger_side_per_seed() {
    let x = laplace_sources(12, 4, 100);
    let cfg = AttackConfig {
        b_values: vec![2],
        seeds: vec![3, 4],
        max_components: 4,
        ..AttackConfig::default()
    };
    let reports = attack_suite(&x, &cfg).unwrap();
    let want: f64 = [3, 4]
        .iter()
        .map(|&s| {
            reports
                .iter()
                .filter(|r| r.seed == s && r.method == Method::IcaBlock)
                .map(|r| r.max_abs_pearson)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 2.0;
    assert_eq!(mean_score(&reports, Method::IcaBlock, Some(2)), Some(want));
    assert_eq!(mean_score(&reports, Method::Ica, Some(7)), None);
    for r in &reports {
        assert!((0.0..=1.0).contains(&r.max_abs_pearson));
    }
}
