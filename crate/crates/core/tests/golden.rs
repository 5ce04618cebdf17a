//! Frozen seed-42 outputs. Any change here breaks cross-party regeneration of
//! masks, so these files must never be regenerated silently.

use fedsvd::masks::{random_orthogonal, SeededGaussianStream};

fn golden(name: &str) -> Vec<f64> {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| f64::from_bits(u64::from_str_radix(l.split_whitespace().next().unwrap(), 16).unwrap()))
        .collect()
}

/// Reference generator written from the published algorithm descriptions.
struct Reference {
    s: [u64; 4],
}

impl Reference {
    fn new(seed: u64) -> Self {
        let mut z = seed;
        let mut splitmix = || {
            z = z.wrapping_add(0x9e3779b97f4a7c15);
            let mut x = z;
            x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
            x ^ (x >> 31)
        };
        Self { s: [splitmix(), splitmix(), splitmix(), splitmix()] }
    }

    fn next(&mut self) -> u64 {
        let s = &mut self.s;
        let out = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        out
    }

    fn gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = ((self.next() >> 11) + 1) as f64 / 2f64.powi(53);
        let u2 = (self.next() >> 11) as f64 / 2f64.powi(53);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

#[test]
fn seed_42_gaussians_are_frozen() {
    let want = golden("gaussian_seed42.txt");
    assert_eq!(want.len(), 10);
    let mut stream = SeededGaussianStream::new(42);
    for (i, w) in want.iter().enumerate() {
        assert_eq!(stream.next_gaussian().to_bits(), w.to_bits(), "draw {i}");
    }
}

#[test]
fn golden_gaussians_match_reference_generator() {
    let want = golden("gaussian_seed42.txt");
    let mut reference = Reference::new(42);
    for pair in want.chunks(2) {
        let (c, s) = reference.gaussian_pair();
        assert!((pair[0] - c).abs() <= 1e-15 * c.abs().max(1.0));
        assert!((pair[1] - s).abs() <= 1e-15 * s.abs().max(1.0));
    }
    let mut stream = SeededGaussianStream::new(7);
    let mut reference = Reference::new(7);
    for _ in 0..1000 {
        assert_eq!(stream.next_u64(), reference.next());
    }
}

#[test]
fn seed_42_orthogonal_2x2_is_frozen() {
    let want = golden("orthogonal2_seed42.txt");
    let q = random_orthogonal(2, &mut SeededGaussianStream::new(42)).unwrap();
    let got = [q.get(0, 0), q.get(0, 1), q.get(1, 0), q.get(1, 1)];
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g.to_bits(), w.to_bits());
    }

    // Cross-check: orthonormal, and the first column is the normalized first
    // column of the row-major Gaussian draw.
    let [a, b, c, d] = [want[0], want[1], want[2], want[3]];
    assert!((a * a + c * c - 1.0).abs() <= 1e-12);
    assert!((b * b + d * d - 1.0).abs() <= 1e-12);
    assert!((a * b + c * d).abs() <= 1e-12);
    let g = golden("gaussian_seed42.txt");
    let norm = g[0].hypot(g[2]);
    assert!((a - g[0] / norm).abs() <= 1e-15);
    assert!((c - g[2] / norm).abs() <= 1e-15);
    // Positive diagonal in the triangular factor.
    assert!(b * g[1] + d * g[3] > 0.0);
}
