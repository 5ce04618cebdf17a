//! Synthetic datasets. Every generator is a pure function of its seed.

use fedsvd::linalg::{gram_schmidt_qr, DenseMatrix, LinalgError};
use fedsvd::masks::SeededGaussianStream;

/// Uniform draw in `[0, 1)` from the stream's raw bits.
fn uniform(s: &mut SeededGaussianStream) -> f64 {
    (s.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn below(s: &mut SeededGaussianStream, n: usize) -> usize {
    ((uniform(s) * n as f64) as usize).min(n - 1)
}

/// `Y = U·diag(σ)·Vᵀ` with `σᵢ = i^(−alpha)` and orthonormal `U`, `V` from
/// QR of seeded Gaussian matrices. Only the `min(m, n)` columns of each
/// factor that meet a singular value are drawn.
pub fn synth_powerlaw(m: usize, n: usize, alpha: f64, seed: u64) -> Result<DenseMatrix, LinalgError> {
    if m == 0 || n == 0 || !(alpha >= 0.0) {
        return Err(LinalgError::InvalidArgument(format!("m={m}, n={n}, alpha={alpha}")));
    }
    let r = m.min(n);
    let mut s = SeededGaussianStream::new(seed);
    let (u, _) = gram_schmidt_qr(&s.matrix(m, r))?;
    let (v, _) = gram_schmidt_qr(&s.matrix(n, r))?;
    let sigma: Vec<f64> = (1..=r).map(|i| (i as f64).powf(-alpha)).collect();
    let mut us = u;
    us.scale_cols(&sigma);
    us.matmul(&v.transpose())
}

/// Splits columns into consecutive blocks of the given widths.
pub fn split_columns(x: &DenseMatrix, widths: &[usize]) -> Result<Vec<DenseMatrix>, LinalgError> {
    let total: usize = widths.iter().sum();
    if total != x.cols() {
        return Err(LinalgError::InvalidArgument(format!(
            "widths sum to {total}, matrix has {} columns",
            x.cols()
        )));
    }
    let mut c = 0;
    Ok(widths
        .iter()
        .map(|&w| {
            c += w;
            x.slice_cols(c - w..c)
        })
        .collect())
}

/// Widths of `k` near-equal column blocks, the first ones one wider.
pub fn even_widths(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

pub const WINE_FEATURES: usize = 12;
pub const WINE_SAMPLES: usize = 6497;
const WINE_RED: usize = 1599;

/// Wine-quality-like table, `12×6497` (features as rows): eleven positive,
/// skewed physico-chemical measurements and an integer quality score, with a
/// red/white split that shifts the feature means.
pub fn wine_like(seed: u64) -> DenseMatrix {
    // (red mean, white mean, relative spread) per feature.
    const FEATURES: [(f64, f64, f64); 11] = [
        (8.3, 6.9, 0.15),     // fixed acidity
        (0.53, 0.28, 0.33),   // volatile acidity
        (0.27, 0.33, 0.45),   // citric acid
        (2.5, 6.4, 0.75),     // residual sugar
        (0.087, 0.046, 0.35), // chlorides
        (15.9, 35.3, 0.45),   // free sulfur dioxide
        (46.5, 138.4, 0.3),   // total sulfur dioxide
        (0.9967, 0.9940, 0.002),
        (3.31, 3.19, 0.05), // pH
        (0.66, 0.49, 0.22), // sulphates
        (10.4, 10.5, 0.11), // alcohol
    ];
    let mut s = SeededGaussianStream::new(seed);
    let mut x = DenseMatrix::zeros(WINE_FEATURES, WINE_SAMPLES);
    for j in 0..WINE_SAMPLES {
        let red = j < WINE_RED;
        // Shared ripeness factor couples sugar, alcohol and density.
        let ripe = s.next_gaussian();
        for (f, &(rm, wm, spread)) in FEATURES.iter().enumerate() {
            let mean = if red { rm } else { wm };
            let coupling = match f {
                3 => -0.4,
                7 => -0.5,
                10 => 0.6,
                _ => 0.0,
            };
            let z = coupling * ripe + (1.0 - coupling * coupling).sqrt() * s.next_gaussian();
            x.set(f, j, mean * (spread * z - 0.5 * spread * spread).exp());
        }
        let alcohol = x.get(10, j);
        let q = 5.8 + 0.5 * (alcohol - 10.5) / 1.2 + 0.75 * s.next_gaussian();
        x.set(11, j, q.round().clamp(3.0, 9.0));
    }
    x
}

const SIDE: usize = 28;
pub const MNIST_PIXELS: usize = SIDE * SIDE;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64) -> Stroke {
    let steps = 12;
    (0..=steps)
        .map(|i| {
            let t = (a0 + (a1 - a0) * i as f64 / steps as f64).to_radians();
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Polyline skeletons of the ten digits on the unit square, y pointing down.
fn digit_strokes(d: usize) -> Vec<Stroke> {
    match d {
        0 => vec![arc(0.5, 0.5, 0.22, 0.33, 0.0, 360.0)],
        1 => vec![vec![(0.38, 0.3), (0.52, 0.17), (0.52, 0.83)]],
        2 => vec![
            arc(0.5, 0.35, 0.2, 0.17, 200.0, 380.0),
            vec![(0.68, 0.42), (0.3, 0.82), (0.74, 0.82)],
        ],
        3 => vec![
            arc(0.48, 0.33, 0.19, 0.15, 210.0, 450.0),
            arc(0.48, 0.65, 0.22, 0.18, 270.0, 510.0),
        ],
        4 => vec![vec![(0.6, 0.17), (0.26, 0.6), (0.76, 0.6)], vec![(0.6, 0.17), (0.6, 0.84)]],
        5 => vec![
            vec![(0.7, 0.18), (0.35, 0.18), (0.32, 0.47)],
            arc(0.48, 0.63, 0.21, 0.19, 230.0, 500.0),
        ],
        6 => vec![
            vec![(0.64, 0.17), (0.4, 0.45), (0.3, 0.66)],
            arc(0.5, 0.66, 0.2, 0.17, 0.0, 360.0),
        ],
        7 => vec![vec![(0.28, 0.18), (0.72, 0.18), (0.45, 0.84)]],
        8 => vec![
            arc(0.5, 0.32, 0.17, 0.15, 0.0, 360.0),
            arc(0.5, 0.66, 0.21, 0.18, 0.0, 360.0),
        ],
        _ => vec![
            arc(0.5, 0.35, 0.19, 0.17, 0.0, 360.0),
            vec![(0.69, 0.36), (0.62, 0.84)],
        ],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Handwritten-digit-like images, `784×n` with one 28×28 image per column
/// (row-major pixels) and intensities in `[0, 1]`. Each image is a digit
/// skeleton under a random affine jitter, drawn with a soft pen; most border
/// pixels stay exactly zero.
pub fn mnist_like(n: usize, seed: u64) -> DenseMatrix {
    let mut s = SeededGaussianStream::new(seed);
    let mut x = DenseMatrix::zeros(MNIST_PIXELS, n);
    for j in 0..n {
        let digit = below(&mut s, 10);
        let scale = 0.85 + 0.25 * uniform(&mut s);
        let slant = 0.25 * (uniform(&mut s) - 0.5);
        let angle = 0.3 * (uniform(&mut s) - 0.5);
        let (shift_x, shift_y) = (3.0 * (uniform(&mut s) - 0.5), 3.0 * (uniform(&mut s) - 0.5));
        let pen = 0.9 + 0.9 * uniform(&mut s);
        let (sin, cos) = angle.sin_cos();
        let segments: Vec<((f64, f64), (f64, f64))> = digit_strokes(digit)
            .into_iter()
            .flat_map(|stroke| {
                let pts: Vec<(f64, f64)> = stroke
                    .iter()
                    .map(|&(u, v)| {
                        let (u, v) = ((u - 0.5) * scale, (v - 0.5) * scale);
                        let u = u + slant * v;
                        let (u, v) = (cos * u - sin * v, sin * u + cos * v);
                        ((u + 0.5) * SIDE as f64 + shift_x, (v + 0.5) * SIDE as f64 + shift_y)
                    })
                    .collect();
                pts.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
            })
            .collect();
        for py in 0..SIDE {
            for px in 0..SIDE {
                let p = (px as f64 + 0.5, py as f64 + 0.5);
                let d = segments
                    .iter()
                    .map(|&(a, b)| segment_distance(p, a, b))
                    .fold(f64::INFINITY, f64::min);
                let ink = (-(d / pen).powi(2)).exp();
                if ink > 0.1 {
                    x.set(py * SIDE + px, j, ink.min(1.0));
                }
            }
        }
    }
    x
}

pub const ML100K_ITEMS: usize = 1682;
pub const ML100K_USERS: usize = 943;
pub const ML100K_RATINGS: usize = 100_000;

/// One `(user, item, rating)` record with 1-based ids, as in `u.data`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
}

/// MovieLens-100K-like ratings: 943 users, 1682 items, 100 000 integer
/// ratings in 1..=5, at least 20 per user, Zipf item popularity and a
/// low-rank taste model.
pub fn ml100k_like_ratings(seed: u64) -> Vec<Rating> {
    let mut s = SeededGaussianStream::new(seed);
    const FACTORS: usize = 5;
    let user_taste: Vec<Vec<f64>> = (0..ML100K_USERS).map(|_| s.vector(FACTORS)).collect();
    let item_traits: Vec<Vec<f64>> = (0..ML100K_ITEMS).map(|_| s.vector(FACTORS)).collect();
    let item_bias: Vec<f64> = (0..ML100K_ITEMS).map(|_| 0.6 * s.next_gaussian()).collect();

    // Popularity rank is a random permutation of the items.
    let mut rank: Vec<usize> = (0..ML100K_ITEMS).collect();
    for i in (1..rank.len()).rev() {
        rank.swap(i, below(&mut s, i + 1));
    }
    let mut cdf = Vec::with_capacity(ML100K_ITEMS);
    let mut acc = 0.0;
    for r in &rank {
        acc += 1.0 / (*r as f64 + 1.0);
        cdf.push(acc);
    }

    let activity: Vec<f64> = (0..ML100K_USERS).map(|_| -uniform(&mut s).max(1e-12).ln()).collect();
    let spare = (ML100K_RATINGS - 20 * ML100K_USERS) as f64;
    let total: f64 = activity.iter().sum();
    let mut counts: Vec<usize> = activity.iter().map(|a| 20 + (spare * a / total) as usize).collect();
    let mut short = ML100K_RATINGS - counts.iter().sum::<usize>();
    let mut u = 0;
    while short > 0 {
        counts[u % ML100K_USERS] += 1;
        short -= 1;
        u += 1;
    }

    let mut out = Vec::with_capacity(ML100K_RATINGS);
    let mut seen = vec![false; ML100K_ITEMS];
    for (user, &count) in counts.iter().enumerate() {
        seen.iter_mut().for_each(|v| *v = false);
        let mut picked = 0;
        while picked < count.min(ML100K_ITEMS) {
            let t = uniform(&mut s) * acc;
            let item = cdf.partition_point(|&c| c <= t).min(ML100K_ITEMS - 1);
            if seen[item] {
                continue;
            }
            seen[item] = true;
            picked += 1;
            let affinity: f64 = user_taste[user].iter().zip(&item_traits[item]).map(|(a, b)| a * b).sum();
            let score = 3.6 + item_bias[item] + 0.35 * affinity + 0.6 * s.next_gaussian();
            out.push(Rating {
                user: user as u32 + 1,
                item: item as u32 + 1,
                rating: score.round().clamp(1.0, 5.0),
            });
        }
    }
    out
}

/// Items as rows, users as columns; unrated cells are zero. Dimensions are
/// the largest ids unless given.
pub fn ratings_to_dense(ratings: &[Rating], dims: Option<(usize, usize)>) -> DenseMatrix {
    let (items, users) = dims.unwrap_or_else(|| {
        ratings.iter().fold((0, 0), |(i, u), r| {
            (i.max(r.item as usize), u.max(r.user as usize))
        })
    });
    let mut x = DenseMatrix::zeros(items, users);
    for r in ratings {
        x.set(r.item as usize - 1, r.user as usize - 1, r.rating);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_spectrum_has_unit_norm_factors() {
        let y = synth_powerlaw(6, 9, 0.0, 3).unwrap();
        let g = y.matmul(&y.transpose()).unwrap();
        assert!(g.max_abs_diff(&DenseMatrix::identity(6)) < 1e-12);
    }

    #[test]
    fn widths_cover_all_columns() {
        assert_eq!(even_widths(10, 3), vec![4, 3, 3]);
        let x = DenseMatrix::zeros(2, 10);
        assert_eq!(split_columns(&x, &[4, 3, 3]).unwrap().len(), 3);
        assert!(split_columns(&x, &[4, 3]).is_err());
    }

    #[test]
    fn wine_shape_and_ranges() {
        let x = wine_like(1);
        assert_eq!(x.shape(), (12, 6497));
        assert!(x.data().iter().all(|v| *v > 0.0 && v.is_finite()));
        assert!(x.row(11).iter().all(|q| (3.0..=9.0).contains(q) && q.fract() == 0.0));
    }

    #[test]
    fn digits_are_sparse_and_bounded() {
        let x = mnist_like(50, 2);
        assert_eq!(x.shape(), (784, 50));
        assert!(x.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let zeros = x.data().iter().filter(|v| **v == 0.0).count() as f64 / x.data().len() as f64;
        assert!(zeros > 0.6 && zeros < 0.95, "{zeros}");
        // Corner pixel is never inked.
        assert!(x.row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ratings_match_movielens_counts() {
        let r = ml100k_like_ratings(3);
        assert_eq!(r.len(), ML100K_RATINGS);
        let x = ratings_to_dense(&r, Some((ML100K_ITEMS, ML100K_USERS)));
        let nonzero = x.data().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, ML100K_RATINGS);
        for u in 0..ML100K_USERS {
            assert!((0..ML100K_ITEMS).filter(|&i| x.get(i, u) != 0.0).count() >= 20);
        }
    }
}
