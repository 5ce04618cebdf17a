use fedsvd::linalg::{blockdiag_mul_left, BlockDiagMatrix, DenseMatrix};
use fedsvd::masks::{efficient_orthogonal, generate_p, split_q, strip_mul_right, SeededGaussianStream};
use fedsvd::storage::{
    read_matrix, streamed_mask_apply, streamed_mask_apply_tracked, write_blocks, write_matrix,
    write_strip, Layout, MatrixFileReader, MemoryTracker, StorageError,
};
use std::path::Path;

struct Fixture {
    x: DenseMatrix,
    p: BlockDiagMatrix,
    strip: fedsvd::masks::QStrip,
}

fn fixture(m: usize, widths: &[usize], user: usize, b: usize, seed: u64) -> Fixture {
    let n: usize = widths.iter().sum();
    let p = generate_p(seed, m, b).unwrap();
    let mut qs = SeededGaussianStream::new(seed + 1);
    let q = efficient_orthogonal(n, b, &mut qs).unwrap();
    let strip = split_q(&q, widths).unwrap().swap_remove(user);
    let x = SeededGaussianStream::new(seed + 2).matrix(m, widths[user]);
    Fixture { x, p, strip }
}

fn in_memory(f: &Fixture) -> DenseMatrix {
    let px = blockdiag_mul_left(&f.p, &f.x).unwrap();
    strip_mul_right(&px, &f.strip).unwrap()
}

fn write_inputs(dir: &Path, f: &Fixture, layout: Layout) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    let xp = dir.join("x.fsvm");
    let pp = dir.join("p.fsvb");
    let qp = dir.join("q.fsvq");
    write_matrix(&xp, &f.x, layout).unwrap();
    write_blocks(&pp, &f.p).unwrap();
    write_strip(&qp, &f.strip).unwrap();
    (xp, pp, qp)
}

#[test]
fn whole_matrix_budget_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(37, &[11, 19, 9], 1, 6, 5);
    let (xp, pp, qp) = write_inputs(dir.path(), &f, Layout::RowMajor);
    let out = dir.path().join("out.fsvm");
    let report = streamed_mask_apply(&xp, &pp, &qp, &out, usize::MAX / 2, Layout::RowMajor).unwrap();
    assert_eq!(report.left_blocks, 7);
    let streamed = read_matrix(&out).unwrap();
    assert_eq!(streamed, in_memory(&f));

    let dense = f.p.to_dense().matmul(&f.x).unwrap().matmul(&f.strip.to_dense()).unwrap();
    assert!(streamed.max_abs_diff(&dense) <= 1e-12);
}

#[test]
fn identity_masks_scatter_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let x = SeededGaussianStream::new(9).matrix(10, 4);
    let q = BlockDiagMatrix::identity(9);
    let strip = split_q(&q, &[3, 4, 2]).unwrap().swap_remove(1);
    let f = Fixture {
        x: x.clone(),
        p: BlockDiagMatrix::identity(10),
        strip,
    };
    let (xp, pp, qp) = write_inputs(dir.path(), &f, Layout::ColMajor);
    let out = dir.path().join("out.fsvm");
    streamed_mask_apply(&xp, &pp, &qp, &out, 1 << 20, Layout::ColMajor).unwrap();
    let got = read_matrix(&out).unwrap();
    assert_eq!(got.slice_cols(3..7), x);
    assert_eq!(got.slice_cols(0..3).max_abs(), 0.0);
    assert_eq!(got.slice_cols(7..9).max_abs(), 0.0);
}

#[test]
fn fixture_2000_by_3000_under_8_mib() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(2000, &[3000], 0, 100, 17);
    let (xp, pp, qp) = write_inputs(dir.path(), &f, Layout::RowMajor);
    let out = dir.path().join("out.fsvm");
    let budget = 8 << 20;
    let tracker = MemoryTracker::with_limit(budget);
    let report = streamed_mask_apply_tracked(&xp, &pp, &qp, &out, &tracker, Layout::RowMajor).unwrap();
    assert!(report.peak_bytes <= budget, "peak {} > {budget}", report.peak_bytes);
    assert!(report.peak_bytes > 0);
    assert_eq!(tracker.current(), 0);
    assert_eq!(report.left_blocks, 20);
    let expected = in_memory(&f);
    assert_eq!(read_matrix(&out).unwrap(), expected);
}

#[test]
fn misaligned_strip_under_tight_budget() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(90, &[13, 41, 26], 1, 16, 23);
    let (xp, pp, qp) = write_inputs(dir.path(), &f, Layout::ColMajor);
    let out = dir.path().join("out.fsvm");
    // 2·(b² + b·cols)·8 with cols = 41
    let budget = 2 * (16 * 16 + 16 * 41) * 8;
    let report = streamed_mask_apply(&xp, &pp, &qp, &out, budget, Layout::RowMajor).unwrap();
    assert!(report.peak_bytes <= budget);
    assert_eq!(read_matrix(&out).unwrap(), in_memory(&f));
}

#[test]
fn budget_below_one_block_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(40, &[20], 0, 10, 3);
    let (xp, pp, qp) = write_inputs(dir.path(), &f, Layout::RowMajor);
    let out = dir.path().join("out.fsvm");
    let err = streamed_mask_apply(&xp, &pp, &qp, &out, 1000, Layout::RowMajor).unwrap_err();
    assert!(matches!(err, StorageError::BudgetTooSmall { budget: 1000, .. }), "{err}");
}

#[test]
fn shape_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(40, &[20], 0, 10, 3);
    let (xp, _, qp) = write_inputs(dir.path(), &f, Layout::RowMajor);
    let pp = dir.path().join("p_wrong.fsvb");
    write_blocks(&pp, &generate_p(1, 41, 10).unwrap()).unwrap();
    let out = dir.path().join("out.fsvm");
    let err = streamed_mask_apply(&xp, &pp, &qp, &out, 1 << 24, Layout::RowMajor).unwrap_err();
    assert!(matches!(err, StorageError::ShapeMismatch(_)));
}

#[test]
fn column_major_needs_fewer_reads_for_column_scans() {
    let dir = tempfile::tempdir().unwrap();
    let x = SeededGaussianStream::new(77).matrix(2000, 3000);
    let mut calls = Vec::new();
    for layout in [Layout::RowMajor, Layout::ColMajor] {
        let p = dir.path().join(format!("{layout:?}.fsvm"));
        write_matrix(&p, &x, layout).unwrap();
        let mut r = MatrixFileReader::open(&p).unwrap();
        let before = r.read_calls();
        for c in (0..3000).step_by(100) {
            let cols = r.read_cols(c..c + 100).unwrap();
            assert_eq!(cols[(5, 7)], x[(5, c + 7)]);
        }
        calls.push(r.read_calls() - before);
    }
    let (row_major, col_major) = (calls[0], calls[1]);
    assert!(
        row_major >= 3 * col_major,
        "row-major {row_major} reads vs column-major {col_major}"
    );
}
