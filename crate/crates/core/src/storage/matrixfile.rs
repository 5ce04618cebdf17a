use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::Path;

use super::blockfile::{read_exact_or, read_f64s_into, write_f64s, FORMAT_VERSION};
use super::StorageError;
use crate::linalg::DenseMatrix;

pub const MATRIX_MAGIC: [u8; 4] = *b"FSVM";
/// Magic, version, reserved, rows, cols and layout flag.
pub const MATRIX_HEADER_LEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    RowMajor,
    ColMajor,
}

impl Layout {
    fn flag(self) -> u8 {
        match self {
            Layout::RowMajor => 0,
            Layout::ColMajor => 1,
        }
    }

    fn from_flag(f: u8) -> Result<Self, StorageError> {
        match f {
            0 => Ok(Layout::RowMajor),
            1 => Ok(Layout::ColMajor),
            other => Err(StorageError::CorruptHeader(format!("layout flag {other}"))),
        }
    }
}

fn header(rows: usize, cols: usize, layout: Layout) -> [u8; MATRIX_HEADER_LEN] {
    let mut h = [0u8; MATRIX_HEADER_LEN];
    h[0..4].copy_from_slice(&MATRIX_MAGIC);
    h[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[8..16].copy_from_slice(&(rows as u64).to_le_bytes());
    h[16..24].copy_from_slice(&(cols as u64).to_le_bytes());
    h[24] = layout.flag();
    h
}

pub fn matrix_file_len(rows: usize, cols: usize) -> u64 {
    MATRIX_HEADER_LEN as u64 + 8 * (rows as u64) * (cols as u64)
}

/// Writes a whole matrix in the requested layout.
pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix, layout: Layout) -> Result<(), StorageError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_to(&mut w, m, layout)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix_to(w: &mut impl Write, m: &DenseMatrix, layout: Layout) -> Result<(), StorageError> {
    w.write_all(&header(m.rows(), m.cols(), layout))?;
    match layout {
        Layout::RowMajor => write_f64s(w, m.data()),
        Layout::ColMajor => write_f64s(w, &m.to_col_major()),
    }
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix, StorageError> {
    let mut r = MatrixFileReader::open(path)?;
    let rows = r.rows();
    r.read_rows(0..rows)
}

/// File handle that counts `read` calls reaching the operating system.
#[derive(Debug)]
pub struct CountingFile {
    file: File,
    reads: u64,
}

impl Read for CountingFile {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.reads += 1;
        self.file.read(buf)
    }
}

impl Seek for CountingFile {
    fn seek(&mut self, pos: SeekFrom) -> std::io::Result<u64> {
        self.file.seek(pos)
    }
}

/// Unbuffered positioned reader; each contiguous run is one read request.
#[derive(Debug)]
pub struct MatrixFileReader {
    file: CountingFile,
    rows: usize,
    cols: usize,
    layout: Layout,
}

impl MatrixFileReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StorageError> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let mut file = CountingFile { file, reads: 0 };
        let mut h = [0u8; MATRIX_HEADER_LEN];
        if len < MATRIX_HEADER_LEN as u64 {
            return Err(StorageError::CorruptHeader("file shorter than header".into()));
        }
        read_exact_or(&mut file, &mut h, "header")?;
        if h[0..4] != MATRIX_MAGIC {
            return Err(StorageError::CorruptHeader("bad matrix-file magic".into()));
        }
        if u16::from_le_bytes([h[4], h[5]]) != FORMAT_VERSION {
            return Err(StorageError::CorruptHeader("unsupported matrix-file version".into()));
        }
        let rows = u64::from_le_bytes(h[8..16].try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(h[16..24].try_into().unwrap()) as usize;
        let layout = Layout::from_flag(h[24])?;
        let expected = matrix_file_len(rows, cols);
        if len < expected {
            return Err(StorageError::TruncatedFile(format!("{len} bytes, expected {expected}")));
        }
        if len > expected {
            return Err(StorageError::CorruptHeader(format!("{len} bytes, expected {expected}")));
        }
        Ok(Self {
            file,
            rows,
            cols,
            layout,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn read_calls(&self) -> u64 {
        self.file.reads
    }

    fn read_run(&mut self, index: usize, len: usize, out: &mut [f64]) -> Result<(), StorageError> {
        self.file
            .seek(SeekFrom::Start(MATRIX_HEADER_LEN as u64 + 8 * index as u64))?;
        read_f64s_into(&mut self.file, &mut out[..len], "matrix data")
    }

    /// Rows `range` as a dense matrix.
    pub fn read_rows(&mut self, range: Range<usize>) -> Result<DenseMatrix, StorageError> {
        self.read_block(range, 0..self.cols)
    }

    /// Columns `range` as a dense `rows×len` matrix.
    pub fn read_cols(&mut self, range: Range<usize>) -> Result<DenseMatrix, StorageError> {
        self.read_block(0..self.rows, range)
    }

    pub fn read_block(&mut self, rows: Range<usize>, cols: Range<usize>) -> Result<DenseMatrix, StorageError> {
        if rows.end > self.rows || cols.end > self.cols {
            return Err(StorageError::OutOfRange(format!(
                "block {rows:?}x{cols:?} of {}x{}",
                self.rows, self.cols
            )));
        }
        let (h, w) = (rows.len(), cols.len());
        let mut out = DenseMatrix::zeros(h, w);
        match self.layout {
            Layout::RowMajor => {
                if w == self.cols {
                    self.read_run(rows.start * self.cols, h * w, out.data_mut())?;
                } else {
                    for (k, i) in rows.clone().enumerate() {
                        let mut buf = vec![0.0; w];
                        self.read_run(i * self.cols + cols.start, w, &mut buf)?;
                        out.row_mut(k).copy_from_slice(&buf);
                    }
                }
            }
            Layout::ColMajor => {
                let mut colbuf = vec![0.0; h * w];
                if h == self.rows {
                    self.read_run(cols.start * self.rows, h * w, &mut colbuf)?;
                } else {
                    for (k, j) in cols.clone().enumerate() {
                        self.read_run(j * self.rows + rows.start, h, &mut colbuf[k * h..(k + 1) * h])?;
                    }
                }
                out = DenseMatrix::from_col_major(h, w, &colbuf);
            }
        }
        Ok(out)
    }
}

/// Positioned writer into a preallocated matrix file.
#[derive(Debug)]
pub struct MatrixFileWriter {
    file: File,
    rows: usize,
    cols: usize,
    layout: Layout,
}

impl MatrixFileWriter {
    pub fn create(path: impl AsRef<Path>, rows: usize, cols: usize, layout: Layout) -> Result<Self, StorageError> {
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        file.write_all(&header(rows, cols, layout))?;
        file.set_len(matrix_file_len(rows, cols))?;
        Ok(Self {
            file,
            rows,
            cols,
            layout,
        })
    }

    fn write_run(&mut self, index: usize, data: &[f64]) -> Result<(), StorageError> {
        self.file
            .seek(SeekFrom::Start(MATRIX_HEADER_LEN as u64 + 8 * index as u64))?;
        write_f64s(&mut self.file, data)
    }

    /// Writes `block` with its top-left corner at `(r0, c0)`.
    pub fn write_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) -> Result<(), StorageError> {
        let (h, w) = block.shape();
        if r0 + h > self.rows || c0 + w > self.cols {
            return Err(StorageError::OutOfRange(format!(
                "block at ({r0},{c0}) of size {h}x{w} in {}x{}",
                self.rows, self.cols
            )));
        }
        match self.layout {
            Layout::RowMajor => {
                if w == self.cols {
                    self.write_run(r0 * self.cols, block.data())?;
                } else {
                    for i in 0..h {
                        self.write_run((r0 + i) * self.cols + c0, block.row(i))?;
                    }
                }
            }
            Layout::ColMajor => {
                let colmaj = block.to_col_major();
                for j in 0..w {
                    self.write_run((c0 + j) * self.rows + r0, &colmaj[j * h..(j + 1) * h])?;
                }
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), StorageError> {
        self.file.flush()?;
        Ok(())
    }
}
