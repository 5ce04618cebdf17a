use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::StorageError;
use crate::linalg::{BlockDiagMatrix, DenseMatrix};
use crate::masks::{QSegment, QStrip};

pub const BLOCK_MAGIC: [u8; 4] = *b"FSVB";
pub const STRIP_MAGIC: [u8; 4] = *b"FSVQ";
pub const FORMAT_VERSION: u16 = 1;
/// Magic, version, flags, dim and block count.
pub const BLOCK_HEADER_LEN: usize = 24;
const FLAG_ORTHOGONAL: u16 = 1;

pub(crate) fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), StorageError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => StorageError::TruncatedFile(format!("ended inside {what}")),
        _ => StorageError::from(e),
    })
}

pub(crate) fn read_u64(r: &mut impl Read, what: &str) -> Result<u64, StorageError> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

/// Staging buffer size for decoding; matrix data is decoded chunk by chunk.
pub(crate) const STAGING_BYTES: usize = 1 << 16;

pub(crate) fn read_f64s_into(r: &mut impl Read, out: &mut [f64], what: &str) -> Result<(), StorageError> {
    let mut staging = vec![0u8; STAGING_BYTES.min(out.len() * 8)];
    for chunk in out.chunks_mut(STAGING_BYTES / 8) {
        let bytes = &mut staging[..chunk.len() * 8];
        read_exact_or(r, bytes, what)?;
        for (o, c) in chunk.iter_mut().zip(bytes.chunks_exact(8)) {
            *o = f64::from_le_bytes(c.try_into().unwrap());
        }
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<f64>, StorageError> {
    let mut out = vec![0.0; len];
    read_f64s_into(r, &mut out, what)?;
    Ok(out)
}

pub(crate) fn write_f64s(w: &mut impl Write, data: &[f64]) -> Result<(), StorageError> {
    let mut buf = Vec::with_capacity(data.len().min(1 << 16) * 8);
    for chunk in data.chunks(1 << 16) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Serializes a block-diagonal matrix in the block-file format.
pub fn write_blocks_to(w: &mut impl Write, m: &BlockDiagMatrix) -> Result<(), StorageError> {
    w.write_all(&BLOCK_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let flags = if m.is_orthogonal() { FLAG_ORTHOGONAL } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(m.dim() as u64).to_le_bytes())?;
    w.write_all(&(m.blocks().len() as u64).to_le_bytes())?;
    for (off, b) in m.blocks() {
        w.write_all(&(*off as u64).to_le_bytes())?;
        w.write_all(&(b.rows() as u64).to_le_bytes())?;
        write_f64s(w, b.data())?;
    }
    Ok(())
}

pub fn write_blocks(path: impl AsRef<Path>, m: &BlockDiagMatrix) -> Result<(), StorageError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_blocks_to(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Exact file length for blocks of the given sizes.
pub fn block_file_len(sizes: &[usize]) -> u64 {
    BLOCK_HEADER_LEN as u64 + sizes.iter().map(|&s| 16 + 8 * (s * s) as u64).sum::<u64>()
}

/// Sequential reader holding at most one block in memory.
pub struct BlockIter<R: Read> {
    reader: R,
    pub dim: usize,
    pub block_count: usize,
    pub orthogonal: bool,
    next_index: usize,
    next_offset: usize,
}

impl<R: Read> BlockIter<R> {
    pub fn new(mut reader: R) -> Result<Self, StorageError> {
        let mut h = [0u8; BLOCK_HEADER_LEN];
        reader.read_exact(&mut h).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => StorageError::CorruptHeader("file shorter than header".into()),
            _ => StorageError::from(e),
        })?;
        if h[0..4] != BLOCK_MAGIC {
            return Err(StorageError::CorruptHeader("bad block-file magic".into()));
        }
        let version = u16::from_le_bytes([h[4], h[5]]);
        if version != FORMAT_VERSION {
            return Err(StorageError::CorruptHeader(format!("unsupported version {version}")));
        }
        let flags = u16::from_le_bytes([h[6], h[7]]);
        let dim = u64::from_le_bytes(h[8..16].try_into().unwrap()) as usize;
        let block_count = u64::from_le_bytes(h[16..24].try_into().unwrap()) as usize;
        if block_count > dim {
            return Err(StorageError::CorruptHeader(format!("{block_count} blocks for dim {dim}")));
        }
        Ok(Self {
            reader,
            dim,
            block_count,
            orthogonal: flags & FLAG_ORTHOGONAL != 0,
            next_index: 0,
            next_offset: 0,
        })
    }

    fn read_next<T>(
        &mut self,
        before: impl FnOnce(usize) -> Result<T, StorageError>,
    ) -> Result<(usize, DenseMatrix, T), StorageError> {
        let off = read_u64(&mut self.reader, "block offset")? as usize;
        let size = read_u64(&mut self.reader, "block size")? as usize;
        if off != self.next_offset || size == 0 || off + size > self.dim {
            return Err(StorageError::CorruptHeader(format!(
                "block {} at offset {off} size {size} breaks the diagonal layout",
                self.next_index
            )));
        }
        let token = before(size)?;
        let data = read_f64s(&mut self.reader, size * size, "block data")?;
        self.next_offset += size;
        self.next_index += 1;
        Ok((off, DenseMatrix::new(size, size, data)?, token))
    }

    /// Like `next`, but calls `before(size)` once the block size is known
    /// and before its data is allocated.
    pub fn next_sized<T>(
        &mut self,
        before: impl FnOnce(usize) -> Result<T, StorageError>,
    ) -> Option<Result<(usize, DenseMatrix, T), StorageError>> {
        if self.next_index >= self.block_count {
            if self.next_index == self.block_count && self.next_offset != self.dim {
                self.next_index += 1;
                return Some(Err(StorageError::CorruptHeader(format!(
                    "blocks cover {} of {}",
                    self.next_offset, self.dim
                ))));
            }
            return None;
        }
        let r = self.read_next(before);
        if r.is_err() {
            self.next_index = usize::MAX;
        }
        Some(r)
    }
}

impl<R: Read> Iterator for BlockIter<R> {
    type Item = Result<(usize, DenseMatrix), StorageError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_sized(|_| Ok(())).map(|r| r.map(|(off, b, ())| (off, b)))
    }
}

pub fn read_block_iter(path: impl AsRef<Path>) -> Result<BlockIter<BufReader<File>>, StorageError> {
    BlockIter::new(BufReader::new(File::open(path)?))
}

pub fn read_blocks_from(r: impl Read) -> Result<BlockDiagMatrix, StorageError> {
    let it = BlockIter::new(r)?;
    let (dim, orth) = (it.dim, it.orthogonal);
    let blocks = it.collect::<Result<Vec<_>, _>>()?;
    Ok(BlockDiagMatrix::new(dim, blocks, orth)?)
}

pub fn read_blocks(path: impl AsRef<Path>) -> Result<BlockDiagMatrix, StorageError> {
    read_blocks_from(BufReader::new(File::open(path)?))
}

/// Strip file: `FSVQ`, version, flags, owner, column range, dimension and
/// segment count, then per segment its placement, shape and data.
pub fn write_strip_to(w: &mut impl Write, s: &QStrip) -> Result<(), StorageError> {
    w.write_all(&STRIP_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    for v in [
        s.owner,
        s.col_range.start,
        s.col_range.end,
        s.dim,
        s.segments.len(),
    ] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for seg in &s.segments {
        for v in [
            seg.block_index,
            seg.col_offset,
            seg.local_row_start,
            seg.data.rows(),
            seg.data.cols(),
        ] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        write_f64s(w, seg.data.data())?;
    }
    Ok(())
}

pub fn write_strip(path: impl AsRef<Path>, s: &QStrip) -> Result<(), StorageError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_strip_to(&mut w, s)?;
    w.flush()?;
    Ok(())
}

/// Strip header followed by lazily read segments.
pub struct StripReader<R: Read> {
    reader: R,
    pub owner: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub dim: usize,
    pub segment_count: usize,
    read: usize,
}

impl<R: Read> StripReader<R> {
    pub fn new(mut reader: R) -> Result<Self, StorageError> {
        let mut h = [0u8; 8];
        reader.read_exact(&mut h).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => StorageError::CorruptHeader("file shorter than header".into()),
            _ => StorageError::from(e),
        })?;
        if h[0..4] != STRIP_MAGIC {
            return Err(StorageError::CorruptHeader("bad strip-file magic".into()));
        }
        if u16::from_le_bytes([h[4], h[5]]) != FORMAT_VERSION {
            return Err(StorageError::CorruptHeader("unsupported strip version".into()));
        }
        let mut vals = [0usize; 5];
        for v in vals.iter_mut() {
            *v = read_u64(&mut reader, "strip header")? as usize;
        }
        let [owner, col_start, col_end, dim, segment_count] = vals;
        if col_end < col_start || col_end > dim {
            return Err(StorageError::CorruptHeader(format!("column range {col_start}..{col_end} of {dim}")));
        }
        Ok(Self {
            reader,
            owner,
            col_start,
            col_end,
            dim,
            segment_count,
            read: 0,
        })
    }

    pub fn next_segment(&mut self) -> Option<Result<QSegment, StorageError>> {
        self.next_segment_sized(|_, _| Ok(())).map(|r| r.map(|(s, ())| s))
    }

    /// Calls `before(rows, cols)` ahead of allocating the segment data.
    pub fn next_segment_sized<T>(
        &mut self,
        before: impl FnOnce(usize, usize) -> Result<T, StorageError>,
    ) -> Option<Result<(QSegment, T), StorageError>> {
        if self.read >= self.segment_count {
            return None;
        }
        self.read += 1;
        Some((|| {
            let mut vals = [0usize; 5];
            for v in vals.iter_mut() {
                *v = read_u64(&mut self.reader, "segment header")? as usize;
            }
            let [block_index, col_offset, local_row_start, rows, cols] = vals;
            if col_offset + cols > self.dim || local_row_start + rows > self.col_end - self.col_start {
                return Err(StorageError::CorruptHeader("segment outside the strip".into()));
            }
            let token = before(rows, cols)?;
            let data = read_f64s(&mut self.reader, rows * cols, "segment data")?;
            let seg = QSegment {
                block_index,
                col_offset,
                local_row_start,
                data: DenseMatrix::new(rows, cols, data)?,
            };
            Ok((seg, token))
        })())
    }
}

pub fn open_strip(path: impl AsRef<Path>) -> Result<StripReader<BufReader<File>>, StorageError> {
    StripReader::new(BufReader::new(File::open(path)?))
}

pub fn read_strip(path: impl AsRef<Path>) -> Result<QStrip, StorageError> {
    read_strip_from(BufReader::new(File::open(path)?))
}

pub fn read_strip_from(r: impl Read) -> Result<QStrip, StorageError> {
    let mut r = StripReader::new(r)?;
    let mut segments = Vec::with_capacity(r.segment_count);
    while let Some(seg) = r.next_segment() {
        segments.push(seg?);
    }
    let s = QStrip {
        owner: r.owner,
        col_range: r.col_start..r.col_end,
        dim: r.dim,
        segments,
    };
    s.validate()?;
    Ok(s)
}
