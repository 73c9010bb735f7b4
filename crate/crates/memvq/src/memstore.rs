//! Bit-exact binary shard format for compressed memories, plus headerless
//! raw-vector corpus IO.
//!
//! Shard layout, all integers little-endian:
//!
//! ```text
//! magic "MVQ1" | version u16 | d u32 | g u16 | C u32 | code_width_bits u8
//! | N u64 | checksum u64 | codebooks | codes
//! ```
//!
//! The codebook section holds g*C*s f32 values, subspace-major (for each
//! subspace, codes in id order, each code's s components in order). The code
//! section holds N*g ids, row-major, each stored in `code_width_bits/8`
//! bytes. The checksum is FNV-1a 64 over `codebooks || codes`; readers
//! verify it before parsing, so any payload corruption surfaces as an error
//! rather than silently wrong data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::pq::{self, CodeMatrix, PqModel, SubspacePartition};
use crate::vq::Codebook;

pub const SHARD_MAGIC: [u8; 4] = *b"MVQ1";
pub const SHARD_VERSION: u16 = 1;
/// magic + version + d + g + C + code_width_bits + N + checksum.
pub const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 4 + 1 + 8 + 8;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Append one code id at the given byte-aligned width, little-endian.
pub(crate) fn encode_id(out: &mut Vec<u8>, id: u32, width_bits: u8) {
    match width_bits {
        8 => out.push(id as u8),
        16 => out.extend_from_slice(&(id as u16).to_le_bytes()),
        _ => out.extend_from_slice(&id.to_le_bytes()),
    }
}

fn with_path<T>(result: std::io::Result<T>, path: &Path) -> Result<T> {
    result.map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Smallest byte-aligned width (8, 16, or 32 bits) that can hold ids in `[0, c)`.
pub fn code_width_bits(c: u64) -> Result<u8> {
    match pq::ceil_log2(c) {
        0..=8 => Ok(8),
        9..=16 => Ok(16),
        17..=32 => Ok(32),
        bits => Err(Error::Config(format!(
            "C={c} needs {bits}-bit ids, wider than the 32-bit shard maximum"
        ))),
    }
}

/// Fixed-size shard header; `checksum` covers the payload that follows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub version: u16,
    pub d: u32,
    pub g: u16,
    pub c: u32,
    pub code_width_bits: u8,
    pub n: u64,
    pub checksum: u64,
}

impl ShardHeader {
    pub fn partition(&self) -> Result<SubspacePartition> {
        SubspacePartition::new(self.d as usize, self.g as usize)
    }

    /// Codebook section size in bytes: g*C*s f32 values.
    pub fn codebook_section_len(&self) -> Result<u128> {
        let s = self.partition()?.subspace_dim() as u128;
        Ok(u128::from(self.g) * u128::from(self.c) * s * 4)
    }

    /// Code section size in bytes: N*g ids at `code_width_bits` each.
    pub fn code_section_len(&self) -> u128 {
        u128::from(self.n) * u128::from(self.g) * u128::from(self.code_width_bits / 8)
    }

    pub fn payload_len(&self) -> Result<u128> {
        Ok(self.codebook_section_len()? + self.code_section_len())
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&SHARD_MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..10].copy_from_slice(&self.d.to_le_bytes());
        out[10..12].copy_from_slice(&self.g.to_le_bytes());
        out[12..16].copy_from_slice(&self.c.to_le_bytes());
        out[16] = self.code_width_bits;
        out[17..25].copy_from_slice(&self.n.to_le_bytes());
        out[25..33].copy_from_slice(&self.checksum.to_le_bytes());
        out
    }

    fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated(format!(
                "file holds {} bytes, header needs {HEADER_LEN}",
                bytes.len()
            )));
        }
        if bytes[0..4] != SHARD_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:02x?}, expected {:02x?}",
                &bytes[0..4],
                SHARD_MAGIC
            )));
        }
        let header = Self {
            version: u16::from_le_bytes(bytes[4..6].try_into().unwrap()),
            d: u32::from_le_bytes(bytes[6..10].try_into().unwrap()),
            g: u16::from_le_bytes(bytes[10..12].try_into().unwrap()),
            c: u32::from_le_bytes(bytes[12..16].try_into().unwrap()),
            code_width_bits: bytes[16],
            n: u64::from_le_bytes(bytes[17..25].try_into().unwrap()),
            checksum: u64::from_le_bytes(bytes[25..33].try_into().unwrap()),
        };
        if header.version != SHARD_VERSION {
            return Err(Error::Format(format!(
                "unsupported shard version {}, expected {SHARD_VERSION}",
                header.version
            )));
        }
        if header.d == 0 || header.g == 0 || header.c == 0 {
            return Err(Error::Format(format!(
                "degenerate header: d={}, g={}, C={}",
                header.d, header.g, header.c
            )));
        }
        let expected_width = code_width_bits(u64::from(header.c))?;
        if header.code_width_bits != expected_width {
            return Err(Error::Format(format!(
                "code width {} does not match C={} (expected {expected_width})",
                header.code_width_bits, header.c
            )));
        }
        Ok(header)
    }
}

/// Write `model` and `codes` as one shard, atomically (temp file + rename).
/// Returns the number of bytes written.
pub fn write_shard(path: &Path, model: &PqModel, codes: &CodeMatrix) -> Result<u64> {
    codes.validate_for(model)?;
    let partition = model.partition();
    let d = u32::try_from(partition.dim())
        .map_err(|_| Error::Config(format!("d={} exceeds the u32 header field", partition.dim())))?;
    let g = u16::try_from(partition.subspaces()).map_err(|_| {
        Error::Config(format!(
            "g={} exceeds the u16 header field",
            partition.subspaces()
        ))
    })?;
    let c = u32::try_from(model.code_count())
        .map_err(|_| Error::Config(format!("C={} exceeds the u32 header field", model.code_count())))?;
    let width = code_width_bits(u64::from(c))?;
    let n = codes.rows() as u64;

    let s = partition.subspace_dim();
    let payload_len = model.codebooks().len() * model.code_count() * s * 4
        + codes.rows() * codes.subspaces() * usize::from(width / 8);
    let mut payload = Vec::with_capacity(payload_len);
    for cb in model.codebooks() {
        for &x in cb.codes() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    for row in codes.view().rows() {
        for &id in row {
            encode_id(&mut payload, id, width);
        }
    }
    debug_assert_eq!(payload.len(), payload_len);

    let header = ShardHeader {
        version: SHARD_VERSION,
        d,
        g,
        c,
        code_width_bits: width,
        n,
        checksum: fnv1a64(&payload),
    };

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = with_path(tempfile::NamedTempFile::new_in(dir), path)?;
    tmp.write_all(&header.to_bytes())?;
    tmp.write_all(&payload)?;
    tmp.as_file().sync_all()?;
    with_path(tmp.persist(path).map_err(|e| e.error), path)?;
    Ok((HEADER_LEN + payload.len()) as u64)
}

/// Read a shard back into a model and code matrix, verifying magic, version,
/// structural lengths, and checksum before parsing any payload.
pub fn read_shard(path: &Path) -> Result<(PqModel, CodeMatrix)> {
    let data = with_path(std::fs::read(path), path)?;
    let header = ShardHeader::parse(&data)?;
    let payload = &data[HEADER_LEN..];
    let expected = header.payload_len()?;
    if payload.len() as u128 != expected {
        return Err(Error::Truncated(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let actual = fnv1a64(payload);
    if actual != header.checksum {
        return Err(Error::Corruption {
            expected: header.checksum,
            actual,
        });
    }

    let partition = header.partition()?;
    let (c, s, g) = (
        header.c as usize,
        partition.subspace_dim(),
        partition.subspaces(),
    );
    let book_bytes = c * s * 4;
    let mut codebooks = Vec::with_capacity(g);
    for j in 0..g {
        let block = &payload[j * book_bytes..(j + 1) * book_bytes];
        let values: Vec<f32> = block
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let matrix = Array2::from_shape_vec((c, s), values)
            .map_err(|e| Error::Format(format!("codebook {j}: {e}")))?;
        codebooks.push(Codebook::new(matrix)?);
    }
    let model = PqModel::new(partition, codebooks)?;

    let code_bytes = &payload[g * book_bytes..];
    let ids: Vec<u32> = match header.code_width_bits {
        8 => code_bytes.iter().map(|&b| u32::from(b)).collect(),
        16 => code_bytes
            .chunks_exact(2)
            .map(|b| u32::from(u16::from_le_bytes(b.try_into().unwrap())))
            .collect(),
        _ => code_bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect(),
    };
    let matrix = Array2::from_shape_vec((header.n as usize, g), ids)
        .map_err(|e| Error::Format(format!("code section: {e}")))?;
    let codes = CodeMatrix::new(matrix);
    codes.validate_for(&model)?;
    Ok((model, codes))
}

/// Read and validate just the header, checking the on-disk length against
/// the sizes it implies. Does not verify the payload checksum.
pub fn read_shard_header(path: &Path) -> Result<ShardHeader> {
    let file = with_path(File::open(path), path)?;
    let file_len = file.metadata()?.len();
    let mut bytes = [0u8; HEADER_LEN];
    let mut reader = BufReader::new(file);
    reader.read_exact(&mut bytes).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated(format!("file holds {file_len} bytes, header needs {HEADER_LEN}"))
        } else {
            Error::Io(e)
        }
    })?;
    let header = ShardHeader::parse(&bytes)?;
    let expected = HEADER_LEN as u128 + header.payload_len()?;
    if u128::from(file_len) != expected {
        return Err(Error::Truncated(format!(
            "file is {file_len} bytes, header implies {expected}"
        )));
    }
    Ok(header)
}

/// Streaming reader over a headerless file of little-endian f32 rows.
pub struct RawVectorReader {
    reader: BufReader<File>,
    d: usize,
    remaining: u64,
}

impl RawVectorReader {
    pub fn open(path: &Path, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("raw vector dimension must be positive".into()));
        }
        let file = with_path(File::open(path), path)?;
        let len = file.metadata()?.len();
        let row = d as u64 * 4;
        if len % row != 0 {
            return Err(Error::Format(format!(
                "raw file length {len} is not a multiple of the {row}-byte row size (d={d})"
            )));
        }
        Ok(Self {
            reader: BufReader::new(file),
            d,
            remaining: len / row,
        })
    }

    /// Rows left to yield.
    pub fn remaining(&self) -> u64 {
        self.remaining
    }
}

impl Iterator for RawVectorReader {
    type Item = Result<Vec<f32>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let mut buf = vec![0u8; self.d * 4];
        if let Err(e) = self.reader.read_exact(&mut buf) {
            self.remaining = 0;
            return Some(Err(Error::Io(e)));
        }
        self.remaining -= 1;
        Some(Ok(buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect()))
    }
}

/// Load an entire raw-vector file as an N×d matrix.
pub fn read_raw_matrix(path: &Path, d: usize) -> Result<Array2<f32>> {
    if d == 0 {
        return Err(Error::Config("raw vector dimension must be positive".into()));
    }
    let data = with_path(std::fs::read(path), path)?;
    let row = d * 4;
    if data.len() % row != 0 {
        return Err(Error::Format(format!(
            "raw file length {} is not a multiple of the {row}-byte row size (d={d})",
            data.len()
        )));
    }
    let values: Vec<f32> = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let n = values.len() / d;
    Array2::from_shape_vec((n, d), values).map_err(|e| Error::Format(e.to_string()))
}

/// Write vectors as headerless little-endian f32 rows. Returns bytes written.
pub fn write_raw_vectors(path: &Path, vectors: ArrayView2<'_, f32>) -> Result<u64> {
    let mut writer = BufWriter::new(with_path(File::create(path), path)?);
    for &x in vectors.iter() {
        writer.write_all(&x.to_le_bytes())?;
    }
    writer.flush()?;
    Ok(vectors.len() as u64 * 4)
}
