//! Artifact files for matrices and embeddings.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic[4] version:u32 meta_len:u64 meta:json[meta_len] body checksum[32]
//! ```
//!
//! The checksum is SHA-256 over every preceding byte. A sparse body is
//! `rows cols nnz:u64, indptr[rows+1]:u64, indices[nnz]:u64, values[nnz]:f64`;
//! an embedding body is `nodes dim:u64, values[nodes*dim]:f64`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::IdMap;
use crate::sparse::CsrMatrix;

const SPARSE_MAGIC: &[u8; 4] = b"EPSM";
const EMBEDDING_MAGIC: &[u8; 4] = b"EPEM";
const VERSION: u32 = 1;

/// SHA-256 hex digest of the JSON encoding of `value`.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(hex(&Sha256::digest(serde_json::to_vec(value)?)))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Free-form metadata stored in every artifact header.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub fingerprint: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, serde_json::Value>,
}

impl ArtifactMeta {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        Self {
            fingerprint: fingerprint.into(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Result<Self> {
        self.attributes.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(self)
    }
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> HashingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }

    fn u64(&mut self, v: usize) -> Result<()> {
        self.put(&(v as u64).to_le_bytes())
    }

    fn finish(mut self) -> Result<()> {
        let digest = self.hasher.finalize();
        self.inner.write_all(&digest)?;
        self.inner.flush()?;
        Ok(())
    }
}

fn write_header<W: Write>(out: &mut HashingWriter<W>, magic: &[u8; 4], meta: &ArtifactMeta) -> Result<()> {
    let json = serde_json::to_vec(meta)?;
    out.put(magic)?;
    out.put(&VERSION.to_le_bytes())?;
    out.u64(json.len())?;
    out.put(&json)
}

/// Parses a whole artifact held in memory, checksum first.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: String,
}

impl<'a> Cursor<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 4], source: &str) -> Result<(Self, ArtifactMeta)> {
        let format = |message: &str| Error::Format {
            path: source.to_string(),
            message: message.to_string(),
        };
        if bytes.len() < 4 + 4 + 8 + 32 || &bytes[..4] != magic {
            return Err(format("not an artifact of the expected kind"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum(source.to_string()));
        }
        let mut c = Cursor {
            bytes: body,
            pos: 4,
            source: source.to_string(),
        };
        let version = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(format(&format!("unsupported version {version}")));
        }
        let len = c.u64()?;
        let meta = serde_json::from_slice(c.take(len)?)?;
        Ok((c, meta))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format {
            path: self.source.clone(),
            message: "truncated artifact".to_string(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<usize>> {
        let raw = self.take(n.saturating_mul(8))?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.saturating_mul(8))?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn done(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Format {
                path: self.source.clone(),
                message: "trailing bytes after the body".to_string(),
            })
        }
    }
}

pub fn write_sparse<W: Write>(m: &CsrMatrix, meta: &ArtifactMeta, out: W) -> Result<()> {
    let mut w = HashingWriter {
        inner: out,
        hasher: Sha256::new(),
    };
    write_header(&mut w, SPARSE_MAGIC, meta)?;
    w.u64(m.rows())?;
    w.u64(m.cols())?;
    w.u64(m.nnz())?;
    for &p in m.indptr() {
        w.u64(p)?;
    }
    for &j in m.indices() {
        w.u64(j)?;
    }
    for v in m.values() {
        w.put(&v.to_le_bytes())?;
    }
    w.finish()
}

pub fn read_sparse_bytes(bytes: &[u8], source: &str) -> Result<(CsrMatrix, ArtifactMeta)> {
    let (mut c, meta) = Cursor::open(bytes, SPARSE_MAGIC, source)?;
    let (rows, cols, nnz) = (c.u64()?, c.u64()?, c.u64()?);
    let indptr = c.u64s(rows.saturating_add(1))?;
    let indices = c.u64s(nnz)?;
    let values = c.f64s(nnz)?;
    c.done()?;
    Ok((CsrMatrix::new(rows, cols, indptr, indices, values)?, meta))
}

pub fn save_sparse(path: impl AsRef<Path>, m: &CsrMatrix, meta: &ArtifactMeta) -> Result<()> {
    write_sparse(m, meta, BufWriter::new(File::create(path)?))
}

pub fn load_sparse(path: impl AsRef<Path>) -> Result<(CsrMatrix, ArtifactMeta)> {
    let path = path.as_ref();
    read_sparse_bytes(&std::fs::read(path)?, &path.display().to_string())
}

/// Reads only the metadata, still verifying the checksum.
pub fn load_meta(path: impl AsRef<Path>) -> Result<ArtifactMeta> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let magic = bytes.get(..4).unwrap_or_default();
    let magic = if magic == SPARSE_MAGIC { SPARSE_MAGIC } else { EMBEDDING_MAGIC };
    Cursor::open(&bytes, magic, &path.display().to_string()).map(|(_, m)| m)
}

pub fn write_embedding<W: Write>(e: &EmbeddingMatrix, meta: &ArtifactMeta, out: W) -> Result<()> {
    let mut w = HashingWriter {
        inner: out,
        hasher: Sha256::new(),
    };
    write_header(&mut w, EMBEDDING_MAGIC, meta)?;
    w.u64(e.num_nodes())?;
    w.u64(e.dim())?;
    for v in e.as_slice() {
        w.put(&v.to_le_bytes())?;
    }
    w.finish()
}

pub fn read_embedding_bytes(bytes: &[u8], source: &str) -> Result<(EmbeddingMatrix, ArtifactMeta)> {
    let (mut c, meta) = Cursor::open(bytes, EMBEDDING_MAGIC, source)?;
    let (n, d) = (c.u64()?, c.u64()?);
    let values = c.f64s(n.saturating_mul(d))?;
    c.done()?;
    Ok((EmbeddingMatrix::new(n, d, values)?, meta))
}

pub fn save_embedding(path: impl AsRef<Path>, e: &EmbeddingMatrix, meta: &ArtifactMeta) -> Result<()> {
    write_embedding(e, meta, BufWriter::new(File::create(path)?))
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<(EmbeddingMatrix, ArtifactMeta)> {
    let path = path.as_ref();
    read_embedding_bytes(&std::fs::read(path)?, &path.display().to_string())
}

/// `nodes dim` header, then one `raw_id v_1 ... v_dim` line per node.
pub fn write_embedding_text<W: Write>(e: &EmbeddingMatrix, ids: IdMap, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", e.num_nodes(), e.dim())?;
    for i in 0..e.num_nodes() {
        write!(out, "{}", ids.to_raw(i))?;
        for v in e.vector(i) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_embedding_text`].
pub fn read_embedding_text<R: Read>(input: R, ids: IdMap, source: &Path) -> Result<EmbeddingMatrix> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(1, format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let [n, d] = dims[..] else {
        return Err(parse_err(1, format!("header needs two fields, got {header:?}")));
    };
    let mut values = vec![f64::NAN; n * d];
    let mut seen = vec![false; n];
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let raw: u64 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|_| parse_err(lineno, "bad node id".into()))?;
        let node = ids
            .to_internal(raw)
            .filter(|&i| i < n)
            .ok_or_else(|| parse_err(lineno, format!("node {raw} out of range")))?;
        if std::mem::replace(&mut seen[node], true) {
            return Err(parse_err(lineno, format!("node {raw} listed twice")));
        }
        let row: Vec<f64> = fields
            .map(|t| t.parse().map_err(|_| parse_err(lineno, format!("bad value {t:?}"))))
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(parse_err(lineno, format!("expected {d} values, got {}", row.len())));
        }
        values[node * d..(node + 1) * d].copy_from_slice(&row);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::validation(format!("node {} has no vector", ids.to_raw(missing))));
    }
    EmbeddingMatrix::new(n, d, values)
}

/// One `raw_i raw_j value` line per stored entry.
pub fn write_triplets<W: Write>(m: &CsrMatrix, ids: IdMap, mut out: W) -> Result<()> {
    for (i, j, v) in m.iter() {
        writeln!(out, "{} {} {v}", ids.to_raw(i), ids.to_raw(j))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_dense(&[vec![0.0, 1.5, 0.0], vec![1.5, 0.0, 0.25], vec![0.0, 0.25, 0.0]]).unwrap()
    }

    #[test]
    fn sparse_round_trip() {
        let meta = ArtifactMeta::new("abc").with("reached_order", 2).unwrap();
        let mut buf = Vec::new();
        write_sparse(&sample(), &meta, &mut buf).unwrap();
        let (m, back) = read_sparse_bytes(&buf, "mem").unwrap();
        assert_eq!(m, sample());
        assert_eq!(back, meta);
    }

    #[test]
    fn corruption_is_a_checksum_error() {
        let mut buf = Vec::new();
        write_sparse(&sample(), &ArtifactMeta::new("x"), &mut buf).unwrap();
        let mid = buf.len() / 2;
        buf[mid] ^= 1;
        assert!(matches!(read_sparse_bytes(&buf, "mem"), Err(Error::Checksum(_))));
        buf.truncate(10);
        assert!(read_sparse_bytes(&buf, "mem").is_err());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let mut buf = Vec::new();
        write_sparse(&sample(), &ArtifactMeta::new("x"), &mut buf).unwrap();
        assert!(matches!(read_embedding_bytes(&buf, "mem"), Err(Error::Format { .. })));
    }

    #[test]
    fn embedding_round_trips() {
        let e = EmbeddingMatrix::new(2, 3, vec![0.1, -0.2, 1e-17, 4.0, 5.5, -6.25]).unwrap();
        let mut buf = Vec::new();
        write_embedding(&e, &ArtifactMeta::new("f"), &mut buf).unwrap();
        assert_eq!(read_embedding_bytes(&buf, "mem").unwrap().0, e);

        let ids = IdMap { base: 1 };
        let mut text = Vec::new();
        write_embedding_text(&e, ids, &mut text).unwrap();
        assert!(String::from_utf8_lossy(&text).starts_with("2 3\n1 "));
        let back = read_embedding_text(text.as_slice(), ids, Path::new("mem")).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = fingerprint(&("k", 2)).unwrap();
        assert_eq!(a, fingerprint(&("k", 2)).unwrap());
        assert_ne!(a, fingerprint(&("k", 3)).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn triplets_use_raw_ids() {
        let mut out = Vec::new();
        write_triplets(&sample(), IdMap { base: 1 }, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().next(), Some("1 2 1.5"));
    }
}
