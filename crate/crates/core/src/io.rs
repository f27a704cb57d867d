//! File formats.
//!
//! All binary formats are little-endian.
//!
//! **FMAT** (dense or quantized features, weights):
//!
//! ```text
//! "FMAT" | version: u8 = 1 | dtype: u8 | n_rows: u64 | n_cols: u64
//!        | dtype 1 only: x_min: f32, x_max: f32
//!        | payload, row-major: f32 (dtype 0) or u8 codes (dtype 1)
//! ```
//!
//! **CSRB** (sparse graphs):
//!
//! ```text
//! "CSRB" | version: u8 = 1 | n_rows: u64 | n_cols: u64 | nnz: u64
//!        | row_ptr: u64 × (n_rows + 1) | col_ind: u32 × nnz | val: f32 × nnz
//! ```
//!
//! **Edge lists** are text: one `u v` or `u v w` per line, whitespace
//! separated, `#` starts a comment. Missing weights default to 1 and repeated
//! edges are summed.
//!
//! **Model manifests** are text: a `kind gcn|sage_mean` line followed by one
//! `layer <weight.fmat> [<bias.fmat>|-]` line per layer. Paths are relative
//! to the manifest.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::gnn::{GnnError, GnnModel, Layer, ModelKind};
use crate::graph::{CsrError, CsrMatrix, DenseError, DenseMatrix};
use crate::quantization::{Codes, QuantError, QuantParams, QuantizedFeatures};

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";
pub const CSRB_MAGIC: &[u8; 4] = b"CSRB";
pub const FORMAT_VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;
pub const DTYPE_U8_QUANTIZED: u8 = 1;

/// Header bytes of an FMAT file before the payload.
pub const fn fmat_header_len(dtype: u8) -> usize {
    4 + 1 + 1 + 8 + 8 + if dtype == DTYPE_U8_QUANTIZED { 8 } else { 0 }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u8),
    #[error("file is truncated")]
    TruncatedFile,
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("node {index} at line {line} is outside the declared {n_nodes} nodes")]
    IndexOutOfDeclaredRange { line: usize, index: usize, n_nodes: usize },
    #[error("dimension {0} does not fit in memory")]
    TooLarge(u64),
    #[error(transparent)]
    Csr(#[from] CsrError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Model(#[from] GnnError),
}

/// Maps a short read onto [`FormatError::TruncatedFile`].
fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), FormatError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::TruncatedFile,
        _ => FormatError::Io(e),
    })
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8, FormatError> {
    let mut b = [0u8; 1];
    read_exact_or_truncated(r, &mut b)?;
    Ok(b[0])
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, FormatError> {
    let mut b = [0u8; 8];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32, FormatError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn to_usize(v: u64) -> Result<usize, FormatError> {
    usize::try_from(v).map_err(|_| FormatError::TooLarge(v))
}

fn checked_len(a: usize, b: usize, elem: usize) -> Result<usize, FormatError> {
    a.checked_mul(b)
        .and_then(|n| n.checked_mul(elem))
        .ok_or(FormatError::TooLarge(a as u64))
}

fn read_magic<R: Read>(r: &mut R, expected: &[u8; 4]) -> Result<(), FormatError> {
    let mut found = [0u8; 4];
    read_exact_or_truncated(r, &mut found)?;
    if &found != expected {
        return Err(FormatError::BadMagic { found, expected: *expected });
    }
    let version = read_u8(r)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    Ok(())
}

fn read_payload<R: Read>(r: &mut R, len: usize) -> Result<Vec<u8>, FormatError> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(FormatError::TruncatedFile);
    }
    Ok(buf)
}

fn f32s_from_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Contents of an FMAT file.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(DenseMatrix),
    Quantized(QuantizedFeatures),
}

impl Features {
    pub fn n_rows(&self) -> usize {
        match self {
            Features::Dense(d) => d.n_rows(),
            Features::Quantized(q) => q.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            Features::Dense(d) => d.n_cols(),
            Features::Quantized(q) => q.n_cols(),
        }
    }

    /// Float features, dequantizing when needed.
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Features::Dense(d) => d.clone(),
            Features::Quantized(q) => crate::quantization::dequantize(q),
        }
    }

    pub fn into_dense(self) -> DenseMatrix {
        match self {
            Features::Dense(d) => d,
            Features::Quantized(q) => crate::quantization::dequantize(&q),
        }
    }
}

pub fn read_features<R: Read>(r: &mut R) -> Result<Features, FormatError> {
    read_magic(r, FMAT_MAGIC)?;
    let dtype = read_u8(r)?;
    let n_rows = to_usize(read_u64(r)?)?;
    let n_cols = to_usize(read_u64(r)?)?;
    match dtype {
        DTYPE_F32 => {
            let bytes = read_payload(r, checked_len(n_rows, n_cols, 4)?)?;
            Ok(Features::Dense(DenseMatrix::new(n_rows, n_cols, f32s_from_le(&bytes))?))
        }
        DTYPE_U8_QUANTIZED => {
            let x_min = read_f32(r)?;
            let x_max = read_f32(r)?;
            let params = QuantParams::new(x_min, x_max, 8)?;
            let codes = read_payload(r, checked_len(n_rows, n_cols, 1)?)?;
            Ok(Features::Quantized(QuantizedFeatures::new(n_rows, n_cols, Codes::U8(codes), params)?))
        }
        other => Err(FormatError::UnsupportedDtype(other)),
    }
}

pub fn write_dense<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<(), FormatError> {
    w.write_all(FMAT_MAGIC)?;
    w.write_all(&[FORMAT_VERSION, DTYPE_F32])?;
    w.write_all(&(m.n_rows() as u64).to_le_bytes())?;
    w.write_all(&(m.n_cols() as u64).to_le_bytes())?;
    let mut payload = Vec::with_capacity(m.data().len() * 4);
    for v in m.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

/// Writes 8-bit quantized features. Other bit widths have no FMAT dtype.
pub fn write_quantized<W: Write>(w: &mut W, q: &QuantizedFeatures) -> Result<(), FormatError> {
    let Codes::U8(codes) = q.codes() else {
        return Err(FormatError::Quant(QuantError::InvalidBits(q.params().bits())));
    };
    if q.params().bits() != 8 {
        return Err(FormatError::Quant(QuantError::InvalidBits(q.params().bits())));
    }
    w.write_all(FMAT_MAGIC)?;
    w.write_all(&[FORMAT_VERSION, DTYPE_U8_QUANTIZED])?;
    w.write_all(&(q.n_rows() as u64).to_le_bytes())?;
    w.write_all(&(q.n_cols() as u64).to_le_bytes())?;
    w.write_all(&q.params().x_min().to_le_bytes())?;
    w.write_all(&q.params().x_max().to_le_bytes())?;
    w.write_all(codes)?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Features, FormatError> {
    load_features_timed(path).map(|(f, _)| f)
}

/// Loads an FMAT file and reports the wall time spent reading and decoding
/// it.
pub fn load_features_timed(path: impl AsRef<Path>) -> Result<(Features, Duration), FormatError> {
    let start = Instant::now();
    let mut r = BufReader::new(File::open(path)?);
    let f = read_features(&mut r)?;
    Ok((f, start.elapsed()))
}

pub fn save_dense(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dense(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn save_quantized(path: impl AsRef<Path>, q: &QuantizedFeatures) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_quantized(&mut w, q)?;
    w.flush()?;
    Ok(())
}

pub fn read_csr<R: Read>(r: &mut R) -> Result<CsrMatrix, FormatError> {
    read_magic(r, CSRB_MAGIC)?;
    let n_rows = to_usize(read_u64(r)?)?;
    let n_cols = to_usize(read_u64(r)?)?;
    let nnz = to_usize(read_u64(r)?)?;
    let ptr_bytes = read_payload(r, checked_len(n_rows.saturating_add(1), 1, 8)?)?;
    let row_ptr = ptr_bytes
        .chunks_exact(8)
        .map(|c| to_usize(u64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect::<Result<Vec<_>, _>>()?;
    let col_bytes = read_payload(r, checked_len(nnz, 1, 4)?)?;
    let col_ind = col_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let val = f32s_from_le(&read_payload(r, checked_len(nnz, 1, 4)?)?);
    Ok(CsrMatrix::try_new(n_rows, n_cols, row_ptr, col_ind, val)?)
}

pub fn write_csr<W: Write>(w: &mut W, m: &CsrMatrix) -> Result<(), FormatError> {
    w.write_all(CSRB_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    for v in [m.n_rows(), m.n_cols(), m.nnz()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(m.row_ptr().len() * 8 + m.nnz() * 8);
    for &p in m.row_ptr() {
        buf.extend_from_slice(&(p as u64).to_le_bytes());
    }
    for &c in m.col_ind() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    for &v in m.val() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_csr(path: impl AsRef<Path>, m: &CsrMatrix) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csr(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Parses a text edge list. Without `n_nodes`, the node count is one more
/// than the largest index seen.
pub fn read_edge_list<R: BufRead>(r: R, n_nodes: Option<usize>) -> Result<CsrMatrix, FormatError> {
    let mut triplets = Vec::new();
    let mut max_index = None::<usize>;
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(FormatError::ParseError {
                line: line_no,
                msg: format!("expected `u v` or `u v w`, found {} fields", fields.len()),
            });
        }
        let parse_index = |s: &str| {
            s.parse::<usize>().map_err(|e| FormatError::ParseError {
                line: line_no,
                msg: format!("bad node index {s:?}: {e}"),
            })
        };
        let u = parse_index(fields[0])?;
        let v = parse_index(fields[1])?;
        let w = match fields.get(2) {
            Some(s) => s.parse::<f32>().ok().filter(|w| w.is_finite()).ok_or_else(|| {
                FormatError::ParseError { line: line_no, msg: format!("bad weight {s:?}") }
            })?,
            None => 1.0,
        };
        if let Some(n) = n_nodes {
            if let Some(&index) = [u, v].iter().find(|&&x| x >= n) {
                return Err(FormatError::IndexOutOfDeclaredRange { line: line_no, index, n_nodes: n });
            }
        }
        if u > u32::MAX as usize || v > u32::MAX as usize {
            return Err(FormatError::TooLarge(u.max(v) as u64));
        }
        max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
        triplets.push((u, v, w));
    }
    let n = n_nodes.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    Ok(CsrMatrix::from_triplets(n, n, triplets)?)
}

/// Graph file encodings accepted by [`load_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    EdgeListText,
    CsrBinary,
}

impl GraphFormat {
    /// `.csrb` files are binary, anything else is read as an edge list.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csrb") => GraphFormat::CsrBinary,
            _ => GraphFormat::EdgeListText,
        }
    }
}

pub fn load_graph(path: impl AsRef<Path>, format: GraphFormat) -> Result<CsrMatrix, FormatError> {
    let r = BufReader::new(File::open(path)?);
    match format {
        GraphFormat::EdgeListText => read_edge_list(r, None),
        GraphFormat::CsrBinary => read_csr(&mut { r }),
    }
}

/// One label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>, FormatError> {
    parse_lines(path, |s| s.parse::<usize>().map_err(|e| e.to_string()))
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// One `0` or `1` per line, selecting evaluated nodes.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Vec<bool>, FormatError> {
    parse_lines(path, |s| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("expected 0 or 1, found {other:?}")),
    })
}

fn parse_lines<T>(
    path: impl AsRef<Path>,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, FormatError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let s = line.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        out.push(parse(s).map_err(|msg| FormatError::ParseError { line: i + 1, msg })?);
    }
    Ok(out)
}

pub fn load_model(manifest: impl AsRef<Path>) -> Result<GnnModel, FormatError> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = std::fs::read_to_string(manifest)?;
    let mut kind = None;
    let mut layers = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split('#').next().unwrap_or("").split_whitespace().collect();
        let bad = |msg: String| FormatError::ParseError { line: line_no, msg };
        match fields.as_slice() {
            [] => {}
            ["kind", k] => kind = Some(k.parse::<ModelKind>().map_err(|e| bad(e.to_string()))?),
            ["layer", weight, rest @ ..] if rest.len() <= 1 => {
                let weight = load_features(base.join(weight))?.into_dense();
                let bias = match rest.first() {
                    None | Some(&"-") => None,
                    Some(b) => {
                        let b = load_features(base.join(b))?.into_dense();
                        if b.n_rows() != 1 {
                            return Err(bad(format!("bias must be 1xN, found {}x{}", b.n_rows(), b.n_cols())));
                        }
                        Some(b.into_data())
                    }
                };
                layers.push(Layer::new(weight, bias)?);
            }
            _ => return Err(bad(format!("unrecognized manifest line {line:?}"))),
        }
    }
    let kind = kind.ok_or(FormatError::ParseError { line: 0, msg: "missing `kind` line".into() })?;
    Ok(GnnModel::new(kind, layers)?)
}

/// Writes `<dir>/<stem>.model` plus one weight (and bias) FMAT per layer and
/// returns the manifest path.
pub fn save_model(dir: impl AsRef<Path>, stem: &str, model: &GnnModel) -> Result<PathBuf, FormatError> {
    let dir = dir.as_ref();
    let mut manifest = format!("kind {}\n", model.kind());
    for (i, layer) in model.layers().iter().enumerate() {
        let w_name = format!("{stem}_w{i}.fmat");
        save_dense(dir.join(&w_name), &layer.weight)?;
        let b_name = match &layer.bias {
            Some(b) => {
                let name = format!("{stem}_b{i}.fmat");
                save_dense(dir.join(&name), &DenseMatrix::new(1, b.len(), b.clone())?)?;
                name
            }
            None => "-".to_string(),
        };
        manifest.push_str(&format!("layer {w_name} {b_name}\n"));
    }
    let path = dir.join(format!("{stem}.model"));
    std::fs::write(&path, manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantization::{dequantize, fit_params, quantize};

    #[test]
    fn triangle_edge_list_with_comments() {
        let text = "# a directed triangle\n0 1\n1 2   # trailing comment\n\n2 0 2.5\n";
        let m = read_edge_list(text.as_bytes(), None).unwrap();
        assert_eq!((m.n_rows(), m.nnz()), (3, 3));
        assert_eq!(m.row(2), (&[0u32][..], &[2.5f32][..]));
    }

    #[test]
    fn edge_list_errors() {
        assert!(matches!(
            read_edge_list("0 1\n1\n".as_bytes(), None),
            Err(FormatError::ParseError { line: 2, .. })
        ));
        assert!(matches!(
            read_edge_list("0 x\n".as_bytes(), None),
            Err(FormatError::ParseError { line: 1, .. })
        ));
        assert!(matches!(
            read_edge_list("0 1\n0 5\n".as_bytes(), Some(4)),
            Err(FormatError::IndexOutOfDeclaredRange { line: 2, index: 5, n_nodes: 4 })
        ));
        let m = read_edge_list("0 1\n0 1 2\n".as_bytes(), Some(4)).unwrap();
        assert_eq!((m.n_rows(), m.val()), (4, &[3.0f32][..]));
    }

    #[test]
    fn fmat_dense_and_quantized() {
        let x = DenseMatrix::from_fn(4, 2, |i, j| i as f32 - j as f32 * 0.5);
        let mut buf = Vec::new();
        write_dense(&mut buf, &x).unwrap();
        assert_eq!(buf.len(), fmat_header_len(DTYPE_F32) + 32);
        assert_eq!(read_features(&mut buf.as_slice()).unwrap(), Features::Dense(x.clone()));

        let q = quantize(&x, fit_params(&x, 8).unwrap());
        let mut qbuf = Vec::new();
        write_quantized(&mut qbuf, &q).unwrap();
        assert_eq!(qbuf.len(), fmat_header_len(DTYPE_U8_QUANTIZED) + 8);
        let back = read_features(&mut qbuf.as_slice()).unwrap();
        assert!(back.to_dense().bit_eq(&dequantize(&q)));
    }

    #[test]
    fn fmat_errors() {
        let x = DenseMatrix::zeros(2, 2);
        let mut buf = Vec::new();
        write_dense(&mut buf, &x).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_features(&mut bad.as_slice()), Err(FormatError::BadMagic { .. })));
        let mut bad = buf.clone();
        bad[5] = 7;
        assert!(matches!(read_features(&mut bad.as_slice()), Err(FormatError::UnsupportedDtype(7))));
        let cut = &buf[..buf.len() - 1];
        assert!(matches!(read_features(&mut &cut[..]), Err(FormatError::TruncatedFile)));
        let cut = &buf[..10];
        assert!(matches!(read_features(&mut &cut[..]), Err(FormatError::TruncatedFile)));
    }

    #[test]
    fn csrb_round_trip_is_byte_identical() {
        let m = CsrMatrix::from_triplets(3, 4, [(0, 3, 1.0), (2, 0, -2.0), (2, 1, 0.5)]).unwrap();
        let mut a = Vec::new();
        write_csr(&mut a, &m).unwrap();
        let back = read_csr(&mut a.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut b = Vec::new();
        write_csr(&mut b, &back).unwrap();
        assert_eq!(a, b);
        assert!(matches!(read_csr(&mut &a[..a.len() - 3]), Err(FormatError::TruncatedFile)));
    }

    #[test]
    fn csrb_rejects_invalid_structure() {
        let bad = CsrMatrix::from_parts_unchecked(2, 2, vec![0, 2, 1], vec![0], vec![1.0]);
        let mut buf = Vec::new();
        write_csr(&mut buf, &bad).unwrap();
        assert!(matches!(
            read_csr(&mut buf.as_slice()),
            Err(FormatError::Csr(CsrError::NonMonotonicRowPtr { row: 2 }))
        ));
    }

    #[test]
    fn model_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let l0 = Layer::new(DenseMatrix::from_fn(3, 2, |i, j| (i + j) as f32), Some(vec![0.5, -0.5])).unwrap();
        let l1 = Layer::new(DenseMatrix::from_fn(2, 4, |i, j| (i * j) as f32), None).unwrap();
        let model = GnnModel::new(ModelKind::Gcn, vec![l0, l1]).unwrap();
        let path = save_model(dir.path(), "toy", &model).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);

        std::fs::write(dir.path().join("broken.model"), "layer toy_w0.fmat\n").unwrap();
        assert!(load_model(dir.path().join("broken.model")).is_err());
    }
}
