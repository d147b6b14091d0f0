//! Binary checkpoint format for dense (training) and compiled sparse models.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "DLCKPT\0\0"
//! version      u32      currently 1
//! kind         u8       0 = dense, 1 = sparse
//! metadata     u32 length + UTF-8 `key=value` lines, then u32 crc32
//! n_sections   u32
//! section*     see below
//! file crc32   u32      over every preceding byte
//! ```
//!
//! A section is `u16 name length, name, u8 encoding, u8 dtype, u64 rows,
//! u64 cols, u64 payload length, payload, u32 crc32` where the checksum
//! covers everything from the name length through the payload. Encodings:
//!
//! * `0` dense: `rows·cols` values, row-major.
//! * `1` crs: `rows+1` u64 row offsets, `nnz` u32 columns, `nnz` values.
//! * `2` sparse-rows: per row a count then `count` (column, value) pairs.
//!   Counts and columns are u8 when `cols ≤ 255`, u16 when `cols ≤ 65535`,
//!   u32 otherwise.
//!
//! `dtype` is `0` for f64 and `1` for f32. The writer picks the smallest
//! encoding per tensor; omitted entries are exactly `+0.0`, so dense tensors
//! survive a round trip bit for bit at f64.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Matrix, Model, ModelConfig, ModelKind, Params};
use crate::training::{AdamState, TrainState};

use super::compile::{PairList, SparseLayer, SparseModel};
use super::crs::{to_crs, CrsMatrix};

pub const MAGIC: &[u8; 8] = b"DLCKPT\0\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    /// Halves value storage; values are rounded, so round trips are lossy.
    F32,
}

impl Precision {
    fn code(self) -> u8 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Dense,
    Crs,
    SparseRows,
}

/// Free-form metadata stored next to the tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub dictionary_hash: Option<String>,
    pub epochs_completed: usize,
    /// Extra `key=value` entries, e.g. the effective run configuration.
    pub extra: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Dense {
        model: Model,
        state: Option<TrainState>,
        meta: CheckpointMeta,
    },
    Sparse {
        model: SparseModel,
        meta: CheckpointMeta,
    },
}

impl Checkpoint {
    pub fn meta(&self) -> &CheckpointMeta {
        match self {
            Checkpoint::Dense { meta, .. } | Checkpoint::Sparse { meta, .. } => meta,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Checkpoint::Dense { model, .. } => &model.config,
            Checkpoint::Sparse { model, .. } => &model.config,
        }
    }
}

// ---- writing ----

struct Writer {
    buf: Vec<u8>,
    precision: Precision,
}

fn uint_width(cols: usize) -> usize {
    if cols <= u8::MAX as usize + 1 {
        1
    } else if cols <= u16::MAX as usize + 1 {
        2
    } else {
        4
    }
}

fn put_uint(buf: &mut Vec<u8>, v: usize, width: usize) {
    match width {
        1 => buf.push(v as u8),
        2 => buf.extend_from_slice(&(v as u16).to_le_bytes()),
        _ => buf.extend_from_slice(&(v as u32).to_le_bytes()),
    }
}

impl Writer {
    fn new(precision: Precision) -> Self {
        Writer {
            buf: Vec::new(),
            precision,
        }
    }

    fn value(&self, out: &mut Vec<u8>, v: f64) {
        match self.precision {
            Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
            Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }

    fn section(&mut self, name: &str, enc: Encoding, rows: usize, cols: usize, payload: &[u8]) {
        let start = self.buf.len();
        self.buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        self.buf.extend_from_slice(name.as_bytes());
        self.buf.push(match enc {
            Encoding::Dense => 0,
            Encoding::Crs => 1,
            Encoding::SparseRows => 2,
        });
        self.buf.push(self.precision.code());
        self.buf.extend_from_slice(&(rows as u64).to_le_bytes());
        self.buf.extend_from_slice(&(cols as u64).to_le_bytes());
        self.buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        self.buf.extend_from_slice(payload);
        let crc = crc32fast::hash(&self.buf[start..]);
        self.buf.extend_from_slice(&crc.to_le_bytes());
    }

    fn dense_payload(&self, data: &[f64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len() * self.precision.width());
        for &v in data {
            self.value(&mut out, v);
        }
        out
    }

    fn crs_payload(&self, m: &CrsMatrix) -> Vec<u8> {
        let mut out = Vec::new();
        for &p in &m.row_ptr {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for &c in &m.col_idx {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for &v in &m.values {
            self.value(&mut out, v);
        }
        out
    }

    fn rows_payload(&self, m: &CrsMatrix) -> Vec<u8> {
        let w = uint_width(m.n_cols);
        let mut out = Vec::new();
        for r in 0..m.n_rows {
            let (cols, vals) = m.row(r);
            put_uint(&mut out, cols.len(), w);
            for (&c, &v) in cols.iter().zip(vals) {
                put_uint(&mut out, c as usize, w);
                self.value(&mut out, v);
            }
        }
        out
    }

    fn sparse_sizes(&self, m: &CrsMatrix) -> (usize, usize) {
        let vw = self.precision.width();
        let crs = 8 * (m.n_rows + 1) + m.nnz() * (4 + vw);
        let w = uint_width(m.n_cols);
        let rows = m.n_rows * w + m.nnz() * (w + vw);
        (crs, rows)
    }

    /// Sparse structure: CRS or sparse-rows, whichever is smaller.
    fn sparse_tensor(&mut self, name: &str, m: &CrsMatrix) {
        let (crs, rows) = self.sparse_sizes(m);
        if rows <= crs {
            let p = self.rows_payload(m);
            self.section(name, Encoding::SparseRows, m.n_rows, m.n_cols, &p);
        } else {
            let p = self.crs_payload(m);
            self.section(name, Encoding::Crs, m.n_rows, m.n_cols, &p);
        }
    }

    /// Dense tensor, stored sparsely when that is smaller.
    fn dense_tensor(&mut self, name: &str, rows: usize, cols: usize, data: &[f64]) {
        let explicit = data.iter().filter(|v| v.to_bits() != 0).count();
        let vw = self.precision.width();
        let dense = data.len() * vw;
        let w = uint_width(cols);
        let rows_size = rows * w + explicit * (w + vw);
        let crs_size = 8 * (rows + 1) + explicit * (4 + vw);
        if dense <= rows_size.min(crs_size) {
            let p = self.dense_payload(data);
            self.section(name, Encoding::Dense, rows, cols, &p);
        } else {
            let m = bits_crs(rows, cols, data);
            self.sparse_tensor(name, &m);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

/// CRS that keeps every entry whose bit pattern is not `+0.0`.
fn bits_crs(rows: usize, cols: usize, data: &[f64]) -> CrsMatrix {
    let mut m = CrsMatrix::empty(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = data[r * cols + c];
            if v.to_bits() != 0 {
                m.col_idx.push(c as u32);
                m.values.push(v);
            }
        }
        m.row_ptr[r + 1] = m.values.len();
    }
    m
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn metadata_text(config: &ModelConfig, meta: &CheckpointMeta, adam: Option<&AdamState>) -> String {
    let mut s = String::new();
    s.push_str(&format!("model.kind={}\n", config.kind));
    s.push_str(&format!("model.embed_dim={}\n", config.embed_dim));
    s.push_str(&format!("model.mlp_widths={}\n", join(&config.mlp_widths)));
    s.push_str(&format!("model.dropout_rate={:?}\n", config.dropout_rate));
    s.push_str(&format!("model.field_offsets={}\n", join(&config.field_offsets)));
    if let Some(h) = &meta.dictionary_hash {
        s.push_str(&format!("dictionary_hash={h}\n"));
    }
    s.push_str(&format!("epochs_completed={}\n", meta.epochs_completed));
    if let Some(a) = adam {
        s.push_str(&format!("adam.t={}\n", a.t));
        s.push_str(&format!("adam.beta1={:?}\n", a.beta1));
        s.push_str(&format!("adam.beta2={:?}\n", a.beta2));
        s.push_str(&format!("adam.eps={:?}\n", a.eps));
    }
    for (k, v) in &meta.extra {
        s.push_str(&format!("extra.{k}={v}\n"));
    }
    s
}

fn header(w: &mut Writer, kind: u8, metadata: &str, n_sections: usize) {
    w.buf.extend_from_slice(MAGIC);
    w.buf.extend_from_slice(&VERSION.to_le_bytes());
    w.buf.push(kind);
    w.buf.extend_from_slice(&(metadata.len() as u32).to_le_bytes());
    w.buf.extend_from_slice(metadata.as_bytes());
    w.buf.extend_from_slice(&crc32fast::hash(metadata.as_bytes()).to_le_bytes());
    w.buf.extend_from_slice(&(n_sections as u32).to_le_bytes());
}

fn check_meta(meta: &CheckpointMeta) -> Result<()> {
    for (k, v) in &meta.extra {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::Input(format!("metadata entry `{k}` contains '=' or a newline")));
        }
    }
    if meta.dictionary_hash.as_deref().is_some_and(|h| h.contains('\n')) {
        return Err(Error::Input("dictionary hash contains a newline".into()));
    }
    Ok(())
}

/// Serialize a dense model, optionally with its optimizer state.
pub fn encode_dense(model: &Model, state: Option<&TrainState>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    check_meta(meta)?;
    let mut meta = meta.clone();
    if let Some(s) = state {
        meta.epochs_completed = s.epochs_completed;
        if !s.adam.m.same_shape(&model.params) || !s.adam.v.same_shape(&model.params) {
            return Err(Error::Shape("optimizer state does not match the model".into()));
        }
    }
    let text = metadata_text(&model.config, &meta, state.map(|s| &s.adam));
    let tensors = model.params.tensors();
    let n_sections = tensors.len() * if state.is_some() { 3 } else { 1 };
    let mut w = Writer::new(Precision::F64);
    header(&mut w, 0, &text, n_sections);
    for t in &tensors {
        w.dense_tensor(&t.role.name(), t.rows, t.cols, t.data);
    }
    if let Some(s) = state {
        for (prefix, p) in [("adam.m.", &s.adam.m), ("adam.v.", &s.adam.v)] {
            for t in p.tensors() {
                w.dense_tensor(&format!("{prefix}{}", t.role.name()), t.rows, t.cols, t.data);
            }
        }
    }
    Ok(w.finish())
}

/// Serialize a compiled sparse model.
pub fn encode_sparse(model: &SparseModel, meta: &CheckpointMeta, precision: Precision) -> Result<Vec<u8>> {
    check_meta(meta)?;
    let text = metadata_text(&model.config, meta, None);
    let mut w = Writer::new(precision);
    let fwfm = matches!(model.config.kind, ModelKind::FwFm | ModelKind::DeepFwFm);
    let n_sections = 2 + if fwfm { 2 + 2 * (model.mlp.len() + model.output.is_some() as usize) } else { 1 };
    header(&mut w, 1, &text, n_sections);
    w.dense_tensor("w0", 1, 1, &[model.w0]);
    w.sparse_tensor("embeddings", &model.embeddings);
    if fwfm {
        let fv = &model.field_vectors;
        w.dense_tensor("field_vectors", fv.rows, fv.cols, &fv.data);
        let pairs = to_crs(&model.pairs.to_field_matrix(model.config.n_fields));
        w.sparse_tensor("field_pairs", &pairs);
        for (i, l) in model.mlp.iter().enumerate() {
            w.sparse_tensor(&format!("mlp.{i}.weight"), &l.weight);
            w.dense_tensor(&format!("mlp.{i}.bias"), 1, l.bias.len(), &l.bias);
        }
        if let Some(l) = &model.output {
            w.sparse_tensor("output.weight", &l.weight);
            w.dense_tensor("output.bias", 1, l.bias.len(), &l.bias);
        }
    } else {
        w.dense_tensor("linear", 1, model.linear.len(), &model.linear);
    }
    Ok(w.finish())
}

pub fn save_dense(path: &Path, model: &Model, state: Option<&TrainState>, meta: &CheckpointMeta) -> Result<()> {
    std::fs::write(path, encode_dense(model, state, meta)?)?;
    Ok(())
}

pub fn save_sparse(path: &Path, model: &SparseModel, meta: &CheckpointMeta, precision: Precision) -> Result<()> {
    std::fs::write(path, encode_sparse(model, meta, precision)?)?;
    Ok(())
}

// ---- reading ----

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: String,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::checkpoint(self.section.clone(), msg)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err("file is truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// A decoded section before it is matched to a model slot.
struct RawTensor {
    rows: usize,
    cols: usize,
    dense: Option<Vec<f64>>,
    sparse: Option<CrsMatrix>,
}

impl RawTensor {
    fn into_dense(self) -> Vec<f64> {
        match (self.dense, self.sparse) {
            (Some(d), _) => d,
            (None, Some(m)) => {
                let mut d = vec![0.0; self.rows * self.cols];
                for r in 0..m.n_rows {
                    let (cols, vals) = m.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        d[r * self.cols + c as usize] = v;
                    }
                }
                d
            }
            (None, None) => unreachable!(),
        }
    }
}

struct PayloadCursor<'a> {
    data: &'a [u8],
    pos: usize,
    dtype: u8,
}

impl PayloadCursor<'_> {
    fn bytes(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.data.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn value(&mut self) -> Option<f64> {
        if self.dtype == 0 {
            Some(f64::from_le_bytes(self.bytes(8)?.try_into().ok()?))
        } else {
            Some(f32::from_le_bytes(self.bytes(4)?.try_into().ok()?) as f64)
        }
    }

    fn uint(&mut self, width: usize) -> Option<usize> {
        Some(match width {
            1 => self.bytes(1)?[0] as usize,
            2 => u16::from_le_bytes(self.bytes(2)?.try_into().ok()?) as usize,
            _ => u32::from_le_bytes(self.bytes(4)?.try_into().ok()?) as usize,
        })
    }
}

fn decode_payload(enc: u8, dtype: u8, rows: usize, cols: usize, payload: &[u8]) -> std::result::Result<RawTensor, String> {
    let bad = || "payload is malformed".to_string();
    let mut c = PayloadCursor {
        data: payload,
        pos: 0,
        dtype,
    };
    let t = match enc {
        0 => {
            let n = rows.checked_mul(cols).ok_or_else(bad)?;
            let mut d = Vec::with_capacity(n);
            for _ in 0..n {
                d.push(c.value().ok_or_else(bad)?);
            }
            RawTensor {
                rows,
                cols,
                dense: Some(d),
                sparse: None,
            }
        }
        1 => {
            let mut m = CrsMatrix::empty(rows, cols);
            for p in m.row_ptr.iter_mut() {
                *p = u64::from_le_bytes(c.bytes(8).ok_or_else(bad)?.try_into().unwrap()) as usize;
            }
            let nnz = *m.row_ptr.last().unwrap();
            if nnz > payload.len() {
                return Err(bad());
            }
            for _ in 0..nnz {
                m.col_idx.push(u32::from_le_bytes(c.bytes(4).ok_or_else(bad)?.try_into().unwrap()));
            }
            for _ in 0..nnz {
                m.values.push(c.value().ok_or_else(bad)?);
            }
            m.validate().map_err(|e| e.to_string())?;
            RawTensor {
                rows,
                cols,
                dense: None,
                sparse: Some(m),
            }
        }
        2 => {
            let w = uint_width(cols);
            let mut m = CrsMatrix::empty(rows, cols);
            for r in 0..rows {
                let count = c.uint(w).ok_or_else(bad)?;
                for _ in 0..count {
                    m.col_idx.push(c.uint(w).ok_or_else(bad)? as u32);
                    m.values.push(c.value().ok_or_else(bad)?);
                }
                m.row_ptr[r + 1] = m.values.len();
            }
            m.validate().map_err(|e| e.to_string())?;
            RawTensor {
                rows,
                cols,
                dense: None,
                sparse: Some(m),
            }
        }
        other => return Err(format!("unknown encoding {other}")),
    };
    if c.pos != payload.len() {
        return Err("payload has trailing bytes".into());
    }
    Ok(t)
}

struct Parsed {
    kind: u8,
    meta: Vec<(String, String)>,
    sections: Vec<(String, RawTensor)>,
}

fn parse(buf: &[u8]) -> Result<Parsed> {
    let mut r = Reader {
        buf,
        pos: 0,
        section: "header".into(),
    };
    if r.take(8)? != MAGIC {
        return Err(r.err("bad magic; not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}; expected {VERSION}")));
    }
    let kind = r.u8()?;
    if kind > 1 {
        return Err(r.err(format!("unknown checkpoint kind {kind}")));
    }
    r.section = "metadata".into();
    let len = r.u32()? as usize;
    let text = r.take(len)?;
    if r.u32()? != crc32fast::hash(text) {
        return Err(r.err("checksum mismatch"));
    }
    let text = std::str::from_utf8(text).map_err(|_| r.err("metadata is not UTF-8"))?;
    let mut meta = Vec::new();
    for line in text.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| r.err(format!("bad metadata line `{line}`")))?;
        meta.push((k.to_string(), v.to_string()));
    }
    r.section = "section table".into();
    let n = r.u32()? as usize;
    let mut sections = Vec::new();
    for i in 0..n {
        r.section = format!("section #{i}");
        let start = r.pos;
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.err("section name is not UTF-8"))?
            .to_string();
        r.section = name.clone();
        let enc = r.u8()?;
        let dtype = r.u8()?;
        if dtype > 1 {
            return Err(r.err(format!("unknown dtype {dtype}")));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let plen = r.u64()? as usize;
        let payload = r.take(plen)?;
        let end = r.pos;
        if r.u32()? != crc32fast::hash(&buf[start..end]) {
            return Err(r.err("checksum mismatch"));
        }
        let t = decode_payload(enc, dtype, rows, cols, payload).map_err(|m| r.err(m))?;
        sections.push((name, t));
    }
    r.section = "trailer".into();
    let body = r.pos;
    let crc = r.u32()?;
    if crc != crc32fast::hash(&buf[..body]) {
        return Err(r.err("file checksum mismatch"));
    }
    if r.pos != buf.len() {
        return Err(r.err("trailing bytes after checksum"));
    }
    Ok(Parsed { kind, meta, sections })
}

fn meta_get<'a>(meta: &'a [(String, String)], key: &str) -> Result<&'a str> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::checkpoint("metadata", format!("missing key `{key}`")))
}

fn meta_parse<T: std::str::FromStr>(meta: &[(String, String)], key: &str) -> Result<T> {
    meta_get(meta, key)?
        .parse()
        .map_err(|_| Error::checkpoint("metadata", format!("bad value for `{key}`")))
}

fn meta_list(meta: &[(String, String)], key: &str) -> Result<Vec<usize>> {
    let v = meta_get(meta, key)?;
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|x| x.parse().map_err(|_| Error::checkpoint("metadata", format!("bad value for `{key}`"))))
        .collect()
}

fn decode_meta(meta: &[(String, String)]) -> Result<(ModelConfig, CheckpointMeta)> {
    let kind: ModelKind = meta_parse(meta, "model.kind")?;
    let field_offsets = meta_list(meta, "model.field_offsets")?;
    let config = ModelConfig {
        kind,
        n_fields: field_offsets.len().saturating_sub(1),
        embed_dim: meta_parse(meta, "model.embed_dim")?,
        mlp_widths: meta_list(meta, "model.mlp_widths")?,
        dropout_rate: meta_parse(meta, "model.dropout_rate")?,
        field_offsets,
    };
    config
        .validate()
        .map_err(|e| Error::checkpoint("metadata", format!("invalid model config: {e}")))?;
    let cm = CheckpointMeta {
        dictionary_hash: meta_get(meta, "dictionary_hash").ok().map(str::to_string),
        epochs_completed: meta_parse(meta, "epochs_completed")?,
        extra: meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("extra.").map(|k| (k.to_string(), v.clone())))
            .collect(),
    };
    Ok((config, cm))
}

type Sections = Vec<(String, RawTensor)>;

fn take_section(sections: &mut Sections, name: &str, rows: usize, cols: usize) -> Result<RawTensor> {
    let i = sections
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::checkpoint(name, "section is missing"))?;
    let (_, t) = sections.swap_remove(i);
    if t.rows != rows || t.cols != cols {
        return Err(Error::checkpoint(
            name,
            format!("shape {}x{} does not match expected {rows}x{cols}", t.rows, t.cols),
        ));
    }
    Ok(t)
}

fn fill_params(params: &mut Params, prefix: &str, sections: &mut Sections) -> Result<()> {
    for t in params.tensors_mut() {
        let name = format!("{prefix}{}", t.role.name());
        let raw = take_section(sections, &name, t.rows, t.cols)?;
        t.data.copy_from_slice(&raw.into_dense());
    }
    Ok(())
}

fn sparse_of(raw: RawTensor, name: &str) -> Result<CrsMatrix> {
    match raw.sparse {
        Some(m) => Ok(m),
        None => Err(Error::checkpoint(name, "expected a sparse encoding")),
    }
}

fn decode_sparse(config: ModelConfig, sections: &mut Sections) -> Result<SparseModel> {
    let n = config.n_fields;
    let m = config.n_features();
    let fwfm = matches!(config.kind, ModelKind::FwFm | ModelKind::DeepFwFm);
    let k = if config.kind == ModelKind::Lr { 0 } else { config.embed_dim };
    let w0 = take_section(sections, "w0", 1, 1)?.into_dense()[0];
    let embeddings = sparse_of(take_section(sections, "embeddings", m, k)?, "embeddings")?;
    let mut model = SparseModel {
        config,
        w0,
        linear: Vec::new(),
        embeddings,
        field_vectors: Matrix::zeros(0, 0),
        pairs: PairList::default(),
        mlp: Vec::new(),
        output: None,
    };
    if !fwfm {
        model.linear = take_section(sections, "linear", 1, m)?.into_dense();
        return Ok(model);
    }
    let fv = take_section(sections, "field_vectors", n, k)?.into_dense();
    model.field_vectors = Matrix {
        rows: n,
        cols: k,
        data: fv,
    };
    let pairs = sparse_of(take_section(sections, "field_pairs", n, n)?, "field_pairs")?;
    for a in 0..n {
        let (cols, vals) = pairs.row(a);
        for (&b, &w) in cols.iter().zip(vals) {
            if b as usize <= a || w == 0.0 {
                return Err(Error::checkpoint("field_pairs", "pairs must satisfy F < F' with nonzero weight"));
            }
            model.pairs.pairs.push(super::compile::FieldPair { a: a as u32, b, weight: w });
        }
    }
    if model.config.kind == ModelKind::DeepFwFm {
        let mut width = n * k;
        let widths = model.config.mlp_widths.clone();
        let layer = |name: String, n_in: usize, n_out: usize, sections: &mut Sections| -> Result<SparseLayer> {
            let wname = format!("{name}.weight");
            let weight = sparse_of(take_section(sections, &wname, n_out, n_in)?, &wname)?;
            let bias = take_section(sections, &format!("{name}.bias"), 1, n_out)?.into_dense();
            Ok(SparseLayer { weight, bias })
        };
        for (i, &h) in widths.iter().enumerate() {
            model.mlp.push(layer(format!("mlp.{i}"), width, h, sections)?);
            width = h;
        }
        model.output = Some(layer("output".into(), width, 1, sections)?);
    }
    Ok(model)
}

/// Decode a checkpoint held in memory.
pub fn decode(buf: &[u8]) -> Result<Checkpoint> {
    let Parsed { kind, meta, mut sections } = parse(buf)?;
    let (config, mut cmeta) = decode_meta(&meta)?;
    let ck = if kind == 0 {
        let mut params = Params::zeros(&config);
        fill_params(&mut params, "", &mut sections)?;
        let model = Model { config, params };
        let state = if meta_get(&meta, "adam.t").is_ok() {
            let mut adam = AdamState::new(&model.params);
            adam.t = meta_parse(&meta, "adam.t")?;
            adam.beta1 = meta_parse(&meta, "adam.beta1")?;
            adam.beta2 = meta_parse(&meta, "adam.beta2")?;
            adam.eps = meta_parse(&meta, "adam.eps")?;
            fill_params(&mut adam.m, "adam.m.", &mut sections)?;
            fill_params(&mut adam.v, "adam.v.", &mut sections)?;
            Some(TrainState {
                adam,
                epochs_completed: cmeta.epochs_completed,
            })
        } else {
            None
        };
        Checkpoint::Dense {
            model,
            state,
            meta: std::mem::take(&mut cmeta),
        }
    } else {
        Checkpoint::Sparse {
            model: decode_sparse(config, &mut sections)?,
            meta: cmeta,
        }
    };
    if let Some((name, _)) = sections.first() {
        return Err(Error::checkpoint(name.clone(), "unexpected section"));
    }
    Ok(ck)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path)?;
    decode(&buf)
}
