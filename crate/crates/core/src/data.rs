//! Criteo-style TSV ingestion: field schemas, frequency-thresholded feature
//! dictionaries, numeric normalization, sample encoding, and dataset files.
//!
//! Feature indices are laid out field by field. Field `f` owns the contiguous
//! range `offsets[f]..offsets[f + 1]`; the first index of each range is the
//! field default (the unknown feature for categorical fields, the single
//! value-carrying feature for numeric fields).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Numeric,
    Categorical,
}

/// Which raw columns are numeric and which are categorical.
///
/// Field `p` is read from TSV column `p + 1`; column 0 is the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSchema {
    pub n_fields: usize,
    pub numeric_fields: Vec<usize>,
    pub categorical_fields: Vec<usize>,
}

impl FieldSchema {
    pub fn new(numeric_fields: Vec<usize>, categorical_fields: Vec<usize>) -> Result<Self> {
        let n_fields = numeric_fields.len() + categorical_fields.len();
        if n_fields == 0 {
            return Err(Error::Config("schema must have at least one field".into()));
        }
        let mut seen = vec![false; n_fields];
        for &p in numeric_fields.iter().chain(&categorical_fields) {
            if p >= n_fields {
                return Err(Error::Config(format!(
                    "field position {p} outside 0..{n_fields}"
                )));
            }
            if seen[p] {
                return Err(Error::Config(format!("field position {p} listed twice")));
            }
            seen[p] = true;
        }
        Ok(FieldSchema {
            n_fields,
            numeric_fields,
            categorical_fields,
        })
    }

    /// `n_numeric` numeric fields followed by `n_categorical` categorical ones.
    pub fn leading_numeric(n_numeric: usize, n_categorical: usize) -> Result<Self> {
        Self::new(
            (0..n_numeric).collect(),
            (n_numeric..n_numeric + n_categorical).collect(),
        )
    }

    /// 13 count features then 26 categorical features.
    pub fn criteo() -> Self {
        Self::leading_numeric(13, 26).expect("static schema")
    }

    /// Avazu-style data has no numeric fields.
    pub fn all_categorical(n_fields: usize) -> Result<Self> {
        Self::leading_numeric(0, n_fields)
    }

    pub fn kind(&self, field: usize) -> FieldKind {
        if self.numeric_fields.contains(&field) {
            FieldKind::Numeric
        } else {
            FieldKind::Categorical
        }
    }

    fn kinds(&self) -> Vec<FieldKind> {
        (0..self.n_fields).map(|f| self.kind(f)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NumericTransform {
    /// Floor the squared log, as in the Criteo competition recipe.
    pub floor: bool,
    /// Map negative counts to zero instead of rejecting them.
    pub clamp_negative: bool,
}

/// `(ln x)²` when `x > 2`, identity otherwise.
pub fn transform_numeric(x: f64) -> Result<f64> {
    transform_numeric_with(x, NumericTransform::default())
}

pub fn transform_numeric_with(x: f64, opts: NumericTransform) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Input(format!("numeric value {x} is not finite")));
    }
    let x = if x < 0.0 {
        if opts.clamp_negative {
            0.0
        } else {
            return Err(Error::Input(format!("numeric value {x} is negative")));
        }
    } else {
        x
    };
    if x > 2.0 {
        let l = x.ln();
        let y = l * l;
        Ok(if opts.floor { y.floor() } else { y })
    } else {
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FieldEntry {
    kind: FieldKind,
    offset: usize,
    tokens: HashMap<String, usize>,
}

/// Per-field token → feature index maps with one default index per field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDictionary {
    fields: Vec<FieldEntry>,
    total_features: usize,
}

impl FeatureDictionary {
    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    /// `m`, including the per-field defaults.
    pub fn total_features(&self) -> usize {
        self.total_features
    }

    pub fn default_index(&self, field: usize) -> usize {
        self.fields[field].offset
    }

    /// Field ranges as `n + 1` offsets into `0..m`.
    pub fn field_offsets(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.fields.iter().map(|f| f.offset).collect();
        out.push(self.total_features);
        out
    }

    pub fn field_cardinality(&self, field: usize) -> usize {
        let next = self
            .fields
            .get(field + 1)
            .map_or(self.total_features, |f| f.offset);
        next - self.fields[field].offset
    }

    pub fn kind(&self, field: usize) -> FieldKind {
        self.fields[field].kind
    }

    pub fn lookup(&self, field: usize, token: &str) -> usize {
        let entry = &self.fields[field];
        match entry.kind {
            FieldKind::Numeric => entry.offset,
            FieldKind::Categorical => entry.tokens.get(token).copied().unwrap_or(entry.offset),
        }
    }

    /// Text form: one `field_id<TAB>token<TAB>index` line per entry, sorted by
    /// index. Defaults carry the empty token.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (f, entry) in self.fields.iter().enumerate() {
            let mut rows: Vec<(&str, usize)> = vec![("", entry.offset)];
            let mut toks: Vec<(&str, usize)> =
                entry.tokens.iter().map(|(t, &i)| (t.as_str(), i)).collect();
            toks.sort_by_key(|&(_, i)| i);
            rows.extend(toks);
            for (tok, idx) in rows {
                let _ = writeln!(out, "{f}\t{tok}\t{idx}");
            }
        }
        out
    }

    pub fn from_text(text: &str, schema: &FieldSchema) -> Result<Self> {
        let kinds = schema.kinds();
        let mut fields: Vec<FieldEntry> = Vec::with_capacity(schema.n_fields);
        let mut expected = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let row = lineno + 1;
            let mut parts = line.split('\t');
            let (Some(f), Some(tok), Some(idx), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Parse {
                    row,
                    msg: "expected field_id<TAB>token<TAB>index".into(),
                });
            };
            let parse = |s: &str, what: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    row,
                    msg: format!("bad {what} `{s}`"),
                })
            };
            let f = parse(f, "field id")?;
            let idx = parse(idx, "index")?;
            if idx != expected {
                return Err(Error::Parse {
                    row,
                    msg: format!("index {idx} out of order, expected {expected}"),
                });
            }
            expected += 1;
            if tok.is_empty() {
                if f != fields.len() || f >= kinds.len() {
                    return Err(Error::Parse {
                        row,
                        msg: format!("unexpected default entry for field {f}"),
                    });
                }
                fields.push(FieldEntry {
                    kind: kinds[f],
                    offset: idx,
                    tokens: HashMap::new(),
                });
            } else {
                let n_seen = fields.len();
                let entry = match fields.last_mut() {
                    Some(e) if f + 1 == n_seen && e.kind == FieldKind::Categorical => e,
                    _ => {
                        return Err(Error::Parse {
                            row,
                            msg: format!("token entry for field {f} out of place"),
                        })
                    }
                };
                entry.tokens.insert(tok.to_string(), idx);
            }
        }
        if fields.len() != schema.n_fields {
            return Err(Error::Parse {
                row: text.lines().count(),
                msg: format!(
                    "dictionary has {} fields, schema expects {}",
                    fields.len(),
                    schema.n_fields
                ),
            });
        }
        Ok(FeatureDictionary {
            fields,
            total_features: expected,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path, schema: &FieldSchema) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?, schema)
    }

    /// Short content hash used to tie checkpoints and datasets together.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Split one TSV line into label + `n_fields` columns.
pub fn split_row<'a>(line: &'a str, row: usize, schema: &FieldSchema) -> Result<Vec<&'a str>> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != schema.n_fields + 1 {
        return Err(Error::Parse {
            row,
            msg: format!(
                "expected {} columns, found {}",
                schema.n_fields + 1,
                cols.len()
            ),
        });
    }
    Ok(cols)
}

/// First pass over the raw rows: count tokens per categorical field, keep those
/// seen at least `min_freq` times.
pub fn build_dictionary<I, S>(rows: I, schema: &FieldSchema, min_freq: usize) -> Result<FeatureDictionary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if min_freq == 0 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    let kinds = schema.kinds();
    let mut counts: Vec<HashMap<String, usize>> = vec![HashMap::new(); schema.n_fields];
    for (i, line) in rows.into_iter().enumerate() {
        let cols = split_row(line.as_ref(), i + 1, schema)?;
        for (f, tok) in cols[1..].iter().enumerate() {
            if kinds[f] == FieldKind::Categorical && !tok.is_empty() {
                *counts[f].entry((*tok).to_string()).or_insert(0) += 1;
            }
        }
    }

    let mut fields = Vec::with_capacity(schema.n_fields);
    let mut next = 0usize;
    for (f, field_counts) in counts.into_iter().enumerate() {
        let offset = next;
        next += 1;
        let mut tokens = HashMap::new();
        if kinds[f] == FieldKind::Categorical {
            let kept: BTreeMap<String, usize> = field_counts
                .into_iter()
                .filter(|&(_, c)| c >= min_freq)
                .collect();
            for tok in kept.into_keys() {
                tokens.insert(tok, next);
                next += 1;
            }
        }
        fields.push(FieldEntry {
            kind: kinds[f],
            offset,
            tokens,
        });
    }
    Ok(FeatureDictionary {
        fields,
        total_features: next,
    })
}

/// One training or serving instance: exactly one active feature per field.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: u8,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn n_fields(&self) -> usize {
        self.indices.len()
    }
}

pub fn encode_sample(
    line: &str,
    row: usize,
    schema: &FieldSchema,
    dict: &FeatureDictionary,
    transform: NumericTransform,
) -> Result<Sample> {
    let cols = split_row(line, row, schema)?;
    let label = match cols[0].trim() {
        "0" => 0,
        "1" => 1,
        "" => {
            return Err(Error::Parse {
                row,
                msg: "missing label column".into(),
            })
        }
        other => {
            return Err(Error::Parse {
                row,
                msg: format!("label `{other}` is not 0 or 1"),
            })
        }
    };
    let mut indices = Vec::with_capacity(schema.n_fields);
    let mut values = Vec::with_capacity(schema.n_fields);
    for (f, tok) in cols[1..].iter().enumerate() {
        indices.push(dict.lookup(f, tok) as u32);
        let value = match dict.kind(f) {
            FieldKind::Categorical => 1.0,
            FieldKind::Numeric if tok.is_empty() => 0.0,
            FieldKind::Numeric => {
                let raw: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                    row,
                    msg: format!("field {f}: `{tok}` is not numeric"),
                })?;
                transform_numeric_with(raw, transform).map_err(|e| Error::Parse {
                    row,
                    msg: format!("field {f}: {e}"),
                })?
            }
        };
        values.push(value);
    }
    Ok(Sample {
        label,
        indices,
        values,
    })
}

/// Deterministic shuffled split; the train side gets `round(fraction · N)`.
pub fn split_dataset<T>(items: Vec<T>, train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::Input("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let n = items.len();
    let n_train = ((train_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (item, t) in items.into_iter().zip(is_train) {
        if t {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok((train, test))
}

/// Encoded samples plus the feature-space identity they were encoded against.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_fields: usize,
    pub n_features: usize,
    pub dictionary_hash: String,
    pub samples: Vec<Sample>,
}

const DATASET_MAGIC: &[u8; 8] = b"DLDSET01";

impl Dataset {
    /// Binary layout (little endian): magic, u32 n_fields, u64 n_features,
    /// u16-prefixed hash string, u64 count, then per sample a u8 label and
    /// `n_fields` pairs of (u32 index, f64 value).
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&(self.n_fields as u32).to_le_bytes())?;
        w.write_all(&(self.n_features as u64).to_le_bytes())?;
        w.write_all(&(self.dictionary_hash.len() as u16).to_le_bytes())?;
        w.write_all(self.dictionary_hash.as_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&[s.label])?;
            for (&i, &v) in s.indices.iter().zip(&s.values) {
                w.write_all(&i.to_le_bytes())?;
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Input("not an encoded dataset file".into()));
        }
        let n_fields = read_u32(&mut r)? as usize;
        let n_features = read_u64(&mut r)? as usize;
        let mut len = [0u8; 2];
        r.read_exact(&mut len)?;
        let mut hash = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut hash)?;
        let dictionary_hash =
            String::from_utf8(hash).map_err(|_| Error::Input("dataset hash is not UTF-8".into()))?;
        let count = read_u64(&mut r)? as usize;
        let mut samples = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let mut label = [0u8; 1];
            r.read_exact(&mut label)?;
            let mut indices = Vec::with_capacity(n_fields);
            let mut values = Vec::with_capacity(n_fields);
            for _ in 0..n_fields {
                indices.push(read_u32(&mut r)?);
                values.push(f64::from_bits(read_u64(&mut r)?));
            }
            samples.push(Sample {
                label: label[0],
                indices,
                values,
            });
        }
        Ok(Dataset {
            n_fields,
            n_features,
            dictionary_hash,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Read all non-empty lines of a TSV file.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}
