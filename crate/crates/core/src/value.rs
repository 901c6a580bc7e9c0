//! Attribute types, scalar values, schemas and the fixed-width columns that
//! make up a PAX block.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Physical type of an attribute. Every type has a fixed byte width so that
/// any row of a column can be addressed by offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttrType {
    Int64,
    Float64,
    /// Zero-padded UTF-8 string occupying exactly `n` bytes.
    FixedStr(u16),
}

impl AttrType {
    pub fn width(self) -> usize {
        match self {
            AttrType::Int64 | AttrType::Float64 => 8,
            AttrType::FixedStr(n) => n as usize,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            AttrType::Int64 => 1,
            AttrType::Float64 => 2,
            AttrType::FixedStr(_) => 3,
        }
    }
}

impl fmt::Display for AttrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrType::Int64 => f.write_str("int64"),
            AttrType::Float64 => f.write_str("float64"),
            AttrType::FixedStr(n) => write!(f, "str{n}"),
        }
    }
}

impl FromStr for AttrType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "int64" | "i64" => Ok(AttrType::Int64),
            "float64" | "f64" => Ok(AttrType::Float64),
            _ => {
                let width = s
                    .strip_prefix("str")
                    .and_then(|w| w.parse::<u16>().ok())
                    .filter(|w| *w > 0)
                    .ok_or_else(|| Error::schema(format!("unknown attribute type `{s}`")))?;
                Ok(AttrType::FixedStr(width))
            }
        }
    }
}

impl Serialize for AttrType {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AttrType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: AttrType,
}

impl Attribute {
    pub fn new(name: impl Into<String>, ty: AttrType) -> Self {
        Self { name: name.into(), ty }
    }
}

/// Ordered, non-empty list of uniquely named attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct Schema {
    attributes: Vec<Attribute>,
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::schema("schema must have at least one attribute"));
        }
        for (i, a) in attributes.iter().enumerate() {
            if a.name.is_empty() || a.name.contains(['/', '\\', ',', ':']) || a.name.starts_with('.') {
                return Err(Error::schema(format!("invalid attribute name `{}`", a.name)));
            }
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::schema(format!("duplicate attribute `{}`", a.name)));
            }
        }
        Ok(Self { attributes })
    }

    /// A schema that may be empty; used for projected blocks that carry no
    /// columns at all.
    pub(crate) fn projected(attributes: Vec<Attribute>) -> Self {
        Self { attributes }
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Attribute> {
        self.attribute(name)
            .ok_or_else(|| Error::schema(format!("unknown attribute `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    /// Bytes per row across all attributes.
    pub fn row_width(&self) -> usize {
        self.attributes.iter().map(|a| a.ty.width()).sum()
    }
}

impl TryFrom<Vec<Attribute>> for Schema {
    type Error = Error;

    fn try_from(v: Vec<Attribute>) -> Result<Self> {
        Schema::new(v)
    }
}

impl From<Schema> for Vec<Attribute> {
    fn from(s: Schema) -> Self {
        s.attributes
    }
}

/// A single attribute value. Ordering is total: floats use IEEE total order
/// and strings compare bytewise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Float(_) => 1,
            Value::Str(_) => 2,
        }
    }

    /// Coerces a JSON-ish value into the representation used by `ty`.
    pub fn coerce(self, ty: AttrType) -> Result<Value> {
        match (ty, self) {
            (AttrType::Int64, Value::Int(v)) => Ok(Value::Int(v)),
            (AttrType::Int64, Value::Float(v)) if v.fract() == 0.0 => Ok(Value::Int(v as i64)),
            (AttrType::Float64, Value::Float(v)) => Ok(Value::Float(v)),
            (AttrType::Float64, Value::Int(v)) => Ok(Value::Float(v as f64)),
            (AttrType::FixedStr(_), Value::Str(s)) => Ok(Value::Str(s)),
            (ty, v) => Err(Error::schema(format!("value {v} does not fit type {ty}"))),
        }
    }

    pub fn parse(text: &str, ty: AttrType) -> Result<Value> {
        let bad = || Error::schema(format!("cannot parse `{text}` as {ty}"));
        match ty {
            AttrType::Int64 => text.trim().parse().map(Value::Int).map_err(|_| bad()),
            AttrType::Float64 => text.trim().parse().map(Value::Float).map_err(|_| bad()),
            AttrType::FixedStr(n) => {
                if text.len() > n as usize || text.as_bytes().contains(&0) {
                    return Err(bad());
                }
                Ok(Value::Str(text.to_owned()))
            }
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Str(a), Value::Str(b)) => a.as_bytes().cmp(b.as_bytes()),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Int(v) => v.hash(state),
            Value::Float(v) => v.to_bits().hash(state),
            Value::Str(s) => s.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

/// Contiguous values of one attribute.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    /// `data.len() == width * rows`; each slot is zero-padded.
    FixedStr { width: u16, data: Vec<u8> },
}

impl Column {
    pub fn empty(ty: AttrType) -> Self {
        Self::with_capacity(ty, 0)
    }

    pub fn with_capacity(ty: AttrType, rows: usize) -> Self {
        match ty {
            AttrType::Int64 => Column::Int64(Vec::with_capacity(rows)),
            AttrType::Float64 => Column::Float64(Vec::with_capacity(rows)),
            AttrType::FixedStr(width) => Column::FixedStr {
                width,
                data: Vec::with_capacity(rows * width as usize),
            },
        }
    }

    pub fn from_values(ty: AttrType, values: &[Value]) -> Result<Self> {
        let mut col = Self::with_capacity(ty, values.len());
        for v in values {
            col.push(v)?;
        }
        Ok(col)
    }

    pub fn attr_type(&self) -> AttrType {
        match self {
            Column::Int64(_) => AttrType::Int64,
            Column::Float64(_) => AttrType::Float64,
            Column::FixedStr { width, .. } => AttrType::FixedStr(*width),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Int64(v) => v.len(),
            Column::Float64(v) => v.len(),
            Column::FixedStr { width, data } => data.len() / *width as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_len(&self) -> usize {
        self.len() * self.attr_type().width()
    }

    pub fn push(&mut self, value: &Value) -> Result<()> {
        match (self, value) {
            (Column::Int64(v), Value::Int(x)) => v.push(*x),
            (Column::Float64(v), Value::Float(x)) => v.push(*x),
            (Column::Float64(v), Value::Int(x)) => v.push(*x as f64),
            (Column::FixedStr { width, data }, Value::Str(s)) => {
                let w = *width as usize;
                if s.len() > w {
                    return Err(Error::schema(format!("string `{s}` exceeds width {w}")));
                }
                data.extend_from_slice(s.as_bytes());
                data.resize(data.len() + w - s.len(), 0);
            }
            (col, v) => {
                return Err(Error::schema(format!(
                    "value {v} does not fit column of type {}",
                    col.attr_type()
                )))
            }
        }
        Ok(())
    }

    fn str_slot(data: &[u8], width: u16, i: usize) -> &[u8] {
        let w = width as usize;
        let slot = &data[i * w..(i + 1) * w];
        let end = slot.iter().rposition(|b| *b != 0).map_or(0, |p| p + 1);
        &slot[..end]
    }

    pub fn value(&self, i: usize) -> Value {
        match self {
            Column::Int64(v) => Value::Int(v[i]),
            Column::Float64(v) => Value::Float(v[i]),
            Column::FixedStr { width, data } => {
                Value::Str(String::from_utf8_lossy(Self::str_slot(data, *width, i)).into_owned())
            }
        }
    }

    /// Compares row `i` against `key` without materialising the row value.
    pub fn cmp_at(&self, i: usize, key: &Value) -> Ordering {
        match (self, key) {
            (Column::Int64(v), Value::Int(k)) => v[i].cmp(k),
            (Column::Int64(v), Value::Float(k)) => (v[i] as f64).total_cmp(k),
            (Column::Float64(v), Value::Float(k)) => v[i].total_cmp(k),
            (Column::Float64(v), Value::Int(k)) => v[i].total_cmp(&(*k as f64)),
            (Column::FixedStr { width, data }, Value::Str(k)) => {
                Self::str_slot(data, *width, i).cmp(k.as_bytes())
            }
            (col, key) => col.value(i).cmp(key),
        }
    }

    pub fn is_sorted(&self) -> bool {
        (1..self.len()).all(|i| self.cmp_rows(i - 1, i) != Ordering::Greater)
    }

    /// Compares two rows of this column.
    pub fn cmp_rows(&self, a: usize, b: usize) -> Ordering {
        match self {
            Column::Int64(v) => v[a].cmp(&v[b]),
            Column::Float64(v) => v[a].total_cmp(&v[b]),
            Column::FixedStr { width, data } => {
                Self::str_slot(data, *width, a).cmp(Self::str_slot(data, *width, b))
            }
        }
    }

    /// `out[j] = self[indices[j]]`.
    pub fn gather(&self, indices: &[u64]) -> Column {
        match self {
            Column::Int64(v) => Column::Int64(indices.iter().map(|&i| v[i as usize]).collect()),
            Column::Float64(v) => Column::Float64(indices.iter().map(|&i| v[i as usize]).collect()),
            Column::FixedStr { width, data } => {
                let w = *width as usize;
                let mut out = Vec::with_capacity(indices.len() * w);
                for &i in indices {
                    let i = i as usize;
                    out.extend_from_slice(&data[i * w..(i + 1) * w]);
                }
                Column::FixedStr { width: *width, data: out }
            }
        }
    }

    /// `out[targets[i]] = self[i]`. `targets` must be a bijection on the row range.
    pub fn scatter(&self, targets: &[u64]) -> Column {
        debug_assert_eq!(targets.len(), self.len());
        match self {
            Column::Int64(v) => {
                let mut out = vec![0; v.len()];
                for (i, &t) in targets.iter().enumerate() {
                    out[t as usize] = v[i];
                }
                Column::Int64(out)
            }
            Column::Float64(v) => {
                let mut out = vec![0.0; v.len()];
                for (i, &t) in targets.iter().enumerate() {
                    out[t as usize] = v[i];
                }
                Column::Float64(out)
            }
            Column::FixedStr { width, data } => {
                let w = *width as usize;
                let mut out = vec![0u8; data.len()];
                for (i, &t) in targets.iter().enumerate() {
                    let t = t as usize;
                    out[t * w..(t + 1) * w].copy_from_slice(&data[i * w..(i + 1) * w]);
                }
                Column::FixedStr { width: *width, data: out }
            }
        }
    }

    pub fn slice(&self, rows: Range<usize>) -> Column {
        match self {
            Column::Int64(v) => Column::Int64(v[rows].to_vec()),
            Column::Float64(v) => Column::Float64(v[rows].to_vec()),
            Column::FixedStr { width, data } => {
                let w = *width as usize;
                Column::FixedStr { width: *width, data: data[rows.start * w..rows.end * w].to_vec() }
            }
        }
    }

    /// Appends the little-endian encoding of every row.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Column::Int64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Column::Float64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Column::FixedStr { data, .. } => out.extend_from_slice(data),
        }
    }

    pub fn decode(ty: AttrType, bytes: &[u8]) -> Result<Column> {
        let w = ty.width();
        if bytes.len() % w != 0 {
            return Err(Error::format(format!(
                "column of type {ty} has {} bytes, not a multiple of {w}",
                bytes.len()
            )));
        }
        Ok(match ty {
            AttrType::Int64 => Column::Int64(
                bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            AttrType::Float64 => Column::Float64(
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            AttrType::FixedStr(width) => Column::FixedStr { width, data: bytes.to_vec() },
        })
    }

    /// Appends every row of `other` (same type) to this column.
    pub fn extend_from(&mut self, other: &Column) -> Result<()> {
        match (self, other) {
            (Column::Int64(a), Column::Int64(b)) => a.extend_from_slice(b),
            (Column::Float64(a), Column::Float64(b)) => a.extend_from_slice(b),
            (Column::FixedStr { width: wa, data: a }, Column::FixedStr { width: wb, data: b })
                if wa == wb =>
            {
                a.extend_from_slice(b)
            }
            (a, b) => {
                return Err(Error::schema(format!(
                    "cannot append {} column to {} column",
                    b.attr_type(),
                    a.attr_type()
                )))
            }
        }
        Ok(())
    }

    pub(crate) fn hash_into<H: Hasher>(&self, state: &mut H) {
        match self {
            Column::Int64(v) => v.hash(state),
            Column::Float64(v) => v.iter().for_each(|x| x.to_bits().hash(state)),
            Column::FixedStr { data, .. } => data.hash(state),
        }
    }
}

/// Encodes a single value with the column encoding of `ty`.
pub(crate) fn encode_value(ty: AttrType, value: &Value, out: &mut Vec<u8>) -> Result<()> {
    let mut col = Column::with_capacity(ty, 1);
    col.push(value)?;
    col.encode_into(out);
    Ok(())
}
