//! In-memory tables, their CSV form, and the two dataset generators.
//!
//! CSV files carry a header of `name:type` cells (`a:int64`, `destURL:str100`)
//! so a file alone is enough to recover the schema.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block_store::DataBlock;
use crate::error::{Error, Result};
use crate::value::{AttrType, Attribute, Column, Schema, Value};

/// Number of distinct values of the synthetic dataset's first attribute.
pub const SYNTHETIC_DISTINCT: u32 = 10;
/// Upper bound (exclusive) of the uniform synthetic attributes `b..f`.
pub const SYNTHETIC_UNIFORM_MAX: i64 = 1_000_000;
/// Distinct `searchWord` values in the UserVisits-like dataset; each word
/// covers `1 / USERVISITS_WORDS` of the rows.
pub const USERVISITS_WORDS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    columns: Vec<Column>,
}

impl Table {
    pub fn new(schema: Schema, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::schema(format!("{} columns for {} attributes", columns.len(), schema.len())));
        }
        let rows = columns.first().map_or(0, Column::len);
        for (a, c) in schema.attributes().iter().zip(&columns) {
            if c.attr_type() != a.ty || c.len() != rows {
                return Err(Error::schema(format!("column `{}` does not fit the table", a.name)));
            }
        }
        Ok(Self { schema, columns })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.position(name).map(|p| &self.columns[p])
    }

    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    /// Rows `rows` as an unsorted block.
    pub fn block(&self, block_id: u64, rows: Range<usize>) -> Result<DataBlock> {
        let cols = self.columns.iter().map(|c| c.slice(rows.clone())).collect();
        DataBlock::with_record_count(block_id, self.schema.clone(), cols, rows.len() as u64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.schema.attributes().iter().map(|a| format!("{}:{}", a.name, a.ty)))?;
        let mut cells = Vec::with_capacity(self.columns.len());
        for i in 0..self.row_count() {
            cells.clear();
            cells.extend(self.columns.iter().map(|c| match c.value(i) {
                Value::Int(v) => v.to_string(),
                // `{:?}` keeps enough digits to round-trip
                Value::Float(v) => format!("{v:?}"),
                Value::Str(s) => s,
            }));
            w.write_record(&cells)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut attrs = Vec::new();
        for cell in r.headers()?.iter() {
            let (name, ty) = cell
                .rsplit_once(':')
                .ok_or_else(|| Error::schema(format!("header cell `{cell}` is not `name:type`")))?;
            attrs.push(Attribute::new(name, ty.parse()?));
        }
        let schema = Schema::new(attrs)?;
        let mut columns: Vec<Column> = schema.attributes().iter().map(|a| Column::empty(a.ty)).collect();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            if record.len() != columns.len() {
                return Err(Error::schema(format!("row {} has {} cells", line + 1, record.len())));
            }
            for ((cell, col), attr) in record.iter().zip(columns.iter_mut()).zip(schema.attributes()) {
                col.push(&Value::parse(cell, attr.ty)?)?;
            }
        }
        Table::new(schema, columns)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Occurrences of value `i` (1-based) of the synthetic first attribute:
/// `floor(rows * 10^(i-1) / S)` with `S = sum of 10^(i-1)`, the leftover rows
/// going to the largest fractional parts (ties to the larger value).
pub fn synthetic_value_counts(rows: u64) -> Vec<u64> {
    let weights: Vec<u128> = (0..SYNTHETIC_DISTINCT).map(|i| 10u128.pow(i)).collect();
    let total: u128 = weights.iter().sum();
    let rows = rows as u128;
    let mut counts: Vec<u64> = weights.iter().map(|w| (rows * w / total) as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut by_remainder: Vec<usize> = (0..weights.len()).collect();
    by_remainder.sort_by_key(|&i| std::cmp::Reverse(((rows * weights[i]) % total, i)));
    for &i in by_remainder.iter().take((rows as u64 - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Six int64 attributes `a..f`. `a` holds values 1..=10 where value `i` is
/// ten times as frequent as `i - 1`; `b..f` are uniform in
/// `[0, SYNTHETIC_UNIFORM_MAX)`. Rows are shuffled by `seed`.
pub fn gen_synthetic(rows: usize, seed: u64) -> Result<Table> {
    if rows == 0 {
        return Err(Error::Config("row count must be positive".into()));
    }
    let mut rng = rng(seed);
    let mut a = Vec::with_capacity(rows);
    for (i, n) in synthetic_value_counts(rows as u64).into_iter().enumerate() {
        a.extend(std::iter::repeat(i as i64 + 1).take(n as usize));
    }
    a.shuffle(&mut rng);
    let mut columns = vec![Column::Int64(a)];
    for _ in 0..5 {
        columns.push(Column::Int64((0..rows).map(|_| rng.gen_range(0..SYNTHETIC_UNIFORM_MAX)).collect()));
    }
    let schema =
        Schema::new(["a", "b", "c", "d", "e", "f"].iter().map(|n| Attribute::new(*n, AttrType::Int64)).collect())?;
    Table::new(schema, columns)
}

pub fn uservisits_schema() -> Schema {
    Schema::new(vec![
        Attribute::new("sourceIP", AttrType::FixedStr(16)),
        Attribute::new("destURL", AttrType::FixedStr(100)),
        Attribute::new("visitDate", AttrType::Int64),
        Attribute::new("adRevenue", AttrType::Float64),
        Attribute::new("userAgent", AttrType::FixedStr(64)),
        Attribute::new("countryCode", AttrType::FixedStr(3)),
        Attribute::new("languageCode", AttrType::FixedStr(6)),
        Attribute::new("searchWord", AttrType::FixedStr(32)),
        Attribute::new("duration", AttrType::Int64),
    ])
    .expect("static schema")
}

/// `searchWord` value number `k`; words sort in `k` order.
pub fn search_word(k: usize) -> String {
    format!("w{k:04}")
}

const COUNTRIES: [&str; 12] = ["USA", "DEU", "FRA", "GBR", "CHN", "IND", "BRA", "JPN", "CAN", "ESP", "ITA", "MEX"];
const LANGUAGES: [&str; 8] = ["en-US", "de-DE", "fr-FR", "en-GB", "zh-CN", "hi-IN", "pt-BR", "ja-JP"];
const AGENTS: [&str; 4] = ["Mozilla/5.0", "Opera/9.80", "Safari/537.36", "curl/7.68.0"];

fn letters(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

/// Nine mostly-string attributes shaped like a web log. `destURL` is the
/// widest column. Row `k` (before shuffling) searches for word `k % 1000`, so
/// any `w` consecutive words select exactly `w / 1000` of the rows when
/// `rows` is a multiple of 1000.
pub fn gen_uservisits(rows: usize, seed: u64) -> Result<Table> {
    if rows == 0 {
        return Err(Error::Config("row count must be positive".into()));
    }
    let schema = uservisits_schema();
    let mut rng = rng(seed);
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut rng);
    let mut columns: Vec<Column> = schema.attributes().iter().map(|a| Column::with_capacity(a.ty, rows)).collect();
    for &k in &order {
        let ip = format!("{}.{}.{}.{}", rng.gen_range(1..255), rng.gen::<u8>(), rng.gen::<u8>(), rng.gen_range(1..255));
        let path_len = rng.gen_range(8..60);
        let url = format!("http://www.{}.com/{}", letters(&mut rng, 10), letters(&mut rng, path_len));
        let agent = format!("{} ({})", AGENTS[rng.gen_range(0..AGENTS.len())], letters(&mut rng, 20));
        let row = [
            Value::Str(ip),
            Value::Str(url),
            // days since 1970 within 1990..2010
            Value::Int(rng.gen_range(7305..14610)),
            Value::Float((rng.gen_range(0.0..1000.0f64) * 100.0).round() / 100.0),
            Value::Str(agent),
            Value::Str(COUNTRIES[rng.gen_range(0..COUNTRIES.len())].to_owned()),
            Value::Str(LANGUAGES[rng.gen_range(0..LANGUAGES.len())].to_owned()),
            Value::Str(search_word(k % USERVISITS_WORDS)),
            Value::Int(rng.gen_range(1..10_000)),
        ];
        for (c, v) in columns.iter_mut().zip(&row) {
            c.push(v)?;
        }
    }
    Table::new(schema, columns)
}
