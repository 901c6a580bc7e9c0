//! Binary block file layout (all integers little-endian):
//!
//! ```text
//! "ADXB" | version u16 | block_id u64 | record_count u64 | attr_count u16
//! per attribute: name_len u16 | name | type tag u8 [| width u16 for strings]
//!                | column offset u64 | column length u64
//! index flag u8 (0 none, 1 index, 2 sorted without directory)
//!   flag 1: attr ordinal u16 | page_size u32 | entry_count u64
//!           | entries (key bytes, start_record u64)
//!   flag 2: attr ordinal u16
//! permutation flag u8 [| record_count u64 | record_count x u64]
//! column data
//! ```
//!
//! Column offsets are absolute file offsets, so a reader seeks straight to
//! the columns it needs and never touches the others.

use std::fs::File;
use std::io::{self, BufReader, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::block_store::{DataBlock, IndexEntry, SparseClusteredIndex};
use crate::error::{Error, Result};
use crate::indexer::PermutationVector;
use crate::value::{encode_value, AttrType, Attribute, Column, Schema};

pub const MAGIC: &[u8; 4] = b"ADXB";
pub const FORMAT_VERSION: u16 = 1;

const INDEX_NONE: u8 = 0;
const INDEX_DIRECTORY: u8 = 1;
const INDEX_SORTED_ONLY: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub attribute: Attribute,
    pub offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockHeader {
    pub block_id: u64,
    pub record_count: u64,
    pub columns: Vec<ColumnMeta>,
    pub sort_attribute: Option<String>,
    pub index: Option<SparseClusteredIndex>,
    /// File offset of the first permutation entry, when a vector is stored.
    pub permutation_offset: Option<u64>,
    /// Bytes from the start of the file to the first column.
    pub header_len: u64,
}

impl BlockHeader {
    pub fn schema(&self) -> Schema {
        Schema::projected(self.columns.iter().map(|c| c.attribute.clone()).collect())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.attribute.name == name)
    }

    pub fn has_permutation(&self) -> bool {
        self.permutation_offset.is_some()
    }

    pub fn data_len(&self) -> u64 {
        self.columns.iter().map(|c| c.byte_len).sum()
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialises `block` into the on-disk layout.
pub fn encode_block(block: &DataBlock) -> Result<Vec<u8>> {
    block.validate()?;
    let schema = block.schema();
    let attr_count = u16::try_from(schema.len())
        .map_err(|_| Error::schema("too many attributes for one block"))?;

    // Header fields other than the column offsets are fixed up front, so the
    // header size is known before any offset is written.
    let mut tail = Vec::new();
    match (&block.index, &block.sort_attribute) {
        (Some(index), _) => {
            let ordinal = schema.position(&index.attribute).expect("validated");
            let ty = schema.attributes()[ordinal].ty;
            tail.push(INDEX_DIRECTORY);
            put_u16(&mut tail, ordinal as u16);
            put_u32(&mut tail, index.page_size_records);
            put_u64(&mut tail, index.entries.len() as u64);
            for e in &index.entries {
                encode_value(ty, &e.first_key, &mut tail)?;
                put_u64(&mut tail, e.start_record);
            }
        }
        (None, Some(sort)) => {
            tail.push(INDEX_SORTED_ONLY);
            put_u16(&mut tail, schema.position(sort).expect("validated") as u16);
        }
        (None, None) => tail.push(INDEX_NONE),
    }
    match &block.permutation {
        Some(perm) => {
            tail.push(1);
            put_u64(&mut tail, perm.len() as u64);
            for &p in perm.as_slice() {
                put_u64(&mut tail, p);
            }
        }
        None => tail.push(0),
    }

    let mut attr_table_len = 0usize;
    for a in schema.attributes() {
        let name_len = u16::try_from(a.name.len()).map_err(|_| Error::schema("attribute name too long"))?;
        attr_table_len += 2 + name_len as usize + 1 + 16;
        if matches!(a.ty, AttrType::FixedStr(_)) {
            attr_table_len += 2;
        }
    }
    let header_len = 4 + 2 + 8 + 8 + 2 + attr_table_len + tail.len();
    let data_len: usize = block.columns().iter().map(Column::byte_len).sum();

    let mut out = Vec::with_capacity(header_len + data_len);
    out.extend_from_slice(MAGIC);
    put_u16(&mut out, FORMAT_VERSION);
    put_u64(&mut out, block.block_id);
    put_u64(&mut out, block.record_count());
    put_u16(&mut out, attr_count);
    let mut offset = header_len as u64;
    for (a, col) in schema.attributes().iter().zip(block.columns()) {
        put_u16(&mut out, a.name.len() as u16);
        out.extend_from_slice(a.name.as_bytes());
        out.push(a.ty.tag());
        if let AttrType::FixedStr(w) = a.ty {
            put_u16(&mut out, w);
        }
        put_u64(&mut out, offset);
        put_u64(&mut out, col.byte_len() as u64);
        offset += col.byte_len() as u64;
    }
    out.extend_from_slice(&tail);
    debug_assert_eq!(out.len(), header_len);
    for col in block.columns() {
        col.encode_into(&mut out);
    }
    Ok(out)
}

/// Writes `block` to `path`, returning the number of bytes written. Invalid
/// blocks are rejected before the file is created.
pub fn write_block(block: &DataBlock, path: &Path) -> Result<u64> {
    let bytes = encode_block(block)?;
    let mut f = File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_data()?;
    Ok(bytes.len() as u64)
}

/// Counts bytes the parser consumes, independent of read-ahead buffering.
struct Counting<R> {
    inner: R,
    consumed: u64,
}

impl<R: Read> Counting<R> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.exact(&mut buf)?;
        Ok(buf)
    }

    fn exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::format("truncated block header"),
            _ => Error::Io(e),
        })?;
        self.consumed += buf.len() as u64;
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
}

fn parse_header<R: Read>(r: &mut Counting<R>, file_len: u64) -> Result<BlockHeader> {
    if &r.take::<4>()? != MAGIC {
        return Err(Error::format("bad magic"));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported format version {version}")));
    }
    let block_id = r.u64()?;
    let record_count = r.u64()?;
    let attr_count = r.u16()?;
    let mut columns = Vec::with_capacity(attr_count as usize);
    for _ in 0..attr_count {
        let name_len = r.u16()? as usize;
        let mut name = vec![0u8; name_len];
        r.exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::format("attribute name is not utf-8"))?;
        let ty = match r.u8()? {
            1 => AttrType::Int64,
            2 => AttrType::Float64,
            3 => AttrType::FixedStr(r.u16()?),
            t => return Err(Error::format(format!("unknown type tag {t}"))),
        };
        let offset = r.u64()?;
        let byte_len = r.u64()?;
        if ty.width() == 0 || byte_len != record_count * ty.width() as u64 {
            return Err(Error::format(format!("column `{name}` length {byte_len} inconsistent")));
        }
        if offset.checked_add(byte_len).is_none_or(|end| end > file_len) {
            return Err(Error::format(format!("column `{name}` extends past end of file")));
        }
        columns.push(ColumnMeta { attribute: Attribute::new(name, ty), offset, byte_len });
    }
    let attr_at = |ordinal: u16| {
        columns
            .get(ordinal as usize)
            .map(|c| c.attribute.clone())
            .ok_or_else(|| Error::format(format!("attribute ordinal {ordinal} out of range")))
    };
    let (sort_attribute, index) = match r.u8()? {
        INDEX_NONE => (None, None),
        INDEX_SORTED_ONLY => (Some(attr_at(r.u16()?)?.name), None),
        INDEX_DIRECTORY => {
            let attr = attr_at(r.u16()?)?;
            let page_size_records = r.u32()?;
            let entry_count = r.u64()?;
            if page_size_records == 0
                || entry_count != record_count.div_ceil(page_size_records as u64)
            {
                return Err(Error::format("index entry count does not match page size"));
            }
            let mut entries = Vec::with_capacity(entry_count as usize);
            let mut key = vec![0u8; attr.ty.width()];
            for _ in 0..entry_count {
                r.exact(&mut key)?;
                let first_key = Column::decode(attr.ty, &key)?.value(0);
                let start_record = r.u64()?;
                entries.push(IndexEntry { first_key, start_record });
            }
            let index = SparseClusteredIndex {
                attribute: attr.name.clone(),
                page_size_records,
                entries,
                record_count,
            };
            (Some(attr.name), Some(index))
        }
        f => return Err(Error::format(format!("unknown index flag {f}"))),
    };
    let permutation_offset = match r.u8()? {
        0 => None,
        1 => {
            if r.u64()? != record_count {
                return Err(Error::format("permutation length differs from record count"));
            }
            Some(r.consumed)
        }
        f => return Err(Error::format(format!("unknown permutation flag {f}"))),
    };
    let header_len = match permutation_offset {
        Some(off) => off + record_count * 8,
        None => r.consumed,
    };
    Ok(BlockHeader {
        block_id,
        record_count,
        columns,
        sort_attribute,
        index,
        permutation_offset,
        header_len,
    })
}

/// An open block file. Tracks every byte pulled from storage so callers can
/// account for the I/O of each scan.
pub struct BlockFile {
    path: PathBuf,
    file: File,
    header: BlockHeader,
    bytes_read: u64,
}

impl BlockFile {
    /// Opens `path` and parses its header. Only header bytes are read.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut counting = Counting { inner: BufReader::new(file), consumed: 0 };
        let header = parse_header(&mut counting, file_len)?;
        let bytes_read = counting.consumed;
        let file = counting.inner.into_inner();
        Ok(Self { path: path.to_owned(), file, header, bytes_read })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &BlockHeader {
        &self.header
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read
    }

    fn read_at(&mut self, offset: u64, len: u64) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len as usize];
        self.file.seek(SeekFrom::Start(offset))?;
        self.file.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::format("truncated column data"),
            _ => Error::Io(e),
        })?;
        self.bytes_read += len;
        Ok(buf)
    }

    /// Reads rows `rows` (default: all) of a single column.
    pub fn read_column(&mut self, name: &str, rows: Option<Range<u64>>) -> Result<Column> {
        let meta = self
            .header
            .column(name)
            .ok_or_else(|| Error::schema(format!("attribute `{name}` not stored in {}", self.path.display())))?
            .clone();
        let rows = rows.unwrap_or(0..self.header.record_count);
        if rows.start > rows.end || rows.end > self.header.record_count {
            return Err(Error::contract(format!(
                "row range {rows:?} outside block of {} records",
                self.header.record_count
            )));
        }
        let w = meta.attribute.ty.width() as u64;
        let bytes = self.read_at(meta.offset + rows.start * w, (rows.end - rows.start) * w)?;
        Column::decode(meta.attribute.ty, &bytes)
    }

    /// Reads the projected columns (in the given order) for `rows`.
    ///
    /// The returned block keeps the sort attribute and index only when the
    /// full row range is read and the sort column is part of the projection.
    pub fn read(&mut self, projection: &[&str], rows: Option<Range<u64>>) -> Result<DataBlock> {
        let mut attrs = Vec::with_capacity(projection.len());
        let mut cols = Vec::with_capacity(projection.len());
        for name in projection {
            let col = self.read_column(name, rows.clone())?;
            attrs.push(self.header.column(name).expect("read above").attribute.clone());
            cols.push(col);
        }
        let count = rows.as_ref().map_or(self.header.record_count, |r| r.end - r.start);
        let mut block =
            DataBlock::with_record_count(self.header.block_id, Schema::projected(attrs), cols, count)?;
        if rows.is_none() {
            if let Some(sort) = &self.header.sort_attribute {
                if block.has_attribute(sort) {
                    block.sort_attribute = Some(sort.clone());
                    block.index = self.header.index.clone();
                }
            }
        }
        Ok(block)
    }

    pub fn read_all(&mut self) -> Result<DataBlock> {
        let names: Vec<String> = self.header.columns.iter().map(|c| c.attribute.name.clone()).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        self.read(&names, None)
    }

    pub fn read_permutation(&mut self) -> Result<Option<PermutationVector>> {
        let Some(offset) = self.header.permutation_offset else {
            return Ok(None);
        };
        let bytes = self.read_at(offset, self.header.record_count * 8)?;
        let perm = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        PermutationVector::from_vec(perm).map(Some)
    }
}

/// Reads a projected (and optionally row-restricted) block from `path`.
/// `None` reads every stored attribute.
pub fn read_block(path: &Path, projection: Option<&[&str]>, rows: Option<Range<u64>>) -> Result<DataBlock> {
    let mut f = BlockFile::open(path)?;
    match projection {
        Some(p) => f.read(p, rows),
        None => {
            let names: Vec<String> = f.header.columns.iter().map(|c| c.attribute.name.clone()).collect();
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            f.read(&names, rows)
        }
    }
}

/// Reads every section of the file, including a stored permutation vector.
pub fn read_block_full(path: &Path) -> Result<DataBlock> {
    let mut f = BlockFile::open(path)?;
    let mut block = f.read_all()?;
    block.permutation = f.read_permutation()?;
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexer::build_index;
    use crate::value::Value;

    fn sample(rows: usize) -> DataBlock {
        let schema = Schema::new(vec![
            Attribute::new("a", AttrType::Int64),
            Attribute::new("b", AttrType::Float64),
            Attribute::new("c", AttrType::FixedStr(6)),
        ])
        .unwrap();
        let a = Column::Int64((0..rows as i64).map(|i| (i * 7919) % 1000).collect());
        let b = Column::Float64((0..rows).map(|i| i as f64 * 0.5).collect());
        let c = Column::from_values(
            AttrType::FixedStr(6),
            &(0..rows).map(|i| Value::Str(format!("s{}", i % 97))).collect::<Vec<_>>(),
        )
        .unwrap();
        DataBlock::new(7, schema, vec![a, b, c]).unwrap()
    }

    #[test]
    fn round_trip_plain_block() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        let block = sample(1000);
        let n = write_block(&block, &path).unwrap();
        assert_eq!(n, std::fs::metadata(&path).unwrap().len());
        assert_eq!(read_block_full(&path).unwrap(), block);
    }

    #[test]
    fn round_trip_empty_block() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        let block = sample(0);
        write_block(&block, &path).unwrap();
        let back = read_block_full(&path).unwrap();
        assert_eq!(back.record_count(), 0);
        assert_eq!(back, block);
    }

    #[test]
    fn index_section_has_page_ceiling_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        let (sorted, perm, _) = build_index(&sample(1000), "a", 128).unwrap();
        let mut with_perm = sorted.clone();
        with_perm.permutation = Some(perm);
        write_block(&with_perm, &path).unwrap();
        let f = BlockFile::open(&path).unwrap();
        assert_eq!(f.header().index.as_ref().unwrap().entries.len(), 8);
        assert!(f.header().has_permutation());
        assert_eq!(read_block_full(&path).unwrap(), with_perm);
    }

    #[test]
    fn sorted_without_directory_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        let (mut sorted, _, _) = build_index(&sample(50), "b", 16).unwrap();
        sorted.index = None;
        write_block(&sorted, &path).unwrap();
        assert_eq!(read_block_full(&path).unwrap(), sorted);
    }

    #[test]
    fn projection_reads_only_requested_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        write_block(&sample(1000), &path).unwrap();
        let mut f = BlockFile::open(&path).unwrap();
        let header = f.header().header_len;
        assert_eq!(f.bytes_read(), header);
        let b = f.read(&["b"], None).unwrap();
        assert_eq!(b.schema().len(), 1);
        assert_eq!(f.bytes_read(), header + 8000);
    }

    #[test]
    fn row_range_reads_slice() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        let block = sample(4096);
        write_block(&block, &path).unwrap();
        let part = read_block(&path, Some(&["a", "b", "c"]), Some(1024..2048)).unwrap();
        assert_eq!(part.record_count(), 1024);
        assert_eq!(part.column("c").unwrap(), &block.column("c").unwrap().slice(1024..2048));
        assert!(read_block(&path, Some(&["a"]), Some(4000..5000)).is_err());
    }

    #[test]
    fn malformed_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        std::fs::write(&path, b"NOPE0000000000").unwrap();
        assert!(matches!(BlockFile::open(&path), Err(Error::Format(_))));
        let bytes = encode_block(&sample(10)).unwrap();
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(BlockFile::open(&path), Err(Error::Format(_))));
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(BlockFile::open(&path), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_attribute_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        write_block(&sample(3), &path).unwrap();
        assert!(matches!(read_block(&path, Some(&["zz"]), None), Err(Error::Schema(_))));
    }

    #[test]
    fn invalid_block_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blk");
        let mut b = sample(10);
        b.sort_attribute = Some("a".into());
        assert!(write_block(&b, &path).is_err());
        assert!(!path.exists());
    }
}
