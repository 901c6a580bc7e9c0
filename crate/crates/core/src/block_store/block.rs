use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use crate::block_store::SparseClusteredIndex;
use crate::error::{Error, Result};
use crate::indexer::PermutationVector;
use crate::value::{Attribute, Column, Schema, Value};

/// In-memory PAX block: equal-length columns of the attributes in `schema`.
///
/// `schema` lists only the columns the block actually carries, so projected
/// and partially indexed blocks use the same type as full ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    pub block_id: u64,
    schema: Schema,
    record_count: u64,
    columns: Vec<Column>,
    pub sort_attribute: Option<String>,
    pub index: Option<SparseClusteredIndex>,
    pub permutation: Option<PermutationVector>,
}

impl DataBlock {
    pub fn new(block_id: u64, schema: Schema, columns: Vec<Column>) -> Result<Self> {
        let record_count = columns.first().map_or(0, |c| c.len()) as u64;
        Self::with_record_count(block_id, schema, columns, record_count)
    }

    /// Like `new` but keeps the record count when the block carries no columns.
    pub fn with_record_count(
        block_id: u64,
        schema: Schema,
        columns: Vec<Column>,
        record_count: u64,
    ) -> Result<Self> {
        let block = Self {
            block_id,
            schema,
            record_count,
            columns,
            sort_attribute: None,
            index: None,
            permutation: None,
        };
        block.check_columns()?;
        Ok(block)
    }

    fn check_columns(&self) -> Result<()> {
        if self.columns.len() != self.schema.len() {
            return Err(Error::schema(format!(
                "block {}: {} columns for {} attributes",
                self.block_id,
                self.columns.len(),
                self.schema.len()
            )));
        }
        for (attr, col) in self.schema.attributes().iter().zip(&self.columns) {
            if col.attr_type() != attr.ty {
                return Err(Error::schema(format!(
                    "block {}: column `{}` is {}, schema says {}",
                    self.block_id,
                    attr.name,
                    col.attr_type(),
                    attr.ty
                )));
            }
            if col.len() as u64 != self.record_count {
                return Err(Error::schema(format!(
                    "block {}: column `{}` has {} rows, expected {}",
                    self.block_id,
                    attr.name,
                    col.len(),
                    self.record_count
                )));
            }
        }
        Ok(())
    }

    /// Checks every block invariant: column shapes, sortedness of the sort
    /// attribute, index consistency and permutation length.
    pub fn validate(&self) -> Result<()> {
        self.check_columns()?;
        if let Some(attr) = &self.sort_attribute {
            let col = self
                .column(attr)
                .ok_or_else(|| Error::schema(format!("sort attribute `{attr}` not in block")))?;
            if !col.is_sorted() {
                return Err(Error::contract(format!("sort attribute `{attr}` is not sorted")));
            }
        }
        if let Some(index) = &self.index {
            if self.sort_attribute.as_deref() != Some(index.attribute.as_str()) {
                return Err(Error::contract("index attribute differs from sort attribute"));
            }
            index.validate(self.column(&index.attribute).expect("checked above"))?;
        }
        if let Some(perm) = &self.permutation {
            if perm.len() as u64 != self.record_count {
                return Err(Error::contract("permutation length differs from record count"));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn record_count(&self) -> u64 {
        self.record_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.position(name).map(|i| &self.columns[i])
    }

    pub fn has_attribute(&self, name: &str) -> bool {
        self.schema.position(name).is_some()
    }

    pub fn into_columns(self) -> Vec<Column> {
        self.columns
    }

    /// Marks the block as sorted and indexed on `index.attribute`.
    pub fn set_index(&mut self, index: SparseClusteredIndex) -> Result<()> {
        let col = self
            .column(&index.attribute)
            .ok_or_else(|| Error::schema(format!("index attribute `{}` not in block", index.attribute)))?;
        index.validate(col)?;
        self.sort_attribute = Some(index.attribute.clone());
        self.index = Some(index);
        Ok(())
    }

    /// Appends a column for an attribute not yet present.
    pub fn push_column(&mut self, attr: Attribute, column: Column) -> Result<()> {
        if self.has_attribute(&attr.name) {
            return Err(Error::schema(format!("attribute `{}` already present", attr.name)));
        }
        if column.attr_type() != attr.ty || column.len() as u64 != self.record_count {
            return Err(Error::schema(format!("column for `{}` does not fit block", attr.name)));
        }
        let mut attrs = self.schema.attributes().to_vec();
        attrs.push(attr);
        self.schema = Schema::projected(attrs);
        self.columns.push(column);
        Ok(())
    }

    /// Keeps only the named columns, in the given order. Metadata that no
    /// longer applies (index on a dropped column) is cleared.
    pub fn project(&self, names: &[&str]) -> Result<DataBlock> {
        let mut attrs = Vec::with_capacity(names.len());
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let pos = self
                .schema
                .position(name)
                .ok_or_else(|| Error::schema(format!("unknown attribute `{name}`")))?;
            attrs.push(self.schema.attributes()[pos].clone());
            cols.push(self.columns[pos].clone());
        }
        let mut out =
            DataBlock::with_record_count(self.block_id, Schema::projected(attrs), cols, self.record_count)?;
        if let Some(sort) = &self.sort_attribute {
            if out.has_attribute(sort) {
                out.sort_attribute = Some(sort.clone());
                out.index = self.index.clone();
            }
        }
        Ok(out)
    }

    /// Reorders this block's columns into schema order, keeping metadata.
    pub fn reorder_like(&self, schema: &Schema) -> Result<DataBlock> {
        let names: Vec<&str> = schema.names().filter(|n| self.has_attribute(n)).collect();
        let mut out = self.project(&names)?;
        out.permutation = self.permutation.clone();
        Ok(out)
    }

    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    /// Content hash over every column; used to detect torn hand-offs.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        h.write_u64(self.block_id);
        h.write_u64(self.record_count);
        for (a, c) in self.schema.attributes().iter().zip(&self.columns) {
            h.write(a.name.as_bytes());
            c.hash_into(&mut h);
        }
        h.finish()
    }
}
