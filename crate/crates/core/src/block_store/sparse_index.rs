use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Column, Value};

pub const DEFAULT_PAGE_SIZE_RECORDS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub first_key: Value,
    pub start_record: u64,
}

/// Page directory over a sorted column: one entry per page holding the
/// page's first key and first record offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseClusteredIndex {
    pub attribute: String,
    pub page_size_records: u32,
    pub entries: Vec<IndexEntry>,
    pub record_count: u64,
}

impl SparseClusteredIndex {
    /// Builds the directory over `sorted`, which must be non-decreasing.
    pub fn build(attribute: &str, sorted: &Column, page_size_records: u32) -> Result<Self> {
        if page_size_records == 0 {
            return Err(Error::contract("page_size_records must be positive"));
        }
        if !sorted.is_sorted() {
            return Err(Error::contract(format!("column `{attribute}` is not sorted")));
        }
        let entries = (0..sorted.len())
            .step_by(page_size_records as usize)
            .map(|start| IndexEntry { first_key: sorted.value(start), start_record: start as u64 })
            .collect();
        Ok(Self {
            attribute: attribute.to_owned(),
            page_size_records,
            entries,
            record_count: sorted.len() as u64,
        })
    }

    pub fn page_count(&self) -> usize {
        self.entries.len()
    }

    fn page_end(&self, page: usize) -> u64 {
        self.entries.get(page + 1).map_or(self.record_count, |e| e.start_record)
    }

    /// Rows of every page that may hold a key in `[low, high]`. The result is
    /// page-aligned; callers trim it against the key column.
    pub fn candidate_rows(&self, low: &Value, high: &Value) -> Range<u64> {
        if self.entries.is_empty() || low > high {
            return 0..0;
        }
        // Pages starting strictly below `low` may still end with `low`, so the
        // scan begins one page before the first page whose first key is >= low.
        let first_ge = self.entries.partition_point(|e| e.first_key < *low);
        let start_page = first_ge.saturating_sub(1);
        let end_page = self.entries.partition_point(|e| e.first_key <= *high);
        if end_page == 0 || end_page <= start_page {
            return 0..0;
        }
        self.entries[start_page].start_record..self.page_end(end_page - 1)
    }

    /// Checks the directory against the sorted column it was built from.
    pub fn validate(&self, sorted: &Column) -> Result<()> {
        let fail = |m: String| Err(Error::format(format!("index on `{}`: {m}", self.attribute)));
        if self.record_count != sorted.len() as u64 {
            return fail(format!("covers {} records, column has {}", self.record_count, sorted.len()));
        }
        if let Some(first) = self.entries.first() {
            if first.start_record != 0 {
                return fail("first entry does not start at record 0".into());
            }
        } else if self.record_count > 0 {
            return fail("no entries for a non-empty column".into());
        }
        for w in self.entries.windows(2) {
            if w[1].start_record <= w[0].start_record || w[1].first_key < w[0].first_key {
                return fail("entries out of order".into());
            }
        }
        for e in &self.entries {
            if e.start_record >= self.record_count
                || sorted.cmp_at(e.start_record as usize, &e.first_key) != Ordering::Equal
            {
                return fail(format!("entry at record {} does not match column", e.start_record));
            }
        }
        Ok(())
    }
}

/// Narrows a candidate row range of a sorted column to the exact rows with
/// keys in `[low, high]`.
pub fn exact_rows(sorted: &Column, candidate: Range<u64>, low: &Value, high: &Value) -> Range<u64> {
    let (s, e) = (candidate.start as usize, candidate.end as usize);
    let lo = s + partition(s, e, |i| sorted.cmp_at(i, low) == Ordering::Less);
    let hi = s + partition(s, e, |i| sorted.cmp_at(i, high) != Ordering::Greater);
    lo as u64..hi.max(lo) as u64
}

/// Like `exact_rows` but for a column that holds only the candidate rows,
/// returning offsets relative to the start of that slice.
pub(crate) fn exact_rows_in_slice(slice: &Column, low: &Value, high: &Value) -> Range<usize> {
    let r = exact_rows(slice, 0..slice.len() as u64, low, high);
    r.start as usize..r.end as usize
}

fn partition(start: usize, end: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (start, end);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo - start
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Column {
        Column::Int64(v.to_vec())
    }

    #[test]
    fn entry_count_is_page_ceiling() {
        let col = Column::Int64((0..1000).collect());
        let idx = SparseClusteredIndex::build("d", &col, 128).unwrap();
        assert_eq!(idx.page_count(), 8);
        assert_eq!(idx.entries[7].start_record, 896);
        idx.validate(&col).unwrap();
    }

    #[test]
    fn rejects_unsorted_column() {
        assert!(SparseClusteredIndex::build("d", &ints(&[3, 1]), 4).is_err());
    }

    #[test]
    fn duplicate_keys_spanning_pages() {
        // page size 2: pages [1,2] [2,2] [2,3]
        let col = ints(&[1, 2, 2, 2, 2, 3]);
        let idx = SparseClusteredIndex::build("d", &col, 2).unwrap();
        let (lo, hi) = (Value::Int(2), Value::Int(2));
        let cand = idx.candidate_rows(&lo, &hi);
        assert_eq!(cand, 0..6);
        assert_eq!(exact_rows(&col, cand, &lo, &hi), 1..5);
    }

    #[test]
    fn range_outside_keys_is_empty() {
        let col = ints(&[5, 6, 7, 8]);
        let idx = SparseClusteredIndex::build("d", &col, 2).unwrap();
        assert!(idx.candidate_rows(&Value::Int(0), &Value::Int(4)).is_empty());
        let cand = idx.candidate_rows(&Value::Int(9), &Value::Int(10));
        assert!(exact_rows(&col, cand, &Value::Int(9), &Value::Int(10)).is_empty());
        assert!(idx.candidate_rows(&Value::Int(7), &Value::Int(6)).is_empty());
    }

    #[test]
    fn empty_column_has_no_entries() {
        let idx = SparseClusteredIndex::build("d", &ints(&[]), 8).unwrap();
        assert_eq!(idx.page_count(), 0);
        assert!(idx.candidate_rows(&Value::Int(0), &Value::Int(1)).is_empty());
    }
}
