use serde::{Deserialize, Serialize};

use crate::block_store::{DataBlock, SparseClusteredIndex};
use crate::error::{Error, Result};
use crate::value::Column;

/// Old-position to new-position map: `new_column[perm[i]] = old_column[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationVector {
    perm: Vec<u64>,
}

impl PermutationVector {
    pub fn identity(len: usize) -> Self {
        Self { perm: (0..len as u64).collect() }
    }

    /// Validates that `perm` is a bijection on `[0, perm.len())`.
    pub fn from_vec(perm: Vec<u64>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            let slot = seen
                .get_mut(p as usize)
                .ok_or_else(|| Error::format(format!("permutation target {p} out of range")))?;
            if std::mem::replace(slot, true) {
                return Err(Error::format(format!("permutation target {p} repeated")));
            }
        }
        Ok(Self { perm })
    }

    /// The permutation that stably sorts `column`.
    pub fn sorting(column: &Column) -> Self {
        // order[j] = old position of the row that lands at new position j
        let mut order: Vec<u64> = (0..column.len() as u64).collect();
        order.sort_by(|&a, &b| column.cmp_rows(a as usize, b as usize));
        let mut perm = vec![0u64; order.len()];
        for (new_pos, &old_pos) in order.iter().enumerate() {
            perm[old_pos as usize] = new_pos as u64;
        }
        Self { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.perm
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| p == i as u64)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u64; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p as usize] = i as u64;
        }
        Self { perm: inv }
    }

    /// Reorders an old-order column into the new order.
    pub fn apply(&self, column: &Column) -> Result<Column> {
        if column.len() != self.perm.len() {
            return Err(Error::contract(format!(
                "column has {} rows, permutation covers {}",
                column.len(),
                self.perm.len()
            )));
        }
        Ok(column.scatter(&self.perm))
    }
}

/// Sorts `block` on `attribute`, aligns every other present column through the
/// permutation vector and builds the sparse index over the sorted column.
///
/// The sort is stable, so rows with equal keys keep their relative order and
/// the permutation is deterministic.
pub fn build_index(
    block: &DataBlock,
    attribute: &str,
    page_size_records: u32,
) -> Result<(DataBlock, PermutationVector, SparseClusteredIndex)> {
    let key = block.column(attribute).ok_or_else(|| {
        Error::contract(format!("block {} has no attribute `{attribute}`", block.block_id))
    })?;
    let perm = PermutationVector::sorting(key);
    let columns = block
        .columns()
        .iter()
        .map(|c| perm.apply(c))
        .collect::<Result<Vec<_>>>()?;
    let sorted_key = &columns[block.schema().position(attribute).expect("checked above")];
    let index = SparseClusteredIndex::build(attribute, sorted_key, page_size_records)?;
    let mut sorted = DataBlock::new(block.block_id, block.schema().clone(), columns)?;
    sorted.set_index(index.clone())?;
    Ok((sorted, perm, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{AttrType, Attribute, Schema, Value};

    fn block(keys: Vec<i64>, payload: &[&str]) -> DataBlock {
        let schema = Schema::new(vec![
            Attribute::new("d", AttrType::Int64),
            Attribute::new("p", AttrType::FixedStr(4)),
        ])
        .unwrap();
        let payload: Vec<Value> = payload.iter().map(|s| Value::Str(s.to_string())).collect();
        DataBlock::new(
            42,
            schema,
            vec![Column::Int64(keys), Column::from_values(AttrType::FixedStr(4), &payload).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn three_row_example() {
        let b = block(vec![5, 1, 3], &["x", "y", "z"]);
        let (sorted, perm, index) = build_index(&b, "d", 1024).unwrap();
        assert_eq!(perm.as_slice(), &[2, 0, 1]);
        assert_eq!(sorted.column("d").unwrap(), &Column::Int64(vec![1, 3, 5]));
        let p: Vec<Value> = (0..3).map(|i| sorted.column("p").unwrap().value(i)).collect();
        assert_eq!(p, ["y", "z", "x"].map(|s| Value::Str(s.into())));
        assert_eq!(index.page_count(), 1);
        assert_eq!(sorted.sort_attribute.as_deref(), Some("d"));
    }

    #[test]
    fn sorted_input_gives_identity() {
        let b = block(vec![1, 2, 2, 9], &["a", "b", "c", "d"]);
        let (sorted, perm, _) = build_index(&b, "d", 2).unwrap();
        assert!(perm.is_identity());
        assert_eq!(sorted.columns(), b.columns());
    }

    #[test]
    fn stable_on_equal_keys() {
        let b = block(vec![2, 1, 2, 1], &["a", "b", "c", "d"]);
        let (sorted, perm, _) = build_index(&b, "d", 8).unwrap();
        assert_eq!(perm.as_slice(), &[2, 0, 3, 1]);
        let p: Vec<Value> = (0..4).map(|i| sorted.column("p").unwrap().value(i)).collect();
        assert_eq!(p, ["b", "d", "a", "c"].map(|s| Value::Str(s.into())));
    }

    #[test]
    fn missing_attribute_is_contract_violation() {
        let b = block(vec![1], &["a"]);
        assert!(matches!(build_index(&b, "zz", 8), Err(Error::Contract(_))));
    }

    #[test]
    fn from_vec_rejects_non_bijections() {
        assert!(PermutationVector::from_vec(vec![0, 0]).is_err());
        assert!(PermutationVector::from_vec(vec![0, 2]).is_err());
        let p = PermutationVector::from_vec(vec![1, 2, 0]).unwrap();
        assert_eq!(p.inverse().as_slice(), &[2, 0, 1]);
    }
}
