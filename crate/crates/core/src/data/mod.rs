//! Categorical tables, item universes and probe vectors.

mod discretize;
mod ingest;
mod probe;

pub use discretize::{discretize_equal_frequency, DEFAULT_BINS};
pub use ingest::{ingest_csv, ingest_reader, MISSING};
pub use probe::{
    combination_count, enumerate_feature_sets, generate_probe_vectors, probe_count, probe_vector, remove_block, Matrix,
    ProbeMatrix,
};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bitset::RowSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("ragged row {line}: expected {expected} cells, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("empty table")]
    EmptyTable,
    #[error("feature {0:?} has no categories")]
    NoCategories(String),
    #[error("feature {feature:?} lists category {category:?} twice")]
    DuplicateCategory { feature: String, category: String },
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("unknown item {feature}={value}")]
    UnknownItem { feature: String, value: String },
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("feature subset is empty or out of range")]
    BadFeatureSet,
}

/// One categorical feature and its ordered category list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub categories: Vec<String>,
}

impl FeatureDef {
    pub fn new(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, DataError> {
        let name = name.into();
        let categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        if categories.is_empty() {
            return Err(DataError::NoCategories(name));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &categories {
            if !seen.insert(c.as_str()) {
                return Err(DataError::DuplicateCategory {
                    feature: name,
                    category: c.clone(),
                });
            }
        }
        Ok(FeatureDef { name, categories })
    }

    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }
}

/// Global index of an item (a feature/category pair) in `[0, m)`.
///
/// Items are numbered feature-major: all categories of the first feature,
/// then all categories of the second, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Item(pub usize);

impl Item {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The ordered features of a table and the item indexing derived from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemUniverse {
    features: Vec<FeatureDef>,
    offsets: Vec<usize>,
    item_feature: Vec<usize>,
}

impl ItemUniverse {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self, DataError> {
        let mut names = std::collections::HashSet::new();
        for f in &features {
            if !names.insert(f.name.as_str()) {
                return Err(DataError::DuplicateFeature(f.name.clone()));
            }
            if f.categories.is_empty() {
                return Err(DataError::NoCategories(f.name.clone()));
            }
        }
        let mut offsets = Vec::with_capacity(features.len() + 1);
        let mut item_feature = Vec::new();
        let mut acc = 0;
        for (j, f) in features.iter().enumerate() {
            offsets.push(acc);
            acc += f.cardinality();
            item_feature.extend(std::iter::repeat_n(j, f.cardinality()));
        }
        offsets.push(acc);
        Ok(ItemUniverse {
            features,
            offsets,
            item_feature,
        })
    }

    /// Number of features `k`.
    pub fn k(&self) -> usize {
        self.features.len()
    }

    /// Number of items `m = Σ c_j`.
    pub fn m(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &FeatureDef {
        &self.features[j]
    }

    pub fn cardinality(&self, j: usize) -> usize {
        self.features[j].cardinality()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn require_feature(&self, name: &str) -> Result<usize, DataError> {
        self.feature_index(name)
            .ok_or_else(|| DataError::UnknownFeature(name.to_string()))
    }

    /// Column range of feature `j` in a one-hot row.
    pub fn block(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn item(&self, feature: usize, category: usize) -> Item {
        debug_assert!(category < self.cardinality(feature));
        Item(self.offsets[feature] + category)
    }

    pub fn feature_of(&self, item: Item) -> usize {
        self.item_feature[item.0]
    }

    pub fn category_of(&self, item: Item) -> usize {
        item.0 - self.offsets[self.feature_of(item)]
    }

    pub fn find_item(&self, feature: &str, value: &str) -> Result<Item, DataError> {
        let j = self.require_feature(feature)?;
        let c = self.features[j]
            .category_index(value)
            .ok_or_else(|| DataError::UnknownItem {
                feature: feature.to_string(),
                value: value.to_string(),
            })?;
        Ok(self.item(j, c))
    }

    pub fn item_name(&self, item: Item) -> (&str, &str) {
        let f = &self.features[self.feature_of(item)];
        (&f.name, &f.categories[self.category_of(item)])
    }

    pub fn item_label(&self, item: Item) -> String {
        let (f, v) = self.item_name(item);
        format!("{f}={v}")
    }

    /// The universe with feature `j` removed; remaining order is preserved.
    pub fn without_feature(&self, j: usize) -> ItemUniverse {
        let features = self
            .features
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .map(|(_, f)| f.clone())
            .collect();
        ItemUniverse::new(features).expect("subset of a valid universe is valid")
    }
}

/// A categorical table: one category index per feature per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    universe: ItemUniverse,
    cells: Vec<u32>,
    n: usize,
}

impl Dataset {
    /// Builds a dataset from category-index rows.
    pub fn new(universe: ItemUniverse, rows: Vec<Vec<u32>>) -> Result<Self, DataError> {
        let k = universe.k();
        let mut cells = Vec::with_capacity(rows.len() * k);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(DataError::BadRow {
                    row: r,
                    message: format!("expected {k} cells, found {}", row.len()),
                });
            }
            for (j, &c) in row.iter().enumerate() {
                if c as usize >= universe.cardinality(j) {
                    return Err(DataError::BadRow {
                        row: r,
                        message: format!(
                            "category index {c} out of range for feature {:?}",
                            universe.feature(j).name
                        ),
                    });
                }
            }
            cells.extend_from_slice(row);
        }
        Ok(Dataset {
            universe,
            cells,
            n: rows.len(),
        })
    }

    /// Builds a dataset from text cells; categories are taken in
    /// first-occurrence order per column.
    pub fn from_text_rows(names: Vec<String>, rows: &[Vec<String>]) -> Result<Self, DataError> {
        if names.is_empty() || rows.is_empty() {
            return Err(DataError::EmptyTable);
        }
        let k = names.len();
        let mut categories: Vec<Vec<String>> = vec![Vec::new(); k];
        let mut lookup: Vec<HashMap<String, u32>> = vec![HashMap::new(); k];
        let mut index_rows = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(DataError::BadRow {
                    row: r,
                    message: format!("expected {k} cells, found {}", row.len()),
                });
            }
            let mut out = Vec::with_capacity(k);
            for (j, cell) in row.iter().enumerate() {
                let next = categories[j].len() as u32;
                let idx = *lookup[j].entry(cell.clone()).or_insert_with(|| {
                    categories[j].push(cell.clone());
                    next
                });
                out.push(idx);
            }
            index_rows.push(out);
        }
        let features = names
            .into_iter()
            .zip(categories)
            .map(|(name, cats)| FeatureDef::new(name, cats))
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::new(ItemUniverse::new(features)?, index_rows)
    }

    /// Builds a dataset over a fixed universe from text cells. Unknown
    /// values are errors.
    pub fn from_text_rows_in(universe: ItemUniverse, rows: &[Vec<String>]) -> Result<Self, DataError> {
        let mut index_rows = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != universe.k() {
                return Err(DataError::BadRow {
                    row: r,
                    message: format!("expected {} cells, found {}", universe.k(), row.len()),
                });
            }
            let mut out = Vec::with_capacity(row.len());
            for (j, cell) in row.iter().enumerate() {
                let f = universe.feature(j);
                let c = f.category_index(cell).ok_or_else(|| DataError::UnknownItem {
                    feature: f.name.clone(),
                    value: cell.clone(),
                })?;
                out.push(c as u32);
            }
            index_rows.push(out);
        }
        Dataset::new(universe, index_rows)
    }

    pub fn universe(&self) -> &ItemUniverse {
        &self.universe
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, r: usize) -> &[u32] {
        let k = self.universe.k();
        &self.cells[r * k..(r + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> + '_ {
        let k = self.universe.k().max(1);
        self.cells.chunks(k).take(self.n)
    }

    pub fn cell_text(&self, r: usize, j: usize) -> &str {
        &self.universe.feature(j).categories[self.row(r)[j] as usize]
    }

    /// The row as a transaction: one item per feature, in feature order.
    pub fn transaction(&self, r: usize) -> Vec<Item> {
        self.row(r)
            .iter()
            .enumerate()
            .map(|(j, &c)| self.universe.item(j, c as usize))
            .collect()
    }

    pub fn contains(&self, r: usize, item: Item) -> bool {
        let j = self.universe.feature_of(item);
        self.row(r)[j] as usize == self.universe.category_of(item)
    }

    /// One-hot encoding of row `r` in `{0,1}^m`.
    pub fn one_hot(&self, r: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.universe.m()];
        for item in self.transaction(r) {
            x[item.0] = 1.0;
        }
        x
    }

    /// For every item, the set of rows containing it.
    pub fn item_rows(&self) -> Vec<RowSet> {
        let mut sets = vec![RowSet::empty(self.n); self.universe.m()];
        for r in 0..self.n {
            for (j, &c) in self.row(r).iter().enumerate() {
                sets[self.universe.item(j, c as usize).0].insert(r);
            }
        }
        sets
    }

    /// Category index of feature `j` for every row.
    pub fn get_labels(&self, j: usize) -> Vec<u32> {
        self.rows().map(|row| row[j]).collect()
    }

    pub fn get_labels_by_name(&self, feature: &str) -> Result<Vec<String>, DataError> {
        let j = self.universe.require_feature(feature)?;
        Ok((0..self.n).map(|r| self.cell_text(r, j).to_string()).collect())
    }

    /// The dataset with feature `j` deleted; `self` is unchanged.
    pub fn remove_feature(&self, j: usize) -> Dataset {
        let universe = self.universe.without_feature(j);
        let k = self.universe.k();
        let mut cells = Vec::with_capacity(self.n * (k - 1));
        for row in self.rows() {
            cells.extend(row.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, c)| *c));
        }
        Dataset {
            universe,
            cells,
            n: self.n,
        }
    }

    pub fn remove_feature_by_name(&self, feature: &str) -> Result<Dataset, DataError> {
        Ok(self.remove_feature(self.universe.require_feature(feature)?))
    }

    /// Rows at the given indices, over the same universe.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut cells = Vec::with_capacity(rows.len() * self.universe.k());
        for &r in rows {
            cells.extend_from_slice(self.row(r));
        }
        Dataset {
            universe: self.universe.clone(),
            cells,
            n: rows.len(),
        }
    }

    /// Text cells per row, in feature order.
    pub fn text_rows(&self) -> Vec<Vec<String>> {
        (0..self.n)
            .map(|r| {
                (0..self.universe.k())
                    .map(|j| self.cell_text(r, j).to_string())
                    .collect()
            })
            .collect()
    }

    /// SHA-256 over feature names, categories and cells.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for f in self.universe.features() {
            h.update(f.name.as_bytes());
            h.update([0x1f]);
            for c in &f.categories {
                h.update(c.as_bytes());
                h.update([0x1e]);
            }
            h.update([0x1d]);
        }
        for c in &self.cells {
            h.update(c.to_le_bytes());
        }
        h.update((self.n as u64).to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            features: self.universe.features().to_vec(),
            n: self.n,
            m: self.universe.m(),
        }
    }
}

/// JSON summary `{features:[{name,categories}], n, m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub features: Vec<FeatureDef>,
    pub n: usize,
    pub m: usize,
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
