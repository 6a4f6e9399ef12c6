use super::{DataError, Item, ItemUniverse};

/// Dense row-major matrix of probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Option<Self> {
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

/// Probe vectors for one marked feature subset `S`.
///
/// Row `r` marks one category per feature of `S` with 1 and its siblings
/// with 0; every feature outside `S` carries the uniform prior `1/c_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeMatrix {
    marked: Vec<usize>,
    values: Matrix,
    provenance: Vec<Vec<u32>>,
}

impl ProbeMatrix {
    /// Marked feature indices, ascending.
    pub fn marked_features(&self) -> &[usize] {
        &self.marked
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.values.row(r)
    }

    /// Marked category per feature of `S` for row `r`.
    pub fn provenance(&self, r: usize) -> &[u32] {
        &self.provenance[r]
    }

    /// Marked items of row `r`, ascending by feature.
    pub fn marked_items(&self, universe: &ItemUniverse, r: usize) -> Vec<Item> {
        self.marked
            .iter()
            .zip(&self.provenance[r])
            .map(|(&j, &c)| universe.item(j, c as usize))
            .collect()
    }

    /// The probe values with the column block of feature `j` deleted.
    pub fn remove_feature(&self, universe: &ItemUniverse, j: usize) -> Matrix {
        remove_block(&self.values, universe, j)
    }
}

/// Deletes the column block of feature `j` from a matrix laid out over `universe`.
pub fn remove_block(matrix: &Matrix, universe: &ItemUniverse, j: usize) -> Matrix {
    let block = universe.block(j);
    let cols = matrix.cols() - block.len();
    let mut out = Matrix::zeros(matrix.rows(), cols);
    for r in 0..matrix.rows() {
        let src = matrix.row(r);
        let dst = out.row_mut(r);
        dst[..block.start].copy_from_slice(&src[..block.start]);
        dst[block.start..].copy_from_slice(&src[block.end..]);
    }
    out
}

/// Builds the probe vector `x(X)` for an arbitrary antecedent `X` with at
/// most one item per feature.
pub fn probe_vector(universe: &ItemUniverse, antecedent: &[Item]) -> Vec<f64> {
    let mut x = vec![0.0; universe.m()];
    let mut marked = vec![false; universe.k()];
    for &item in antecedent {
        marked[universe.feature_of(item)] = true;
        x[item.0] = 1.0;
    }
    for (j, is_marked) in marked.into_iter().enumerate() {
        if !is_marked {
            let prior = 1.0 / universe.cardinality(j) as f64;
            x[universe.block(j)].fill(prior);
        }
    }
    x
}

/// One probe per element of the Cartesian product of `S`'s category lists,
/// in lexicographic order of category indices (last feature varies fastest).
pub fn generate_probe_vectors(features: &[usize], universe: &ItemUniverse) -> Result<ProbeMatrix, DataError> {
    let mut marked = features.to_vec();
    marked.sort_unstable();
    marked.dedup();
    if marked.is_empty() || marked.len() != features.len() || marked[marked.len() - 1] >= universe.k() {
        return Err(DataError::BadFeatureSet);
    }
    let count: usize = marked.iter().map(|&j| universe.cardinality(j)).product();
    let m = universe.m();

    let mut base = vec![0.0; m];
    for j in 0..universe.k() {
        if marked.binary_search(&j).is_err() {
            let prior = 1.0 / universe.cardinality(j) as f64;
            base[universe.block(j)].fill(prior);
        }
    }

    let mut values = Matrix::zeros(count, m);
    let mut provenance = Vec::with_capacity(count);
    let mut odometer = vec![0u32; marked.len()];
    for r in 0..count {
        let row = values.row_mut(r);
        row.copy_from_slice(&base);
        for (&j, &c) in marked.iter().zip(&odometer) {
            row[universe.item(j, c as usize).0] = 1.0;
        }
        provenance.push(odometer.clone());
        for pos in (0..marked.len()).rev() {
            odometer[pos] += 1;
            if (odometer[pos] as usize) < universe.cardinality(marked[pos]) {
                break;
            }
            odometer[pos] = 0;
        }
    }
    Ok(ProbeMatrix {
        marked,
        values,
        provenance,
    })
}

/// All feature subsets of size `1..=max_size`, by size and then lexicographically.
pub fn enumerate_feature_sets(k: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in 1..=max_size.min(k) {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            out.push(combo.clone());
            let Some(pos) = (0..size).rev().find(|&p| combo[p] < k - size + p) else {
                break;
            };
            combo[pos] += 1;
            for q in pos + 1..size {
                combo[q] = combo[q - 1] + 1;
            }
        }
    }
    out
}

/// `Σ_{i=1..a} C(k, i)`.
pub fn combination_count(k: usize, max_size: usize) -> u128 {
    let mut total = 0u128;
    let mut binom = 1u128;
    for i in 1..=max_size.min(k) {
        binom = binom * (k - i + 1) as u128 / i as u128;
        total += binom;
    }
    total
}

/// `Σ_S Π_{f∈S} c_f` over all subsets of size `1..=max_size`.
pub fn probe_count(universe: &ItemUniverse, max_size: usize) -> u128 {
    // Elementary symmetric polynomials of the cardinalities.
    let a = max_size.min(universe.k());
    let mut e = vec![0u128; a + 1];
    e[0] = 1;
    for j in 0..universe.k() {
        let c = universe.cardinality(j) as u128;
        for i in (1..=a).rev() {
            e[i] += e[i - 1] * c;
        }
    }
    e[1..].iter().sum()
}
