use crate::graph::BoolMatrix;

/// Sparsity pattern in compressed-row form: which (row, col) entries exist.
/// Entries are ordered by row, then column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Pattern {
    /// Builds from per-row column lists (sorted here).
    pub fn from_rows(rows: usize, cols: usize, lists: Vec<Vec<usize>>) -> Self {
        assert_eq!(lists.len(), rows, "one column list per row");
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut list in lists {
            list.sort_unstable();
            list.dedup();
            assert!(list.last().is_none_or(|&c| c < cols), "column out of range");
            col_idx.extend(list);
            row_ptr.push(col_idx.len());
        }
        Self { rows, cols, row_ptr, col_idx }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_rows(rows, cols, (0..rows).map(|_| (0..cols).collect()).collect())
    }

    pub fn from_mask(mask: &BoolMatrix) -> Self {
        let lists = (0..mask.rows()).map(|r| (0..mask.cols()).filter(|&c| mask.get(r, c)).collect()).collect();
        Self::from_rows(mask.rows(), mask.cols(), lists)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Entry index range of row `r`.
    pub fn range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    pub fn row_cols(&self, r: usize) -> &[usize] {
        &self.col_idx[self.range(r)]
    }

    pub fn col(&self, entry: usize) -> usize {
        self.col_idx[entry]
    }

    /// `(row, col)` per entry, in entry order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| self.row_cols(r).iter().map(move |&c| (r, c)))
    }

    /// Entry index of `(r, c)` if present.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        self.row_cols(r).binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn to_mask(&self) -> BoolMatrix {
        let mut m = BoolMatrix::new(self.rows, self.cols);
        for (r, c) in self.entries() {
            m.set(r, c, true);
        }
        m
    }
}
