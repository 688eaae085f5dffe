//! Compressed sparse row storage for non-negative matrices.
//!
//! Every matrix the pipeline touches (adjacency, proximity orders, masks and
//! the similarity matrix) lives in a [`CsrMatrix`]. Two invariants hold for
//! every value of the type: column indices are strictly increasing within a
//! row, and every stored value is finite and strictly positive. Structural
//! zeros are never stored.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Borrowed view of a single row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl<'a> Row<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, checking every invariant.
    pub fn new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 {
            return Err(Error::validation(format!(
                "row pointer has length {}, expected {}",
                indptr.len(),
                rows + 1
            )));
        }
        if indptr[0] != 0 || indptr[rows] != indices.len() || indices.len() != values.len() {
            return Err(Error::validation("inconsistent CSR array lengths"));
        }
        for r in 0..rows {
            let (lo, hi) = (indptr[r], indptr[r + 1]);
            if lo > hi {
                return Err(Error::validation(format!("row pointer decreases at row {r}")));
            }
            let idx = &indices[lo..hi];
            if idx.iter().any(|&c| c >= cols) {
                return Err(Error::validation(format!("column index out of range in row {r}")));
            }
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(format!(
                    "column indices not strictly increasing in row {r}"
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::validation(format!(
                "stored values must be finite and strictly positive, found {v}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Trusted constructor for kernels that produce sorted, positive rows.
    pub(crate) fn from_parts_unchecked(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(indptr.len(), rows + 1);
        debug_assert!(values.iter().all(|v| *v > 0.0 && v.is_finite()));
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions
    /// are summed and zero values are dropped.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, v) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::validation(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(format!(
                    "entry ({r}, {c}) has invalid value {v}"
                )));
            }
        }
        entries.sort_by_key(|a| (a.0, a.1));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
        .without_zeros())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Converts a dense row-major matrix, skipping zero entries.
    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let rows = dense.len();
        let cols = dense.first().map_or(0, Vec::len);
        if dense.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged dense matrix"));
        }
        Self::from_triplets(
            rows,
            cols,
            dense.iter().enumerate().flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(j, v)| (i, j, *v))
            }),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// True when no entry is stored.
    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        Row {
            indices: &self.indices[lo..hi],
            values: &self.values[lo..hi],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.row(i);
        match row.indices.binary_search(&j) {
            Ok(p) => row.values[p],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).indices.binary_search(&j).is_ok()
    }

    /// Iterates stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).iter().map(move |(j, v)| (i, j, v)))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).values.iter().sum()).collect()
    }

    pub fn max_value(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (i, j, v) in self.iter() {
            let p = next[j];
            indices[p] = i;
            values[p] = v;
            next[j] += 1;
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// Exact (bitwise value) symmetry check.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.indptr == other.indptr && self.indices == other.indices
    }

    /// True when the two supports share at least one position.
    pub fn pattern_intersects(&self, other: &Self) -> bool {
        (0..self.rows.min(other.rows)).any(|i| {
            let (a, b) = (self.row(i).indices, other.row(i).indices);
            let (mut p, mut q) = (0, 0);
            while p < a.len() && q < b.len() {
                match a[p].cmp(&b[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => return true,
                }
            }
            false
        })
    }

    pub fn has_diagonal_entries(&self) -> bool {
        (0..self.rows.min(self.cols)).any(|i| self.contains(i, i))
    }

    /// Applies `f` to every stored value. Results that are zero are dropped.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = f(*v);
        }
        out.without_zeros()
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map_values(|v| v * factor)
    }

    /// Entry-wise sum `self + factor * other`.
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                left: self.shape(),
                right: other.shape(),
                context: "matrix addition",
            });
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        indptr.push(0);
        for i in 0..self.rows {
            let (a, b) = (self.row(i), other.row(i));
            let (mut p, mut q) = (0, 0);
            while p < a.len() || q < b.len() {
                let take_a = q >= b.len() || (p < a.len() && a.indices[p] <= b.indices[q]);
                let take_b = p >= a.len() || (q < b.len() && b.indices[q] <= a.indices[p]);
                let (col, v) = match (take_a, take_b) {
                    (true, true) => {
                        let r = (a.indices[p], a.values[p] + factor * b.values[q]);
                        p += 1;
                        q += 1;
                        r
                    }
                    (true, false) => {
                        let r = (a.indices[p], a.values[p]);
                        p += 1;
                        r
                    }
                    _ => {
                        let r = (b.indices[q], factor * b.values[q]);
                        q += 1;
                        r
                    }
                };
                if v > 0.0 {
                    indices.push(col);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self::new(self.rows, self.cols, indptr, indices, values)
    }

    /// The 0/1 indicator of the support.
    pub fn pattern(&self) -> Self {
        Self {
            values: vec![1.0; self.nnz()],
            ..self.clone()
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.cols]; self.rows];
        for (i, j, v) in self.iter() {
            dense[i][j] = v;
        }
        dense
    }

    fn without_zeros(mut self) -> Self {
        if self.values.iter().all(|v| *v > 0.0) {
            return self;
        }
        let mut write = 0;
        let mut indptr = vec![0usize; self.rows + 1];
        for r in 0..self.rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                if self.values[p] > 0.0 {
                    self.indices[write] = self.indices[p];
                    self.values[write] = self.values[p];
                    write += 1;
                }
            }
            indptr[r + 1] = write;
        }
        self.indices.truncate(write);
        self.values.truncate(write);
        self.indptr = indptr;
        self
    }
}

/// How two aligned operand entries combine inside a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Combine {
    /// `x * y`, ordinary matrix multiplication.
    Multiply,
    /// `x + y` gated on `x * y != 0`.
    Add,
}

/// Per-row product options.
pub(crate) struct ProductOptions<'a> {
    pub combine: Combine,
    pub exclude_diagonal: bool,
    /// Results `<= drop_tolerance` are not stored. Zero keeps every positive value.
    pub drop_tolerance: f64,
    /// Emits the forbidden columns of a given row.
    pub forbidden: Option<&'a (dyn Fn(usize, &mut dyn FnMut(usize)) + Sync)>,
}

/// Per-column accumulator state, packed so one update touches one cache line.
#[derive(Clone, Copy, Default)]
#[repr(C, align(16))]
struct Cell {
    acc: f64,
    touched: u32,
    blocked: u32,
}

struct Scratch {
    cells: Vec<Cell>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(cols: usize) -> Self {
        Self {
            cells: vec![Cell::default(); cols],
            touched: Vec::new(),
        }
    }
}

/// Row-parallel sparse product `x * y` with optional masking.
///
/// Each output row is accumulated independently in a dense scratch row. The
/// accumulation order of every entry is fixed by the column order of `x` and
/// `y`, so the result does not depend on how rows are scheduled.
pub(crate) fn row_product(x: &CsrMatrix, y: &CsrMatrix, opts: &ProductOptions<'_>) -> Result<CsrMatrix> {
    if x.cols != y.rows {
        return Err(Error::Shape {
            left: x.shape(),
            right: y.shape(),
            context: "matrix product",
        });
    }
    if x.rows >= u32::MAX as usize {
        return Err(Error::validation("matrix products support fewer than 2^32 - 1 rows"));
    }
    let cols = y.cols;
    // each chunk appends its rows to one buffer; chunks arrive in row order
    let mut chunks: Vec<RowChunk> = (0..x.rows)
        .into_par_iter()
        .with_min_len(64)
        .fold(
            || (Scratch::new(cols), RowChunk::default()),
            |(mut s, mut chunk), i| {
                product_row(x, y, i, opts, &mut s, &mut chunk.indices, &mut chunk.values);
                chunk.ends.push(chunk.indices.len());
                (s, chunk)
            },
        )
        .map(|(_, chunk)| chunk)
        .collect();

    let mut indptr = Vec::with_capacity(x.rows + 1);
    indptr.push(0);
    if chunks.len() == 1 {
        let chunk = chunks.pop().unwrap();
        indptr.extend(chunk.ends);
        return Ok(CsrMatrix::from_parts_unchecked(x.rows, cols, indptr, chunk.indices, chunk.values));
    }
    let nnz = chunks.iter().map(|c| c.indices.len()).sum();
    let mut indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for chunk in chunks {
        let offset = indices.len();
        indptr.extend(chunk.ends.iter().map(|e| e + offset));
        indices.extend_from_slice(&chunk.indices);
        values.extend_from_slice(&chunk.values);
    }
    Ok(CsrMatrix::from_parts_unchecked(x.rows, cols, indptr, indices, values))
}

/// Consecutive output rows; `ends[r]` is the end offset of row `r` in the chunk.
#[derive(Default)]
struct RowChunk {
    ends: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

fn product_row(
    x: &CsrMatrix,
    y: &CsrMatrix,
    i: usize,
    opts: &ProductOptions<'_>,
    s: &mut Scratch,
    idx: &mut Vec<usize>,
    val: &mut Vec<f64>,
) {
    // stamps are row index + 1 so scratch never needs clearing
    let stamp = i as u32 + 1;
    if let Some(forbidden) = opts.forbidden {
        let cells = &mut s.cells;
        forbidden(i, &mut |j| cells[j].blocked = stamp);
    }
    s.touched.clear();
    for (t, xv) in x.row(i).iter() {
        for (j, yv) in y.row(t).iter() {
            let cell = &mut s.cells[j];
            if (opts.exclude_diagonal && j == i) || cell.blocked == stamp {
                continue;
            }
            let term = match opts.combine {
                Combine::Multiply => xv * yv,
                Combine::Add => {
                    if xv * yv != 0.0 {
                        xv + yv
                    } else {
                        continue;
                    }
                }
            };
            if cell.touched != stamp {
                cell.touched = stamp;
                cell.acc = 0.0;
                s.touched.push(j);
            }
            cell.acc += term;
        }
    }
    s.touched.sort_unstable();
    for &j in &s.touched {
        let v = s.cells[j].acc;
        if v > opts.drop_tolerance && v > 0.0 {
            idx.push(j);
            val.push(v);
        }
    }
}
