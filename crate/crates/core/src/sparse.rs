//! Compressed sparse row matrices and an envelope (skyline) Cholesky
//! factorisation with reverse Cuthill–McKee ordering.
//!
//! The factorisation keeps an optional dense "tail" block (for example fixed
//! effects coupled to every latent node) at the end of the ordering so that
//! only the last few rows of the envelope become dense.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|&(j, _)| j);
            for &(j, v) in &row {
                if indices.len() > indptr[i] && *indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: entries.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.iter().collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut triplets = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&j, &b) in ocols.iter().zip(ovals) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                triplets.push((i, j, acc[j]));
                acc[j] = 0.0;
                mark[j] = false;
            }
            touched.clear();
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, &triplets)
    }

    /// `Σ_k c_k M_k` over matrices of identical shape.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut triplets = Vec::new();
        for (c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            triplets.extend(m.iter().map(|(i, j, v)| (i, j, c * v)));
        }
        CsrMatrix::from_triplets(nrows, ncols, &triplets)
    }

    /// Scales row `i` by `s[i]`.
    pub fn scale_rows(&self, s: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] *= s[i];
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && self.iter().all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol * (1.0 + v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            d[i][j] += v;
        }
        d
    }

    /// Coordinate-triplet text (`row col value`, zero based) for debugging.
    pub fn to_triplet_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} {} {}", self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.iter() {
            let _ = writeln!(out, "{i} {j} {v:e}");
        }
        out
    }
}

/// Reverse Cuthill–McKee ordering of the graph given by `adjacency`.
fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    let bfs_levels = |start: usize| -> (usize, usize) {
        // returns (farthest node, eccentricity) restricted to start's component
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut last = start;
        while let Some(u) = queue.pop_front() {
            last = u;
            for &v in &adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let ecc = dist[last];
        let far = (0..n)
            .filter(|&v| dist[v] == ecc)
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(last);
        (far, ecc)
    };

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut far, mut ecc) = bfs_levels(start);
        for _ in 0..8 {
            let (far2, ecc2) = bfs_levels(far);
            if ecc2 <= ecc {
                break;
            }
            start = far;
            far = far2;
            ecc = ecc2;
        }
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        let mut nbrs = Vec::new();
        while let Some(u) = queue.pop_front() {
            order.push(u);
            nbrs.clear();
            nbrs.extend(adjacency[u].iter().copied().filter(|&v| !visited[v]));
            nbrs.sort_by_key(|&v| (degree[v], v));
            for &v in &nbrs {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `iperm[old] = new`
    iperm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

/// Fill-reducing ordering and envelope layout for a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct EnvelopeStructure {
    perm: Vec<usize>,
    iperm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
}

impl EnvelopeStructure {
    /// Orders the leading `n - tail` indices by reverse Cuthill–McKee and keeps
    /// the last `tail` indices in place at the end.
    pub fn analyse(a: &CsrMatrix, tail: usize) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        assert!(tail <= n);
        let lead = n - tail;
        let mut adjacency = vec![Vec::new(); lead];
        for (i, j, _) in a.iter() {
            if i < lead && j < lead && i != j {
                adjacency[i].push(j);
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        let mut perm = reverse_cuthill_mckee(&adjacency);
        perm.extend(lead..n);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j, _) in a.iter() {
            let (pi, pj) = (iperm[i], iperm[j]);
            let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
            first[r] = first[r].min(c);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        EnvelopeStructure {
            perm,
            iperm,
            first,
            offsets,
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn envelope_size(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Whether every nonzero of `a` falls inside this envelope.
    pub fn admits(&self, a: &CsrMatrix) -> bool {
        a.nrows() == self.dim()
            && a.iter().all(|(i, j, _)| {
                let (pi, pj) = (self.iperm[i], self.iperm[j]);
                let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
                c >= self.first[r]
            })
    }
}

impl SparseCholesky {
    /// Analyses and factors `a` (symmetric; both triangles stored).
    pub fn factor(a: &CsrMatrix, tail: usize) -> Result<Self> {
        let s = EnvelopeStructure::analyse(a, tail);
        SparseCholesky::factor_with(&s, a, 0.0)
    }

    /// Factors `a + shift·I` using a previously computed structure.
    pub fn factor_with(s: &EnvelopeStructure, a: &CsrMatrix, shift: f64) -> Result<Self> {
        let n = s.dim();
        assert_eq!(a.nrows(), n);
        let mut values = vec![0.0; s.envelope_size()];
        for (i, j, v) in a.iter() {
            let (pi, pj) = (s.iperm[i], s.iperm[j]);
            if pi >= pj {
                assert!(pj >= s.first[pi], "entry outside analysed envelope");
                values[s.offsets[pi] + pj - s.first[pi]] += v;
            }
        }
        if shift != 0.0 {
            for i in 0..n {
                values[s.offsets[i] + i - s.first[i]] += shift;
            }
        }
        for i in 0..n {
            let fi = s.first[i];
            let row_i = s.offsets[i];
            for j in fi..i {
                let fj = s.first[j];
                let start = fi.max(fj);
                let mut sum = values[row_i + j - fi];
                if start < j {
                    let li = &values[row_i + start - fi..row_i + j - fi];
                    let row_j = s.offsets[j];
                    let lj = &values[row_j + start - fj..row_j + j - fj];
                    sum -= dot(li, lj);
                }
                let djj = values[s.offsets[j] + j - fj];
                values[row_i + j - fi] = sum / djj;
            }
            let li = &values[row_i..row_i + i - fi];
            let d = values[row_i + i - fi] - dot(li, li);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: s.perm[i],
                    value: d,
                });
            }
            values[row_i + i - fi] = d.sqrt();
        }
        Ok(SparseCholesky {
            n,
            perm: s.perm.clone(),
            iperm: s.iperm.clone(),
            first: s.first.clone(),
            offsets: s.offsets.clone(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn diag(&self, i: usize) -> f64 {
        self.values[self.offsets[i] + i - self.first[i]]
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i] + i - self.first[i]]
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.diag(i).ln()).sum::<f64>()
    }

    /// In-place `L y = b` over permuted coordinates, starting at `from`.
    fn forward(&self, y: &mut [f64], from: usize) {
        for i in from..self.n {
            let fi = self.first[i].max(from);
            let row = self.row(i);
            let s = dot(&row[fi - self.first[i]..], &y[fi..i]);
            y[i] = (y[i] - s) / self.diag(i);
        }
    }

    /// In-place `Lᵀ x = y` over permuted coordinates.
    fn backward(&self, x: &mut [f64]) {
        for i in (0..self.n).rev() {
            let xi = x[i] / self.diag(i);
            x[i] = xi;
            let fi = self.first[i];
            for (k, l) in self.row(i).iter().enumerate() {
                x[fi + k] -= l * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.forward(&mut y, 0);
        self.backward(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Maps a standard normal vector `z` to a draw from `N(0, A⁻¹)`.
    pub fn sample_from_standard(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n);
        let mut y = z.to_vec();
        self.backward(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// `vᵀ A⁻¹ v` for a sparse vector given as `(index, value)` pairs.
    pub fn quad_form_inverse(&self, v: &[(usize, f64)]) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let mut y = vec![0.0; self.n];
        let mut from = self.n;
        for &(i, val) in v {
            let p = self.iperm[i];
            y[p] += val;
            from = from.min(p);
        }
        self.forward(&mut y, from);
        y[from..].iter().map(|t| t * t).sum()
    }

    /// Diagonal entry `(A⁻¹)_{ii}`.
    pub fn inverse_diagonal_entry(&self, i: usize) -> f64 {
        self.quad_form_inverse(&[(i, 1.0)])
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}
