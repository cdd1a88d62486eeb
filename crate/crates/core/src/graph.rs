//! Binary directed graphs and the continuous-vector to DAG mapping.
//!
//! An [`ActionVector`] of length `d(d+1)` is split into an ordering vector `h`
//! (first `d` entries) and a row-major `d x d` block of mask logits. The
//! ordering induces a fully connected DAG `H` with `H[i][j] = 1` iff
//! `h[i] > h[j]`; the logits induce a mask `S` with `S[i][j] = 1` iff the logit
//! is positive. Their element-wise product is always acyclic.

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Logits strictly above this value switch a mask cell on.
pub const MASK_THRESHOLD: f64 = 0.0;

/// Square 0/1 matrix; entry `(i, j) = 1` means an edge `i -> j`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AdjacencyMatrix {
    d: usize,
    cells: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn zeros(d: usize) -> Self {
        Self { d, cells: vec![0; d * d] }
    }

    /// Builds a matrix from nested rows. Diagonal entries must be zero.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let d = rows.len();
        let mut m = Self::zeros(d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {d}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 if i == j => {
                        return Err(Error::DimensionMismatch(format!("self-loop at node {i}")))
                    }
                    1 => m.set(i, j, true),
                    other => {
                        return Err(Error::DimensionMismatch(format!(
                            "entry ({i},{j}) = {other} is not 0/1"
                        )))
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = Self::zeros(d);
        for &(i, j) in edges {
            m.set(i, j, true);
        }
        m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.d + j] != 0
    }

    /// Sets an entry. Requests for a self-loop are ignored.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        if i != j {
            self.cells[i * self.d + j] = on as u8;
        }
    }

    pub fn edge_count(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.d;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(move |(k, _)| (k / d, k % d))
    }

    /// Parent indices of `j`, ascending.
    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.d).filter(|&i| self.get(i, j)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(self.d.max(1)).take(self.d).map(<[u8]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.cells
    }

    /// Entry-wise `0.0` / `1.0` copy, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| c as f64).collect()
    }

    /// Squared Frobenius distance, i.e. the number of differing cells.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        self.check_same_d(other)?;
        Ok(self.cells.iter().zip(&other.cells).filter(|(a, b)| a != b).count())
    }

    pub(crate) fn check_same_d(&self, other: &Self) -> Result<()> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch(format!(
                "graph sizes differ: {} vs {}",
                self.d, other.d
            )));
        }
        Ok(())
    }

    /// Same graph with nodes relabelled: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.d);
        for (i, j) in self.edges() {
            out.set(perm[i], perm[j], true);
        }
        out
    }

    /// Kahn topological order, smallest ready index first. `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let d = self.d;
        let mut indeg = vec![0usize; d];
        for (_, j) in self.edges() {
            indeg[j] += 1;
        }
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..d).filter(|&v| indeg[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for w in 0..d {
                if self.get(v, w) {
                    indeg[w] -= 1;
                    if indeg[w] == 0 {
                        ready.push(Reverse(w));
                    }
                }
            }
        }
        (order.len() == d).then_some(order)
    }

    /// Nodes reachable from `src` by a directed path of length >= 1.
    pub fn descendants(&self, src: usize) -> Vec<bool> {
        let mut seen = vec![false; self.d];
        let mut stack = self.children(src);
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend(self.children(v));
            }
        }
        seen
    }
}

impl fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl Serialize for AdjacencyMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for AdjacencyMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<u8>>::deserialize(de)?;
        AdjacencyMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A validated real vector of length `d(d+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector {
    d: usize,
    values: Vec<f64>,
}

impl ActionVector {
    pub fn len_for(d: usize) -> usize {
        d * (d + 1)
    }

    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        let expected = Self::len_for(d);
        if values.len() != expected {
            return Err(Error::InvalidAction { expected, got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteAction(k));
        }
        Ok(Self { d, values })
    }

    /// Recovers `d` from the vector length.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let d = ((((1 + 4 * n) as f64).sqrt() - 1.0) / 2.0).round() as usize;
        Self::new(d, values)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn ordering(&self) -> &[f64] {
        &self.values[..self.d]
    }

    pub fn mask_logits(&self) -> &[f64] {
        &self.values[self.d..]
    }
}

/// Permutation + strictly upper-triangular factorisation `A = Pᵀ U P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagDecomposition {
    /// `permutation[k][v] = 1` iff node `v` sits at position `k` of the order.
    pub permutation: AdjacencyMatrixDense,
    pub upper: AdjacencyMatrixDense,
}

/// Dense 0/1 matrix that, unlike [`AdjacencyMatrix`], may carry diagonal
/// entries. Used for permutation matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrixDense {
    pub d: usize,
    pub cells: Vec<u8>,
}

impl AdjacencyMatrixDense {
    pub fn zeros(d: usize) -> Self {
        Self { d, cells: vec![0; d * d] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.cells[i * d + i] = 1;
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u8) {
        self.cells[i * self.d + j] = v;
    }
}

/// Maps an action vector to an acyclic adjacency matrix `H ⊙ S`.
pub fn action_to_dag(a: &ActionVector) -> AdjacencyMatrix {
    dag_from_slices(a.d, a.ordering(), a.mask_logits())
}

/// Same as [`action_to_dag`] on raw slices; validates lengths.
pub fn action_slice_to_dag(d: usize, values: &[f64]) -> Result<AdjacencyMatrix> {
    let expected = ActionVector::len_for(d);
    if values.len() != expected {
        return Err(Error::InvalidAction { expected, got: values.len() });
    }
    Ok(dag_from_slices(d, &values[..d], &values[d..]))
}

fn dag_from_slices(d: usize, h: &[f64], logits: &[f64]) -> AdjacencyMatrix {
    let mut out = AdjacencyMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            if h[i] > h[j] && logits[i * d + j] > MASK_THRESHOLD {
                out.cells[i * d + j] = 1;
            }
        }
    }
    out
}

pub fn is_acyclic(a: &AdjacencyMatrix) -> bool {
    a.topological_order().is_some()
}

/// Flips every off-diagonal entry; the diagonal stays zero.
pub fn complement(a: &AdjacencyMatrix) -> AdjacencyMatrix {
    let d = a.d;
    let mut out = AdjacencyMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                out.cells[i * d + j] = 1 - a.cells[i * d + j];
            }
        }
    }
    out
}

/// Factorises an acyclic matrix as `Pᵀ U P` using the lowest-index-first Kahn
/// order.
pub fn dag_decompose(a: &AdjacencyMatrix) -> Result<DagDecomposition> {
    let order = a.topological_order().ok_or(Error::Cyclic)?;
    let d = a.d;
    let mut pos = vec![0usize; d];
    let mut permutation = AdjacencyMatrixDense::zeros(d);
    for (k, &v) in order.iter().enumerate() {
        permutation.set(k, v, 1);
        pos[v] = k;
    }
    let mut upper = AdjacencyMatrixDense::zeros(d);
    for (i, j) in a.edges() {
        upper.set(pos[i], pos[j], 1);
    }
    Ok(DagDecomposition { permutation, upper })
}
