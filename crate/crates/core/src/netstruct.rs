//! Graphs, infection matrices and healing rates.
//!
//! Every matrix follows one arc convention: a positive entry `(i, j)` means
//! node `i` can be infected by node `j` (an arc from `j` to `i`). Rows are
//! receivers, columns are sources.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Graph families used by the approximation experiments, plus a directed cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    /// Path `1 - 2 - ... - n`.
    Line,
    /// Hub at node 1 connected to every other node.
    Star,
    /// Every pair of distinct nodes connected.
    Complete,
    /// Directed cycle `1 -> 2 -> ... -> n -> 1`.
    Cycle,
}

impl GraphKind {
    pub const ALL: [GraphKind; 4] = [
        GraphKind::Line,
        GraphKind::Star,
        GraphKind::Complete,
        GraphKind::Cycle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Line => "line",
            GraphKind::Star => "star",
            GraphKind::Complete => "complete",
            GraphKind::Cycle => "cycle",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GraphKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown graph kind `{s}`")))
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn check_nonnegative(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidEntry {
                    what,
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Strong connectivity of the off-diagonal pattern of `m`, by forward and
/// reverse breadth-first search from node 0.
pub(crate) fn offdiag_strongly_connected(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n <= 1 {
        return true;
    }
    let reach_all = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if seen[v] || v == u {
                    continue;
                }
                // forward: arc u -> v exists when m[(v, u)] != 0
                let w = if forward { m[(v, u)] } else { m[(u, v)] };
                if w != 0.0 {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    };
    reach_all(true) && reach_all(false)
}

/// Whether the directed graph of nonzero entries of `m` is strongly connected.
///
/// A `1x1` matrix counts as irreducible only when its entry is nonzero, so
/// the complete graph on one node without self-loops is reported reducible.
pub fn is_irreducible(m: &DMatrix<f64>) -> Result<bool> {
    let n = check_square(m)?;
    Ok(match n {
        0 => false,
        1 => m[(0, 0)] != 0.0,
        _ => offdiag_strongly_connected(m),
    })
}

/// Nonnegative adjacency matrix of a (possibly weighted) directed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix(DMatrix<f64>);

impl AdjacencyMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = check_square(&m)?;
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        check_nonnegative("adjacency matrix", &m)?;
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Arc from `j` to `i`.
    pub fn has_arc(&self, i: usize, j: usize) -> bool {
        self.0[(i, j)] > 0.0
    }

    pub fn is_irreducible(&self) -> bool {
        is_irreducible(&self.0).unwrap_or(false)
    }

    /// Copy with every diagonal entry set to 1 (`true`) or 0 (`false`).
    pub fn with_self_loops(&self, on: bool) -> Self {
        let mut m = self.0.clone();
        m.fill_diagonal(if on { 1.0 } else { 0.0 });
        Self(m)
    }
}

/// Builds one of the standard graph families as a binary adjacency matrix.
pub fn generate_graph(kind: GraphKind, n: usize, self_loops: bool) -> Result<AdjacencyMatrix> {
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut m = DMatrix::zeros(n, n);
    match kind {
        GraphKind::Line => {
            for i in 1..n {
                m[(i, i - 1)] = 1.0;
                m[(i - 1, i)] = 1.0;
            }
        }
        GraphKind::Star => {
            for i in 1..n {
                m[(0, i)] = 1.0;
                m[(i, 0)] = 1.0;
            }
        }
        GraphKind::Complete => {
            m.fill(1.0);
        }
        GraphKind::Cycle => {
            if n > 1 {
                for j in 0..n {
                    m[((j + 1) % n, j)] = 1.0;
                }
            }
        }
    }
    m.fill_diagonal(if self_loops { 1.0 } else { 0.0 });
    Ok(AdjacencyMatrix(m))
}

/// Per-node healing rates; the diagonal matrix `D = diag(delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HealingRates(DVector<f64>);

impl HealingRates {
    pub fn new(delta: DVector<f64>) -> Result<Self> {
        if delta.is_empty() {
            return Err(Error::EmptyGraph);
        }
        for (i, &d) in delta.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidEntry {
                    what: "healing rates",
                    row: i,
                    col: 0,
                    value: d,
                });
            }
        }
        Ok(Self(delta))
    }

    pub fn from_slice(delta: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(delta))
    }

    pub fn uniform(n: usize, delta: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, delta))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn all_positive(&self) -> bool {
        self.0.iter().all(|&d| d > 0.0)
    }

    pub fn diagonal_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.0 * factor)
    }

    /// `delta_i + c` for every node.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.0.add_scalar(c))
    }
}

/// Nonnegative matrix of infection rates `beta_ij`.
///
/// Irreducibility is computed once at construction; operations that need it
/// (dynamics, equilibria) check [`InfectionMatrix::is_irreducible`].
#[derive(Debug, Clone, PartialEq)]
pub struct InfectionMatrix {
    m: DMatrix<f64>,
    irreducible: bool,
}

impl InfectionMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = check_square(&m)?;
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        check_nonnegative("infection matrix", &m)?;
        let irreducible = is_irreducible(&m)?;
        Ok(Self { m, irreducible })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn require_irreducible(&self, what: &'static str) -> Result<()> {
        if self.irreducible {
            Ok(())
        } else {
            Err(Error::Reducible { what })
        }
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.n()).all(|i| self.m[(i, i)] == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.m * factor)
    }

    /// `B + diag(k)`.
    pub fn with_added_diagonal(&self, k: &DVector<f64>) -> Result<Self> {
        if k.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "diagonal shift",
                expected: self.n(),
                found: k.len(),
            });
        }
        let mut m = self.m.clone();
        for i in 0..self.n() {
            m[(i, i)] += k[i];
        }
        Self::new(m)
    }
}

/// Infection rates attached to the arcs of a graph.
#[derive(Debug, Clone, PartialEq)]
pub enum InfectionRates {
    /// The same `beta` on every arc: `B = beta * A`.
    Homogeneous(f64),
    /// Individual rates; entry `(i, j)` may be nonzero only where the graph has an arc.
    PerEdge(DMatrix<f64>),
}

/// Combines a graph with infection rates.
///
/// The result is entrywise `A .* R` (or `beta * A`). A reducible result is
/// not an error here; it is reported by [`InfectionMatrix::is_irreducible`].
pub fn build_infection_matrix(
    graph: &AdjacencyMatrix,
    rates: &InfectionRates,
) -> Result<InfectionMatrix> {
    let a = graph.matrix();
    match rates {
        InfectionRates::Homogeneous(beta) => {
            if !beta.is_finite() || *beta < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "infection rate must be nonnegative, got {beta}"
                )));
            }
            InfectionMatrix::new(a * *beta)
        }
        InfectionRates::PerEdge(r) => {
            if r.shape() != a.shape() {
                return Err(Error::DimensionMismatch {
                    context: "per-edge infection rates",
                    expected: a.nrows(),
                    found: r.nrows(),
                });
            }
            check_nonnegative("per-edge infection rates", r)?;
            for j in 0..a.ncols() {
                for i in 0..a.nrows() {
                    if a[(i, j)] == 0.0 && r[(i, j)] != 0.0 {
                        return Err(Error::RateOnNonArc {
                            row: i,
                            col: j,
                            value: r[(i, j)],
                        });
                    }
                }
            }
            InfectionMatrix::new(a.component_mul(r))
        }
    }
}

/// Row-major nested vectors to a dense matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            context: "matrix rows",
            expected: ncols,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
