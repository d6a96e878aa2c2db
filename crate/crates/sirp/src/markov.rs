//! Exact finite-Markov-chain primitives.
//!
//! Row-stochastic matrices over a finite state space, communicating /
//! recurrent class structure, invariant measures, and the pseudo-inverse
//! `Q` of `I - M` characterized by
//!
//! ```text
//! Q 1 = 0,    Q (I - M) = (I - M) Q = I - Pi
//! ```
//!
//! where `Pi` is the rank-one matrix whose rows all equal the invariant
//! measure. Everything here is dense and exact at desk scale (a few
//! hundred states); values are immutable after construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SirpError};

/// Row sums of a Markov matrix must match 1 to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Identity residual accepted for invariant measures and pseudo-inverses.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Ordered set of state labels; the index order is canonical for every
/// matrix and vector in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(SirpError::EmptyInput("state space"));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(SirpError::Config(format!("duplicate state label '{a}'")));
            }
        }
        Ok(Self { labels })
    }

    /// `s0`, `s1`, ... placeholder labels.
    pub fn indexed(size: usize) -> Self {
        Self {
            labels: (0..size).map(|i| format!("s{i}")).collect(),
        }
    }

    /// Label pairs `x|y` for a product chain on `E1 x E2`.
    pub fn product(a: &StateSpace, b: &StateSpace) -> Self {
        let mut labels = Vec::with_capacity(a.size() * b.size());
        for x in &a.labels {
            for y in &b.labels {
                labels.push(format!("{x}|{y}"));
            }
        }
        Self { labels }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }
}

/// Probability vector on the state space (entries >= 0, sum 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    weights: DVector<f64>,
}

impl ProbVector {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(SirpError::EmptyInput("probability vector"));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(SirpError::InvalidProbVector(format!("entry {w} out of range")));
        }
        let sum: f64 = weights.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(SirpError::InvalidProbVector(format!(
                "entries sum to {sum}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Build from nonnegative weights, dividing by their sum.
    pub fn normalized(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(SirpError::EmptyInput("probability vector"));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(SirpError::InvalidProbVector(format!("entry {w} out of range")));
        }
        let sum: f64 = weights.sum();
        if sum <= 0.0 {
            return Err(SirpError::InvalidProbVector("zero total mass".into()));
        }
        Ok(Self { weights: weights / sum })
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            weights: DVector::from_element(size, 1.0 / size as f64),
        }
    }

    pub fn point_mass(size: usize, at: usize) -> Self {
        let mut w = DVector::zeros(size);
        w[at] = 1.0;
        Self { weights: w }
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn min(&self) -> f64 {
        self.weights.min()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `mu f = sum_x mu(x) f(x)`.
    pub fn expect(&self, f: &DVector<f64>) -> Result<f64> {
        if f.len() != self.size() {
            return Err(SirpError::DimensionMismatch {
                expected: self.size(),
                got: f.len(),
            });
        }
        Ok(self.weights.dot(f))
    }
}

/// Row-stochastic matrix over the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMatrix {
    entries: DMatrix<f64>,
}

impl MarkovMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(SirpError::EmptyInput("Markov matrix"));
        }
        if entries.nrows() != entries.ncols() {
            return Err(SirpError::InvalidMarkovMatrix(format!(
                "{}x{} is not square",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for x in 0..entries.nrows() {
            let mut sum = 0.0;
            for y in 0..entries.ncols() {
                let e = entries[(x, y)];
                if e < 0.0 || !e.is_finite() {
                    return Err(SirpError::InvalidMarkovMatrix(format!(
                        "entry ({x},{y}) = {e} out of range"
                    )));
                }
                sum += e;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(SirpError::InvalidMarkovMatrix(format!(
                    "row {x} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(SirpError::InvalidMarkovMatrix("ragged rows".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m)
    }

    pub fn identity(size: usize) -> Self {
        Self {
            entries: DMatrix::identity(size, size),
        }
    }

    /// Rank-one matrix `Pi(x, y) = pi(y)`.
    pub fn rank_one(pi: &ProbVector) -> Self {
        let n = pi.size();
        Self {
            entries: DMatrix::from_fn(n, n, |_, y| pi.get(y)),
        }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn row(&self, x: usize) -> DVector<f64> {
        self.entries.row(x).transpose()
    }

    /// `Mf(x) = sum_y M(x, y) f(y)`.
    pub fn apply_to_function(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        if f.len() != self.size() {
            return Err(SirpError::DimensionMismatch {
                expected: self.size(),
                got: f.len(),
            });
        }
        Ok(&self.entries * f)
    }

    /// `mu M(y) = sum_x mu(x) M(x, y)`.
    pub fn apply_to_measure(&self, mu: &ProbVector) -> Result<ProbVector> {
        if mu.size() != self.size() {
            return Err(SirpError::DimensionMismatch {
                expected: self.size(),
                got: mu.size(),
            });
        }
        let out = self.entries.tr_mul(mu.as_vector());
        // Row-stochasticity keeps the total mass at 1 up to round-off;
        // renormalize so the result satisfies the ProbVector contract.
        ProbVector::normalized(out.map(|w| w.max(0.0)))
    }

    /// Communicating classes of the digraph of strictly positive entries,
    /// each flagged recurrent when it is closed (no positive exit).
    pub fn class_decomposition(&self) -> ClassDecomposition {
        let n = self.size();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|x| (0..n).filter(|&y| self.entries[(x, y)] > 0.0).collect())
            .collect();
        let comp = strongly_connected_components(&adj);

        let mut classes: Vec<Vec<usize>> = vec![Vec::new(); comp.count];
        for (x, &c) in comp.assignment.iter().enumerate() {
            classes[c].push(x);
        }
        // Canonical order: by smallest member.
        classes.sort_by_key(|c| c[0]);

        let recurrent = classes
            .iter()
            .map(|class| {
                class.iter().all(|&x| {
                    adj[x].iter().all(|y| class.contains(y))
                })
            })
            .collect();

        ClassDecomposition { classes, recurrent }
    }

    /// Exactly one closed communicating class.
    pub fn is_indecomposable(&self) -> bool {
        self.class_decomposition().closed_count() == 1
    }

    /// One closed class covering the whole state space.
    pub fn is_irreducible(&self) -> bool {
        let d = self.class_decomposition();
        d.classes.len() == 1 && d.recurrent[0]
    }

    /// Unique invariant probability measure `pi` with `pi M = pi`.
    ///
    /// Solves `(I - M^T) pi = 0` with one equation replaced by the
    /// normalization, then polishes with one step of iterative refinement.
    /// Rejects decomposable inputs, where `pi` is not unique.
    pub fn invariant_measure(&self) -> Result<ProbVector> {
        let d = self.class_decomposition();
        let closed = d.closed_count();
        if closed != 1 {
            return Err(SirpError::Decomposable {
                closed_classes: closed,
            });
        }
        let n = self.size();
        let mut a = DMatrix::identity(n, n) - self.entries.transpose();
        for y in 0..n {
            a[(n - 1, y)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;

        let lu = a.clone().lu();
        let mut x = lu
            .solve(&b)
            .ok_or_else(|| SirpError::SingularSystem("invariant measure".into()))?;
        // One refinement pass tightens the residual to near round-off.
        let r = &b - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }

        // Transient states carry exactly zero mass; clip solver noise.
        let pi = ProbVector::normalized(x.map(|w| if w > 0.0 { w } else { 0.0 }))?;
        let residual = (self.entries.tr_mul(pi.as_vector()) - pi.as_vector()).amax();
        if residual > IDENTITY_TOL {
            return Err(SirpError::SingularSystem(format!(
                "invariant measure residual {residual:.3e}"
            )));
        }
        Ok(pi)
    }

    /// Pseudo-inverse `Q` of `-L = I - M`, via `Q = (I - M + Pi)^{-1} - Pi`.
    ///
    /// The closed form satisfies both defining identities whenever `M` is
    /// indecomposable; the identities (not the formula) are what tests and
    /// callers rely on.
    pub fn pseudo_inverse(&self) -> Result<PseudoInverse> {
        let pi = self.invariant_measure()?;
        let n = self.size();
        let big_pi = MarkovMatrix::rank_one(&pi);
        let a = DMatrix::identity(n, n) - &self.entries + big_pi.entries();
        let lu = a.clone().lu();
        let id = DMatrix::identity(n, n);
        let mut z = lu
            .solve(&id)
            .ok_or_else(|| SirpError::SingularSystem("pseudo-inverse".into()))?;
        let r = &id - &a * &z;
        if let Some(dz) = lu.solve(&r) {
            z += dz;
        }
        let q = z - big_pi.entries();
        Ok(PseudoInverse {
            entries: q,
            for_matrix: self.clone(),
            invariant: pi,
        })
    }
}

/// Partition of the state space into communicating classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecomposition {
    /// Classes ordered by smallest member; members ascending.
    pub classes: Vec<Vec<usize>>,
    /// Per class: whether it is closed (recurrent).
    pub recurrent: Vec<bool>,
}

impl ClassDecomposition {
    pub fn closed_count(&self) -> usize {
        self.recurrent.iter().filter(|r| **r).count()
    }
}

/// The matrix `Q` with `Q1 = 0` and `Q(I-M) = (I-M)Q = I - Pi`.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    entries: DMatrix<f64>,
    for_matrix: MarkovMatrix,
    invariant: ProbVector,
}

impl PseudoInverse {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn for_matrix(&self) -> &MarkovMatrix {
        &self.for_matrix
    }

    pub fn invariant(&self) -> &ProbVector {
        &self.invariant
    }

    /// `max_{x,y} |Q(x,y)|`.
    pub fn sup_norm(&self) -> f64 {
        self.entries.amax()
    }

    /// Worst deviation over both defining identities and `Q1 = 0`.
    pub fn identity_residual(&self) -> f64 {
        let n = self.entries.nrows();
        let id = DMatrix::identity(n, n);
        let i_minus_m = &id - self.for_matrix.entries();
        let i_minus_pi = &id - MarkovMatrix::rank_one(&self.invariant).entries();
        let r1 = (&self.entries * &i_minus_m - &i_minus_pi).amax();
        let r2 = (&i_minus_m * &self.entries - &i_minus_pi).amax();
        let ones = DVector::from_element(n, 1.0);
        let r3 = (&self.entries * ones).amax();
        r1.max(r2).max(r3)
    }
}

/// `|f| = max_x |f(x)|`.
pub fn sup_norm_vec(f: &DVector<f64>) -> Result<f64> {
    if f.is_empty() {
        return Err(SirpError::EmptyInput("sup norm of empty vector"));
    }
    Ok(f.amax())
}

/// `|N| = max_{x,y} |N(x,y)|`.
pub fn sup_norm_mat(n: &DMatrix<f64>) -> Result<f64> {
    if n.is_empty() {
        return Err(SirpError::EmptyInput("sup norm of empty matrix"));
    }
    Ok(n.amax())
}

struct SccResult {
    assignment: Vec<usize>,
    count: usize,
}

/// Kosaraju's two-pass strongly connected components.
fn strongly_connected_components(adj: &[Vec<usize>]) -> SccResult {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];

    // First pass: record finish order with an explicit stack.
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut stack = vec![(s, 0usize)];
        seen[s] = true;
        while let Some(&mut (x, ref mut i)) = stack.last_mut() {
            if *i < adj[x].len() {
                let y = adj[x][*i];
                *i += 1;
                if !seen[y] {
                    seen[y] = true;
                    stack.push((y, 0));
                }
            } else {
                order.push(x);
                stack.pop();
            }
        }
    }

    let mut radj = vec![Vec::new(); n];
    for (x, out) in adj.iter().enumerate() {
        for &y in out {
            radj[y].push(x);
        }
    }

    let mut assignment = vec![usize::MAX; n];
    let mut count = 0;
    for &s in order.iter().rev() {
        if assignment[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        assignment[s] = count;
        while let Some(x) = stack.pop() {
            for &y in &radj[x] {
                if assignment[y] == usize::MAX {
                    assignment[y] = count;
                    stack.push(y);
                }
            }
        }
        count += 1;
    }
    SccResult { assignment, count }
}
