//! Deterministic limit dynamics: face-valued maps on the simplex, Euler
//! integration of `dv/dt in -v + C(v)`, Lyapunov checks, fixed-point
//! residuals, and distances from trajectory tails to candidate limit
//! sets.
//!
//! A face-valued map sends `v` to `Delta(S(v))`, the probabilities
//! supported on an argmin/argmax set of a linear score. The canonical
//! selection conditions a base measure on the support, which gives one
//! representative solution of the inclusion; invariance and attraction
//! are then checked through residuals and Lyapunov monotonicity rather
//! than decided abstractly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SirpError};
use crate::landscape::{argmax_set, argmin_set, TAU_TIE};
use crate::markov::ProbVector;

/// Support selector of the face-valued map.
#[derive(Debug, Clone)]
pub enum SelectorMode {
    /// `C(v) = Delta(Argmin_x (Umat v)(x))`.
    ArgminInteraction,
    /// `C(v) = Delta(Argmax_x (payoff v)(x))`; the score matrix is the
    /// row player's payoff against the mixture `v`.
    BestResponse,
    /// Fixed face, independent of `v`.
    ConstantSet(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct FaceValuedMap {
    score: DMatrix<f64>,
    base: ProbVector,
    mode: SelectorMode,
    tau_tie: f64,
}

impl FaceValuedMap {
    pub fn new(
        score: DMatrix<f64>,
        base: ProbVector,
        mode: SelectorMode,
        tau_tie: f64,
    ) -> Result<Self> {
        if score.nrows() != base.size() {
            return Err(SirpError::DimensionMismatch {
                expected: base.size(),
                got: score.nrows(),
            });
        }
        if let SelectorMode::ConstantSet(s) = &mode {
            if s.is_empty() || s.iter().any(|&i| i >= base.size()) {
                return Err(SirpError::Config("constant support out of range".into()));
            }
        }
        Ok(Self {
            score,
            base,
            mode,
            tau_tie,
        })
    }

    pub fn argmin_interaction(umat: DMatrix<f64>, base: ProbVector) -> Result<Self> {
        Self::new(umat, base, SelectorMode::ArgminInteraction, TAU_TIE)
    }

    pub fn best_response(payoff: DMatrix<f64>, base: ProbVector) -> Result<Self> {
        Self::new(payoff, base, SelectorMode::BestResponse, TAU_TIE)
    }

    pub fn constant(base: ProbVector, support: Vec<usize>) -> Result<Self> {
        let n = base.size();
        Self::new(
            DMatrix::zeros(n, n),
            base,
            SelectorMode::ConstantSet(support),
            TAU_TIE,
        )
    }

    pub fn dim(&self) -> usize {
        self.base.size()
    }

    /// Support set `S(v)` of the face `C(v)`.
    pub fn support(&self, v: &DVector<f64>) -> Vec<usize> {
        match &self.mode {
            SelectorMode::ConstantSet(s) => s.clone(),
            SelectorMode::ArgminInteraction => {
                let scores: Vec<f64> = (&self.score * v).iter().copied().collect();
                argmin_set(&scores, self.tau_tie)
            }
            SelectorMode::BestResponse => {
                let scores: Vec<f64> = (&self.score * v).iter().copied().collect();
                argmax_set(&scores, self.tau_tie)
            }
        }
    }

    /// Base measure conditioned on `S(v)`: the canonical point of `C(v)`.
    pub fn canonical_selection(&self, v: &DVector<f64>) -> DVector<f64> {
        let support = self.support(v);
        let mut w = DVector::zeros(self.base.size());
        let mass: f64 = support.iter().map(|&i| self.base.get(i)).sum();
        for &i in &support {
            w[i] = self.base.get(i) / mass;
        }
        w
    }

    /// Euclidean distance from `v` to the face `Delta(S(v))`: zero iff
    /// `v` lies in `C(v)` under the tie-tolerance semantics.
    pub fn fixed_point_residual(&self, v: &DVector<f64>) -> f64 {
        let support = self.support(v);
        distance_to_face(v, &support)
    }
}

/// Exact Euclidean projection distance from a point to the face of the
/// simplex spanned by `support`: off-support coordinates drop to zero
/// and the rest project onto the sub-simplex.
pub fn distance_to_face(v: &DVector<f64>, support: &[usize]) -> f64 {
    let restricted: Vec<f64> = support.iter().map(|&i| v[i]).collect();
    let projected = project_to_simplex(&restricted);
    let mut dist2 = 0.0;
    let mut on = vec![false; v.len()];
    for (k, &i) in support.iter().enumerate() {
        on[i] = true;
        let d = v[i] - projected[k];
        dist2 += d * d;
    }
    for i in 0..v.len() {
        if !on[i] {
            dist2 += v[i] * v[i];
        }
    }
    dist2.sqrt()
}

/// Euclidean projection onto the standard simplex, by the sorted
/// threshold rule.
fn project_to_simplex(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cum += u;
        let cand = (1.0 - cum) / (j + 1) as f64;
        if u + cand > 0.0 {
            theta = cand;
        }
    }
    y.iter().map(|&u| (u + theta).max(0.0)).collect()
}

/// Euler trajectory of `dv/dt in -v + C(v)`.
#[derive(Debug, Clone)]
pub struct InclusionSolution {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    pub selections: Vec<DVector<f64>>,
    pub h: f64,
}

/// Explicit Euler with the canonical selection:
/// `v_{k+1} = (1 - h) v_k + h c_k`. Convex combinations keep every
/// iterate exactly inside the simplex.
pub fn integrate(c: &FaceValuedMap, v0: &ProbVector, h: f64, t_max: f64) -> Result<InclusionSolution> {
    if v0.size() != c.dim() {
        return Err(SirpError::DimensionMismatch {
            expected: c.dim(),
            got: v0.size(),
        });
    }
    if !(h > 0.0 && h <= 0.1) {
        return Err(SirpError::Config(format!("step size {h} outside (0, 0.1]")));
    }
    if t_max <= 0.0 {
        return Err(SirpError::Config(format!("horizon {t_max} must be positive")));
    }
    let steps = (t_max / h).ceil() as usize;
    let mut v = v0.as_vector().clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut selections = Vec::with_capacity(steps);
    times.push(0.0);
    points.push(v.clone());
    for k in 0..steps {
        let sel = c.canonical_selection(&v);
        v = &v * (1.0 - h) + &sel * h;
        selections.push(sel);
        times.push((k + 1) as f64 * h);
        points.push(v.clone());
    }
    Ok(InclusionSolution {
        times,
        points,
        selections,
        h,
    })
}

/// `H(v) = 1/2 sum_{x,y} U(x,y) v(x) v(y)` for symmetric `U`.
pub fn lyapunov_h(umat: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    check_symmetric(umat)?;
    Ok(0.5 * (v.transpose() * umat * v)[(0, 0)])
}

#[derive(Debug, Clone)]
pub struct LyapunovVerdict {
    pub monotone: bool,
    /// First step index violating monotonicity, if any.
    pub violation: Option<usize>,
    pub tol: f64,
}

/// Check that `H` is nonincreasing along an argmin-interaction Euler
/// solution, step by step, up to the discretization allowance
/// `tol_h = 10 h^2 max|U|`.
pub fn lyapunov_check(solution: &InclusionSolution, umat: &DMatrix<f64>) -> Result<LyapunovVerdict> {
    check_symmetric(umat)?;
    let tol = 10.0 * solution.h * solution.h * umat.amax();
    for (k, pair) in solution.points.windows(2).enumerate() {
        let h0 = lyapunov_h(umat, &pair[0])?;
        let h1 = lyapunov_h(umat, &pair[1])?;
        if h1 > h0 + tol {
            return Ok(LyapunovVerdict {
                monotone: false,
                violation: Some(k),
                tol,
            });
        }
    }
    Ok(LyapunovVerdict {
        monotone: true,
        violation: None,
        tol,
    })
}

fn check_symmetric(umat: &DMatrix<f64>) -> Result<()> {
    for i in 0..umat.nrows() {
        for j in i + 1..umat.ncols() {
            if (umat[(i, j)] - umat[(j, i)]).abs() > 1e-12 {
                return Err(SirpError::NotSymmetric { i, j });
            }
        }
    }
    Ok(())
}

/// Critical points of `v -> U(v, v)` on the simplex, by support
/// enumeration: on each face, the point with `(Uv)` constant across the
/// support and strictly interior to the face.
#[derive(Debug, Clone)]
pub struct CriticalSet {
    pub points: Vec<DVector<f64>>,
    /// Faces whose equalization system was singular.
    pub skipped_supports: Vec<Vec<usize>>,
    /// `U(v, v)` constant over the whole simplex.
    pub degenerate_constant: bool,
}

impl CriticalSet {
    pub fn values(&self, umat: &DMatrix<f64>) -> Vec<f64> {
        self.points
            .iter()
            .map(|v| 0.5 * (v.transpose() * umat * v)[(0, 0)])
            .collect()
    }
}

pub fn critical_set_quadratic(umat: &DMatrix<f64>) -> Result<CriticalSet> {
    check_symmetric(umat)?;
    let n = umat.nrows();
    if n > 8 {
        return Err(SirpError::Config(
            "critical-set enumeration is limited to 8 states".into(),
        ));
    }
    // U(v, v) identically constant: every point is critical.
    let spread = umat.max() - umat.min();
    if spread == 0.0 {
        return Ok(CriticalSet {
            points: Vec::new(),
            skipped_supports: Vec::new(),
            degenerate_constant: true,
        });
    }

    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut skipped = Vec::new();
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let k = support.len();
        if k == 1 {
            points.push(ProbVector::point_mass(n, support[0]).as_vector().clone());
            continue;
        }
        // Solve U_SS v_S = c 1, sum v_S = 1 for (v_S, c).
        let mut a = DMatrix::zeros(k + 1, k + 1);
        let mut b = DVector::zeros(k + 1);
        for (row, &x) in support.iter().enumerate() {
            for (col, &y) in support.iter().enumerate() {
                a[(row, col)] = umat[(x, y)];
            }
            a[(row, k)] = -1.0;
        }
        for col in 0..k {
            a[(k, col)] = 1.0;
        }
        b[k] = 1.0;
        match a.lu().solve(&b) {
            None => skipped.push(support),
            Some(sol) => {
                // Relative interior of the face only.
                if sol.rows(0, k).iter().all(|&w| w > TAU_TIE) {
                    let mut v = DVector::zeros(n);
                    for (col, &x) in support.iter().enumerate() {
                        v[x] = sol[col];
                    }
                    let dup = points.iter().any(|p| (p - &v).amax() < 1e-10);
                    if !dup {
                        points.push(v);
                    }
                }
            }
        }
    }
    Ok(CriticalSet {
        points,
        skipped_supports: skipped,
        degenerate_constant: false,
    })
}

/// Candidate limit sets for trajectory-tail comparison.
#[derive(Debug, Clone)]
pub enum TargetSet {
    /// Finite set of points; distance is the minimum over them.
    Points(Vec<DVector<f64>>),
    /// Face of the simplex; exact projection distance.
    Face { support: Vec<usize>, dim: usize },
    /// Convex hull of points; distance by Frank-Wolfe on the hull.
    ConvexHull(Vec<DVector<f64>>),
}

impl TargetSet {
    pub fn distance(&self, v: &DVector<f64>) -> Result<f64> {
        match self {
            TargetSet::Points(ps) => {
                if ps.is_empty() {
                    return Err(SirpError::EmptyTarget);
                }
                Ok(ps.iter().map(|p| (v - p).norm()).fold(f64::INFINITY, f64::min))
            }
            TargetSet::Face { support, dim } => {
                if support.is_empty() {
                    return Err(SirpError::EmptyTarget);
                }
                debug_assert_eq!(*dim, v.len());
                Ok(distance_to_face(v, support))
            }
            TargetSet::ConvexHull(ps) => {
                if ps.is_empty() {
                    return Err(SirpError::EmptyTarget);
                }
                Ok(hull_distance(v, ps))
            }
        }
    }
}

/// Min-norm point in a convex hull via Frank-Wolfe; ample for the
/// desk-scale hulls used in limit-set diagnostics.
fn hull_distance(v: &DVector<f64>, points: &[DVector<f64>]) -> f64 {
    let mut x = points[0].clone();
    for k in 0..500 {
        let grad = &x - v;
        // Linear minimization over the hull: best vertex.
        let best = points
            .iter()
            .min_by(|a, b| grad.dot(a).total_cmp(&grad.dot(b)))
            .expect("nonempty hull");
        let gamma = 2.0 / (k as f64 + 2.0);
        x = &x * (1.0 - gamma) + best * gamma;
    }
    (v - &x).norm()
}

/// Largest distance from the tail points to the target set.
pub fn limit_set_distance(tail: &[DVector<f64>], target: &TargetSet) -> Result<f64> {
    if tail.is_empty() {
        return Err(SirpError::EmptyInput("trajectory tail"));
    }
    let mut worst: f64 = 0.0;
    for v in tail {
        worst = worst.max(target.distance(v)?);
    }
    Ok(worst)
}
