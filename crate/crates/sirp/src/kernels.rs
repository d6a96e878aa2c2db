//! Strategy-family kernel constructors.
//!
//! Every family produces row-stochastic matrices with nonnegative
//! diagonal: Metropolis-style annealing kernels, linear and exponential
//! vertex-reinforcement kernels, pairwise-comparison fictitious-play
//! kernels, product kernels for simultaneous play, and logarithmic
//! cooling schedules with their admissible rates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SirpError};
use crate::markov::{MarkovMatrix, ProbVector};

/// Acceptance function applied to the ratio `u = exp(-beta W)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceShape {
    /// `psi(u) = min(1, u)`.
    Metropolis,
    /// `psi(u) = u / (1 + u)`.
    Logistic,
}

impl AcceptanceShape {
    /// `psi(exp(z))` evaluated without forming `exp(z)`, so large `|z|`
    /// neither overflows nor loses the tiny-acceptance tail.
    pub fn accept_log(self, z: f64) -> f64 {
        match self {
            AcceptanceShape::Metropolis => {
                if z >= 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            AcceptanceShape::Logistic => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

/// Logarithmic cooling schedule `beta(t) = beta0 + A log(max(t, 1))`,
/// the extremal schedule satisfying `0 <= beta'(t) <= A/t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingSchedule {
    pub beta0: f64,
    pub a: f64,
}

impl CoolingSchedule {
    pub fn new(beta0: f64, a: f64) -> Result<Self> {
        if beta0 < 0.0 || a < 0.0 || !beta0.is_finite() || !a.is_finite() {
            return Err(SirpError::Config(format!(
                "cooling schedule needs beta0 >= 0 and A >= 0, got ({beta0}, {a})"
            )));
        }
        Ok(Self { beta0, a })
    }

    pub fn constant(beta: f64) -> Result<Self> {
        Self::new(beta, 0.0)
    }

    pub fn eval(&self, n: usize) -> f64 {
        self.beta0 + self.a * (n.max(1) as f64).ln()
    }
}

/// Largest admissible cooling rate for a barrier, with a safety factor
/// of 0.95 below the strict threshold `1 / (2 U#)`; a flat landscape
/// leaves the rate unrestricted.
pub fn admissible_a(barrier: f64) -> f64 {
    if barrier <= 0.0 {
        f64::INFINITY
    } else {
        0.95 / (2.0 * barrier)
    }
}

/// Metropolis-style kernel: off-diagonal
/// `M(beta, x, y) = M0(x, y) psi(exp(-beta W(x, y)))`, diagonal absorbing
/// the remainder.
pub fn metropolis_kernel(
    m0: &MarkovMatrix,
    w: &DMatrix<f64>,
    beta: f64,
    shape: AcceptanceShape,
) -> Result<MarkovMatrix> {
    let n = m0.size();
    if w.nrows() != n || w.ncols() != n {
        return Err(SirpError::DimensionMismatch {
            expected: n,
            got: w.nrows(),
        });
    }
    if beta < 0.0 {
        return Err(SirpError::Config(format!("beta must be >= 0, got {beta}")));
    }
    let mut out = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut off = 0.0;
        for y in 0..n {
            if y == x {
                continue;
            }
            let p = m0.get(x, y) * shape.accept_log(-beta * w[(x, y)]);
            out[(x, y)] = p;
            off += p;
        }
        // psi <= 1 keeps the off-diagonal mass within the row; anything
        // beyond round-off indicates a broken proposal matrix.
        if off > 1.0 + 1e-12 {
            return Err(SirpError::InvalidMarkovMatrix(format!(
                "off-diagonal mass {off} in row {x} exceeds 1"
            )));
        }
        out[(x, x)] = (1.0 - off).max(0.0);
    }
    MarkovMatrix::new(out)
}

/// Single row of the Metropolis kernel; same formula as
/// [`metropolis_kernel`], used by the simulation loop.
pub fn metropolis_row(
    m0: &MarkovMatrix,
    w_row: &dyn Fn(usize) -> f64,
    beta: f64,
    shape: AcceptanceShape,
    x: usize,
) -> DVector<f64> {
    let n = m0.size();
    let mut row = DVector::zeros(n);
    let mut off = 0.0;
    for y in 0..n {
        if y == x {
            continue;
        }
        let p = m0.get(x, y) * shape.accept_log(-beta * w_row(y));
        row[y] = p;
        off += p;
    }
    row[x] = (1.0 - off).max(0.0);
    row
}

/// Pair potential `W(x, y) = U(y) - U(x)` of a state potential.
pub fn pair_potential_from(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    DMatrix::from_fn(n, n, |x, y| u[y] - u[x])
}

/// Gibbs measure `pi_beta(x) ~ exp(-beta U(x)) pi0(x)`, computed with a
/// max-shift so large `beta` cannot overflow.
pub fn gibbs_measure(pi0: &ProbVector, u: &[f64], beta: f64) -> Result<ProbVector> {
    if u.len() != pi0.size() {
        return Err(SirpError::DimensionMismatch {
            expected: pi0.size(),
            got: u.len(),
        });
    }
    if pi0.min() <= 0.0 {
        return Err(SirpError::InvalidProbVector(
            "Gibbs reference measure must be strictly positive".into(),
        ));
    }
    let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
    let w = DVector::from_fn(u.len(), |x, _| pi0.get(x) * (-beta * (u[x] - umin)).exp());
    ProbVector::normalized(w)
}

/// Linear reinforcement kernel
/// `K(x, y) = Umat(x, y) (eps + v(y)) / sum_z Umat(x, z) (eps + v(z))`.
pub fn vrrw_linear_kernel(umat: &DMatrix<f64>, eps: f64, v: &ProbVector) -> Result<MarkovMatrix> {
    let n = v.size();
    if umat.nrows() != n || umat.ncols() != n {
        return Err(SirpError::DimensionMismatch {
            expected: n,
            got: umat.nrows(),
        });
    }
    if eps < 0.0 {
        return Err(SirpError::Config(format!("eps must be >= 0, got {eps}")));
    }
    let mut out = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut denom = 0.0;
        for y in 0..n {
            let e = umat[(x, y)] * (eps + v.get(y));
            out[(x, y)] = e;
            denom += e;
        }
        if denom <= 0.0 {
            return Err(SirpError::ZeroRowDenominator { row: x });
        }
        for y in 0..n {
            out[(x, y)] /= denom;
        }
    }
    MarkovMatrix::new(out)
}

/// Interaction potential `U(x, v) = sum_y Umat(x, y) v(y)`.
pub fn interaction_potential(umat: &DMatrix<f64>, v: &ProbVector) -> DVector<f64> {
    umat * v.as_vector()
}

/// Exponential reinforcement kernel: Metropolis form with the pair
/// potential `W(x, y, v) = U(y, v) - U(x, v)`.
pub fn vrrw_exponential_kernel(
    m0: &MarkovMatrix,
    umat: &DMatrix<f64>,
    beta: f64,
    v: &ProbVector,
    shape: AcceptanceShape,
) -> Result<MarkovMatrix> {
    if umat.nrows() != m0.size() {
        return Err(SirpError::DimensionMismatch {
            expected: m0.size(),
            got: umat.nrows(),
        });
    }
    let pot = interaction_potential(umat, v);
    let u: Vec<f64> = pot.iter().copied().collect();
    metropolis_kernel(m0, &pair_potential_from(&u), beta, shape)
}

/// Markovian fictitious-play kernel for the row player: Metropolis form
/// with `W(x, y) = U1(x, v2) - U1(y, v2)`, so moves toward a better
/// reply against the opponent's empirical mixture are surely accepted.
pub fn fictitious_kernel(
    m0: &MarkovMatrix,
    payoff: &DMatrix<f64>,
    beta: f64,
    opponent_v: &ProbVector,
    shape: AcceptanceShape,
) -> Result<MarkovMatrix> {
    if payoff.nrows() != m0.size() {
        return Err(SirpError::DimensionMismatch {
            expected: m0.size(),
            got: payoff.nrows(),
        });
    }
    if payoff.ncols() != opponent_v.size() {
        return Err(SirpError::DimensionMismatch {
            expected: payoff.ncols(),
            got: opponent_v.size(),
        });
    }
    let expected = payoff * opponent_v.as_vector();
    let n = m0.size();
    let w = DMatrix::from_fn(n, n, |x, y| expected[x] - expected[y]);
    metropolis_kernel(m0, &w, beta, shape)
}

/// Product kernel on `E1 x E2`: both coordinates move simultaneously and
/// independently. Index `(x, y)` maps to `x * |E2| + y`.
pub fn product_kernel(m1: &MarkovMatrix, m2: &MarkovMatrix) -> MarkovMatrix {
    let (n1, n2) = (m1.size(), m2.size());
    let n = n1 * n2;
    let entries = DMatrix::from_fn(n, n, |a, b| {
        let (x, y) = (a / n2, a % n2);
        let (xp, yp) = (b / n2, b % n2);
        m1.get(x, xp) * m2.get(y, yp)
    });
    MarkovMatrix::new(entries).expect("product of stochastic matrices is stochastic")
}
