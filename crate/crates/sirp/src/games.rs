//! Two-player finite games: bilinear payoffs, best-response supports,
//! Nash gap, and an exact zero-sum value oracle by support enumeration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SirpError};
use crate::landscape::argmax_set;
use crate::markov::{ProbVector, StateSpace};

/// Optimality residual accepted for enumerated equilibria.
pub const NASH_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct TwoPlayerGame {
    e1: StateSpace,
    e2: StateSpace,
    u1: DMatrix<f64>,
    u2: DMatrix<f64>,
}

impl TwoPlayerGame {
    pub fn new(e1: StateSpace, e2: StateSpace, u1: DMatrix<f64>, u2: DMatrix<f64>) -> Result<Self> {
        if u1.nrows() != e1.size() || u1.ncols() != e2.size() {
            return Err(SirpError::DimensionMismatch {
                expected: e1.size(),
                got: u1.nrows(),
            });
        }
        if u2.nrows() != e1.size() || u2.ncols() != e2.size() {
            return Err(SirpError::DimensionMismatch {
                expected: e1.size(),
                got: u2.nrows(),
            });
        }
        if u1.iter().chain(u2.iter()).any(|v| !v.is_finite()) {
            return Err(SirpError::Config("payoffs must be finite".into()));
        }
        Ok(Self { e1, e2, u1, u2 })
    }

    pub fn zero_sum(u1: DMatrix<f64>) -> Result<Self> {
        let e1 = StateSpace::indexed(u1.nrows());
        let e2 = StateSpace::indexed(u1.ncols());
        let u2 = -u1.clone();
        Self::new(e1, e2, u1, u2)
    }

    pub fn potential(u1: DMatrix<f64>) -> Result<Self> {
        let e1 = StateSpace::indexed(u1.nrows());
        let e2 = StateSpace::indexed(u1.ncols());
        let u2 = u1.clone();
        Self::new(e1, e2, u1, u2)
    }

    pub fn e1(&self) -> &StateSpace {
        &self.e1
    }

    pub fn e2(&self) -> &StateSpace {
        &self.e2
    }

    pub fn payoff(&self, player: Player) -> &DMatrix<f64> {
        match player {
            Player::One => &self.u1,
            Player::Two => &self.u2,
        }
    }

    pub fn is_zero_sum(&self) -> bool {
        (&self.u1 + &self.u2).amax() == 0.0
    }

    pub fn is_potential(&self) -> bool {
        (&self.u1 - &self.u2).amax() == 0.0
    }

    /// Pure payoff pair at `(x, y)`.
    pub fn pure_payoffs(&self, x: usize, y: usize) -> (f64, f64) {
        (self.u1[(x, y)], self.u2[(x, y)])
    }

    /// Bilinear mixed payoff of one player.
    pub fn mixed_payoff(&self, v1: &ProbVector, v2: &ProbVector, player: Player) -> Result<f64> {
        let u = self.payoff(player);
        if v1.size() != u.nrows() {
            return Err(SirpError::DimensionMismatch {
                expected: u.nrows(),
                got: v1.size(),
            });
        }
        if v2.size() != u.ncols() {
            return Err(SirpError::DimensionMismatch {
                expected: u.ncols(),
                got: v2.size(),
            });
        }
        Ok((v1.as_vector().transpose() * u * v2.as_vector())[(0, 0)])
    }

    /// Expected-payoff vector of a player against the opponent's mixture.
    pub fn reply_values(&self, player: Player, opponent_v: &ProbVector) -> Result<DVector<f64>> {
        match player {
            Player::One => {
                if opponent_v.size() != self.u1.ncols() {
                    return Err(SirpError::DimensionMismatch {
                        expected: self.u1.ncols(),
                        got: opponent_v.size(),
                    });
                }
                Ok(&self.u1 * opponent_v.as_vector())
            }
            Player::Two => {
                if opponent_v.size() != self.u2.nrows() {
                    return Err(SirpError::DimensionMismatch {
                        expected: self.u2.nrows(),
                        got: opponent_v.size(),
                    });
                }
                Ok(self.u2.tr_mul(opponent_v.as_vector()))
            }
        }
    }

    /// Actions maximizing the expected payoff against `opponent_v`,
    /// within the tie tolerance.
    pub fn best_response_support(
        &self,
        player: Player,
        opponent_v: &ProbVector,
        tau_tie: f64,
    ) -> Result<Vec<usize>> {
        let values = self.reply_values(player, opponent_v)?;
        let vals: Vec<f64> = values.iter().copied().collect();
        Ok(argmax_set(&vals, tau_tie))
    }

    /// `max_i [ max_x U^i(x, v^{-i}) - U^i(v^i, v^{-i}) ]`; zero exactly
    /// at Nash equilibria.
    pub fn nash_gap(&self, v1: &ProbVector, v2: &ProbVector) -> Result<f64> {
        let r1 = self.reply_values(Player::One, v2)?;
        let r2 = self.reply_values(Player::Two, v1)?;
        let cur1 = self.mixed_payoff(v1, v2, Player::One)?;
        let cur2 = self.mixed_payoff(v1, v2, Player::Two)?;
        let best1 = r1.max();
        let best2 = r2.max();
        Ok((best1 - cur1).max(best2 - cur2).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    One,
    Two,
}

/// Value and a pair of optimal strategies of a zero-sum game.
#[derive(Debug, Clone)]
pub struct ZeroSumSolution {
    pub value: f64,
    pub optimal_v1: ProbVector,
    pub optimal_v2: ProbVector,
}

/// Exact value by support enumeration.
///
/// Extreme optimal strategies solve square indifference systems, so
/// enumerating equal-size support pairs, solving each system, and
/// keeping the feasible solutions that pass the global `nash_gap` check
/// finds the value without any external solver. Desk scale only.
pub fn zero_sum_value(game: &TwoPlayerGame) -> Result<ZeroSumSolution> {
    if !game.is_zero_sum() {
        return Err(SirpError::Config("zero_sum_value needs a zero-sum game".into()));
    }
    let (n1, n2) = (game.u1.nrows(), game.u1.ncols());
    if n1 > 12 || n2 > 12 {
        return Err(SirpError::Config(
            "support enumeration is limited to 12 actions per player".into(),
        ));
    }

    let supports = |n: usize| -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for mask in 1u32..(1 << n) {
            out.push((0..n).filter(|i| mask >> i & 1 == 1).collect());
        }
        out
    };

    for s1 in supports(n1) {
        for s2 in supports(n2).into_iter().filter(|s2| s2.len() == s1.len()) {
            let Some((v1, v2, value)) = solve_support_pair(&game.u1, &s1, &s2) else {
                continue;
            };
            let (Ok(p1), Ok(p2)) = (ProbVector::new(v1), ProbVector::new(v2)) else {
                continue;
            };
            if game.nash_gap(&p1, &p2).unwrap_or(f64::INFINITY) <= NASH_TOL {
                return Ok(ZeroSumSolution {
                    value,
                    optimal_v1: p1,
                    optimal_v2: p2,
                });
            }
        }
    }
    Err(SirpError::SingularSystem(
        "support enumeration found no equilibrium; the minimax theorem guarantees one, so \
         this indicates degenerate numerics"
            .into(),
    ))
}

/// Solve the square indifference system of one support pair: v1 on s1
/// makes player 2 indifferent across s2 and vice versa, both at the
/// common value u.
fn solve_support_pair(
    u1: &DMatrix<f64>,
    s1: &[usize],
    s2: &[usize],
) -> Option<(DVector<f64>, DVector<f64>, f64)> {
    let k = s1.len();
    // Unknowns: v1 restricted to s1, then the value u.
    let mut a = DMatrix::zeros(k + 1, k + 1);
    let mut b = DVector::zeros(k + 1);
    for (row, &y) in s2.iter().enumerate() {
        for (col, &x) in s1.iter().enumerate() {
            a[(row, col)] = u1[(x, y)];
        }
        a[(row, k)] = -1.0;
    }
    for col in 0..k {
        a[(k, col)] = 1.0;
    }
    b[k] = 1.0;
    let sol1 = a.lu().solve(&b)?;

    let mut at = DMatrix::zeros(k + 1, k + 1);
    for (row, &x) in s1.iter().enumerate() {
        for (col, &y) in s2.iter().enumerate() {
            at[(row, col)] = u1[(x, y)];
        }
        at[(row, k)] = -1.0;
    }
    for col in 0..k {
        at[(k, col)] = 1.0;
    }
    let sol2 = at.lu().solve(&b)?;

    let tol = -1e-12;
    if sol1.rows(0, k).iter().any(|&w| w < tol) || sol2.rows(0, k).iter().any(|&w| w < tol) {
        return None;
    }
    let mut v1 = DVector::zeros(u1.nrows());
    for (col, &x) in s1.iter().enumerate() {
        v1[x] = sol1[col].max(0.0);
    }
    let mut v2 = DVector::zeros(u1.ncols());
    for (col, &y) in s2.iter().enumerate() {
        v2[y] = sol2[col].max(0.0);
    }
    let scale1 = v1.sum();
    let scale2 = v2.sum();
    if scale1 <= 0.0 || scale2 <= 0.0 {
        return None;
    }
    v1 /= scale1;
    v2 /= scale2;
    Some((v1, v2, sol1[k]))
}

/// All equilibrium candidates found by bimatrix support enumeration,
/// validated by the Nash gap. The Nash set can be a continuum; these
/// samples are its extreme points plus the balanced interior solutions.
pub fn nash_samples(game: &TwoPlayerGame) -> Result<Vec<(ProbVector, ProbVector)>> {
    let (n1, n2) = (game.u1.nrows(), game.u1.ncols());
    if n1 > 8 || n2 > 8 {
        return Err(SirpError::Config(
            "nash enumeration is limited to 8 actions per player".into(),
        ));
    }
    let supports = |n: usize| -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for mask in 1u32..(1 << n) {
            out.push((0..n).filter(|i| mask >> i & 1 == 1).collect());
        }
        out
    };
    let mut found: Vec<(ProbVector, ProbVector)> = Vec::new();
    for s1 in supports(n1) {
        for s2 in supports(n2) {
            for (v1, v2) in bimatrix_candidates(game, &s1, &s2) {
                if game.nash_gap(&v1, &v2).unwrap_or(f64::INFINITY) <= NASH_TOL {
                    let dup = found.iter().any(|(w1, w2)| {
                        (v1.as_vector() - w1.as_vector()).amax() < 1e-8
                            && (v2.as_vector() - w2.as_vector()).amax() < 1e-8
                    });
                    if !dup {
                        found.push((v1, v2));
                    }
                }
            }
        }
    }
    Ok(found)
}

/// Candidate profiles for a support pair in a general bimatrix game:
/// v2 must equalize player 1's payoffs across s1, v1 player 2's across
/// s2 (square systems; non-square pairs only contribute pure cases).
fn bimatrix_candidates(
    game: &TwoPlayerGame,
    s1: &[usize],
    s2: &[usize],
) -> Vec<(ProbVector, ProbVector)> {
    let mut out = Vec::new();
    if s1.len() == 1 && s2.len() == 1 {
        out.push((
            ProbVector::point_mass(game.u1.nrows(), s1[0]),
            ProbVector::point_mass(game.u1.ncols(), s2[0]),
        ));
        return out;
    }
    if s1.len() != s2.len() {
        return out;
    }
    let k = s1.len();
    // v2 equalizes U1 over s1.
    let mut a = DMatrix::zeros(k + 1, k + 1);
    let mut b = DVector::zeros(k + 1);
    for (row, &x) in s1.iter().enumerate() {
        for (col, &y) in s2.iter().enumerate() {
            a[(row, col)] = game.u1[(x, y)];
        }
        a[(row, k)] = -1.0;
    }
    for col in 0..k {
        a[(k, col)] = 1.0;
    }
    b[k] = 1.0;
    let Some(sol2) = a.lu().solve(&b) else {
        return out;
    };
    // v1 equalizes U2 over s2.
    let mut c = DMatrix::zeros(k + 1, k + 1);
    for (row, &y) in s2.iter().enumerate() {
        for (col, &x) in s1.iter().enumerate() {
            c[(row, col)] = game.u2[(x, y)];
        }
        c[(row, k)] = -1.0;
    }
    for col in 0..k {
        c[(k, col)] = 1.0;
    }
    let Some(sol1) = c.lu().solve(&b) else {
        return out;
    };
    if sol1.rows(0, k).iter().any(|&w| w < -1e-12)
        || sol2.rows(0, k).iter().any(|&w| w < -1e-12)
    {
        return out;
    }
    let mut v1 = DVector::zeros(game.u1.nrows());
    for (col, &x) in s1.iter().enumerate() {
        v1[x] = sol1[col].max(0.0);
    }
    let mut v2 = DVector::zeros(game.u1.ncols());
    for (col, &y) in s2.iter().enumerate() {
        v2[y] = sol2[col].max(0.0);
    }
    if v1.sum() <= 0.0 || v2.sum() <= 0.0 {
        return out;
    }
    let n1 = v1.sum();
    let n2 = v2.sum();
    if let (Ok(p1), Ok(p2)) = (ProbVector::new(v1 / n1), ProbVector::new(v2 / n2)) {
        out.push((p1, p2));
    }
    out
}

/// Distance from a profile to the sampled Nash set in the product
/// Euclidean metric `sqrt(|v1 - w1|^2 + |v2 - w2|^2)`.
pub fn nash_set_distance(game: &TwoPlayerGame, v1: &ProbVector, v2: &ProbVector) -> Result<f64> {
    let samples = nash_samples(game)?;
    if samples.is_empty() {
        return Err(SirpError::EmptyTarget);
    }
    Ok(samples
        .iter()
        .map(|(w1, w2)| {
            let d1 = (v1.as_vector() - w1.as_vector()).norm_squared();
            let d2 = (v2.as_vector() - w2.as_vector()).norm_squared();
            (d1 + d2).sqrt()
        })
        .fold(f64::INFINITY, f64::min))
}
