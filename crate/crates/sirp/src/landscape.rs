//! Potential-landscape combinatorics on an exploration graph.
//!
//! A landscape is a potential `U` on the states together with an
//! irreducible exploration matrix `M0`; only the support graph of `M0`
//! enters. The elevation from `x` to `y` is the minimax path height
//!
//! ```text
//! Elev(x, y) = min over paths gamma from x to y of max { U(z) : z in gamma }
//! ```
//!
//! (endpoints included, zero-length paths allowed), and the energy barrier
//!
//! ```text
//! U# = max_{x,y} [ Elev(x, y) - U(x) - U(y) + min U ]
//! ```
//!
//! gates the admissible cooling rate of logarithmic schedules.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use crate::error::{Result, SirpError};
use crate::markov::MarkovMatrix;

/// Default absolute tolerance for argmin/argmax ties.
pub const TAU_TIE: f64 = 1e-9;

/// Exploration matrix plus potential.
#[derive(Debug, Clone)]
pub struct Landscape {
    exploration: MarkovMatrix,
    potential: Vec<f64>,
}

impl Landscape {
    pub fn new(exploration: MarkovMatrix, potential: Vec<f64>) -> Result<Self> {
        if potential.len() != exploration.size() {
            return Err(SirpError::DimensionMismatch {
                expected: exploration.size(),
                got: potential.len(),
            });
        }
        if !exploration.is_irreducible() {
            return Err(SirpError::Reducible);
        }
        Ok(Self {
            exploration,
            potential,
        })
    }

    pub fn size(&self) -> usize {
        self.potential.len()
    }

    pub fn exploration(&self) -> &MarkovMatrix {
        &self.exploration
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Minimax path height from `x` to `y`, endpoints included.
    pub fn elevation(&self, x: usize, y: usize) -> f64 {
        self.elevations_from(x)[y]
    }

    /// Elevations from `x` to every state, by a bottleneck variant of
    /// Dijkstra: the priority of a state is the smallest achievable
    /// path-maximum of `U` from `x` to it.
    pub fn elevations_from(&self, x: usize) -> Vec<f64> {
        let n = self.size();
        let u = &self.potential;
        let mut best = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[x] = u[x]; // zero-length path
        heap.push(Reverse(HeapEntry(u[x], x)));
        while let Some(Reverse(HeapEntry(h, z))) = heap.pop() {
            if done[z] {
                continue;
            }
            done[z] = true;
            for w in 0..n {
                if self.exploration.get(z, w) > 0.0 {
                    let cand = h.max(u[w]);
                    if cand < best[w] {
                        best[w] = cand;
                        heap.push(Reverse(HeapEntry(cand, w)));
                    }
                }
            }
        }
        best
    }

    /// `U# = max_{x,y} [Elev(x,y) - U(x) - U(y) + min U]`.
    pub fn energy_barrier(&self) -> f64 {
        let n = self.size();
        let umin = self.potential.iter().copied().fold(f64::INFINITY, f64::min);
        let mut barrier = f64::NEG_INFINITY;
        for x in 0..n {
            let elev = self.elevations_from(x);
            for y in 0..n {
                let b = elev[y] - self.potential[x] - self.potential[y] + umin;
                barrier = barrier.max(b);
            }
        }
        barrier
    }
}

#[derive(PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Indices attaining `min U` within absolute tolerance `tau_tie`.
pub fn argmin_set(u: &[f64], tau_tie: f64) -> Vec<usize> {
    let m = u.iter().copied().fold(f64::INFINITY, f64::min);
    (0..u.len()).filter(|&i| u[i] <= m + tau_tie).collect()
}

/// Indices attaining `max U` within absolute tolerance `tau_tie`.
pub fn argmax_set(u: &[f64], tau_tie: f64) -> Vec<usize> {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..u.len()).filter(|&i| u[i] >= m - tau_tie).collect()
}

/// Largest per-column energy barrier of a payoff matrix, taken over pure
/// opponent actions.
///
/// The fictitious-play kernel climbs the payoff, so the potential it
/// descends for a fixed opponent action `y` is the shortfall
/// `max_z U1(z, y) - U1(x, y)`; an affine shift leaves the barrier
/// unchanged.
pub fn game_barrier(payoff: &DMatrix<f64>, m0: &MarkovMatrix) -> Result<f64> {
    if payoff.nrows() != m0.size() {
        return Err(SirpError::DimensionMismatch {
            expected: m0.size(),
            got: payoff.nrows(),
        });
    }
    let mut worst: f64 = 0.0;
    for y in 0..payoff.ncols() {
        let col_max = (0..payoff.nrows())
            .map(|z| payoff[(z, y)])
            .fold(f64::NEG_INFINITY, f64::max);
        let shortfall: Vec<f64> = (0..payoff.nrows())
            .map(|x| col_max - payoff[(x, y)])
            .collect();
        let land = Landscape::new(m0.clone(), shortfall)?;
        worst = worst.max(land.energy_barrier());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Nearest-neighbor path exploration matrix, reflecting ends with
    /// half-mass self-loops; symmetric, hence reversible for uniform pi0.
    pub(crate) fn path_exploration(n: usize) -> MarkovMatrix {
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            if i > 0 {
                rows[i][i - 1] = 0.5;
            }
            if i + 1 < n {
                rows[i][i + 1] = 0.5;
            }
            let s: f64 = rows[i].iter().sum();
            rows[i][i] = 1.0 - s;
        }
        MarkovMatrix::from_rows(&rows).unwrap()
    }

    /// Exhaustive simple-path enumeration; cycles never lower a path max,
    /// so simple paths suffice as an oracle.
    fn brute_elevation(land: &Landscape, x: usize, y: usize) -> f64 {
        fn dfs(
            land: &Landscape,
            z: usize,
            y: usize,
            h: f64,
            visited: &mut Vec<bool>,
            best: &mut f64,
        ) {
            if z == y {
                *best = best.min(h);
                return;
            }
            for w in 0..land.size() {
                if !visited[w] && land.exploration().get(z, w) > 0.0 {
                    visited[w] = true;
                    dfs(land, w, y, h.max(land.potential()[w]), visited, best);
                    visited[w] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        let mut visited = vec![false; land.size()];
        visited[x] = true;
        dfs(land, x, y, land.potential()[x], &mut visited, &mut best);
        best
    }

    #[test]
    fn elevation_zero_length_path() {
        let land = Landscape::new(path_exploration(3), vec![0.0, 1.0, 0.0]).unwrap();
        for x in 0..3 {
            assert_eq!(land.elevation(x, x), land.potential()[x]);
        }
    }

    #[test]
    fn elevation_three_state_path() {
        let land = Landscape::new(path_exploration(3), vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(land.elevation(0, 2), 1.0);
        assert_eq!(land.energy_barrier(), 1.0);
    }

    #[test]
    fn elevation_five_state_path() {
        let land = Landscape::new(path_exploration(5), vec![0.0, 3.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!(land.elevation(0, 4), 3.0);
        assert_eq!(land.elevation(2, 4), 2.0);
        assert_eq!(land.energy_barrier(), 3.0);
    }

    #[test]
    fn constant_potential_has_zero_barrier() {
        let land = Landscape::new(path_exploration(4), vec![2.0; 4]).unwrap();
        assert_eq!(land.energy_barrier(), 0.0);
    }

    #[test]
    fn elevation_matches_brute_force_on_random_landscapes() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..60 {
            let n = rng.gen_range(2..=7);
            // Random connected support: a ring plus random chords.
            let mut rows = vec![vec![0.0; n]; n];
            for i in 0..n {
                rows[i][(i + 1) % n] = 1.0;
                rows[i][(i + n - 1) % n] = 1.0;
                for j in 0..n {
                    if i != j && rng.gen_bool(0.3) {
                        rows[i][j] = 1.0;
                    }
                }
                let s: f64 = rows[i].iter().sum();
                for e in rows[i].iter_mut() {
                    *e /= s;
                }
            }
            let m0 = MarkovMatrix::from_rows(&rows).unwrap();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let land = Landscape::new(m0, u).unwrap();
            for x in 0..n {
                for y in 0..n {
                    let fast = land.elevation(x, y);
                    let slow = brute_elevation(&land, x, y);
                    assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
                }
            }
            assert!(land.energy_barrier() >= -1e-12);
        }
    }

    #[test]
    fn elevation_is_a_minimax_metric() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let n = rng.gen_range(2..=7);
            let land = Landscape::new(
                path_exploration(n),
                (0..n).map(|_| rng.gen_range(0.0..3.0)).collect(),
            )
            .unwrap();
            for x in 0..n {
                for y in 0..n {
                    let e = land.elevation(x, y);
                    assert!(e >= land.potential()[x].max(land.potential()[y]) - 1e-12);
                    for z in 0..n {
                        let via = land.elevation(x, z).max(land.elevation(z, y));
                        assert!(e <= via + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn argmin_argmax_sets() {
        let u = [0.0, 3.0, 1.0, 2.0, 0.0];
        assert_eq!(argmin_set(&u, TAU_TIE), vec![0, 4]);
        assert_eq!(argmax_set(&u, TAU_TIE), vec![1]);

        let flat = [1.0; 4];
        assert_eq!(argmin_set(&flat, TAU_TIE), vec![0, 1, 2, 3]);

        let near = [0.0, 1e-13, 5.0];
        assert_eq!(argmin_set(&near, TAU_TIE), vec![0, 1]);
    }

    #[test]
    fn game_barrier_flat_game_is_zero() {
        let m0 = MarkovMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let payoff = DMatrix::zeros(2, 2);
        assert_eq!(game_barrier(&payoff, &m0).unwrap(), 0.0);
    }

    #[test]
    fn game_barrier_two_state_columns_never_trap() {
        // On two states with a complete exploration graph, every descent is
        // direct, so each column barrier is 0 regardless of the payoffs.
        let m0 = MarkovMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let payoff = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert_eq!(game_barrier(&payoff, &m0).unwrap(), 0.0);
    }

    #[test]
    fn game_barrier_single_column_reduces_to_energy_barrier() {
        let m0 = path_exploration(5);
        // Climbing a column with payoff (3,0,1,0,2) descends the shortfall
        // (0,3,2,3,1); compare against the landscape barrier directly.
        let col = [3.0, 0.0, 1.0, 0.0, 2.0];
        let payoff = DMatrix::from_fn(5, 1, |x, _| col[x]);
        let shortfall: Vec<f64> = col.iter().map(|u| 3.0 - u).collect();
        let land = Landscape::new(m0.clone(), shortfall).unwrap();
        assert_abs_diff_eq!(
            game_barrier(&payoff, &m0).unwrap(),
            land.energy_barrier(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn game_barrier_payoff_valley() {
        // Column payoffs (3, 0, 2) on a path: moving from the best reply to
        // the second-best crosses the payoff valley at the middle state.
        let m0 = path_exploration(3);
        let payoff = DMatrix::from_fn(3, 1, |x, _| [3.0, 0.0, 2.0][x]);
        assert_abs_diff_eq!(game_barrier(&payoff, &m0).unwrap(), 2.0, epsilon = 1e-12);
    }
}
