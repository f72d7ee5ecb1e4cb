//! Exact pmf by the two-track possession recursion.
//!
//! `q1[i]` is the probability that team 1 has scored `i` goals and holds
//! starting possession after `n` goals in total, `q2[i]` the same with team 2
//! in possession. Mixing `q1 + q2` over the parent gives the pmf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    stationary_possession, BDist, ChainParams, ParentDist, ParentTable, DEFAULT_SUPPORT_CAP, DEFAULT_TAIL_TOL,
};

/// Probabilities `p_0 ..= p_max` and the parent tail mass discarded to get them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfVector {
    pub probs: Vec<f64>,
    pub truncation_mass: f64,
}

impl PmfVector {
    pub fn new(probs: Vec<f64>) -> Self {
        Self {
            probs,
            truncation_mass: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `p_i`, zero beyond the stored range.
    pub fn get(&self, i: usize) -> f64 {
        self.probs.get(i).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| i as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i as f64 - m).powi(2) * p)
            .sum()
    }
}

/// Rolling state of the recursion after `n` goals.
#[derive(Debug, Clone)]
pub struct RecursionState {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub n: usize,
    r1: f64,
    r2: f64,
}

impl RecursionState {
    pub fn new(chain: &ChainParams) -> Self {
        let s = stationary_possession(chain);
        Self {
            q1: vec![s],
            q2: vec![1.0 - s],
            n: 0,
            r1: chain.r1(),
            r2: chain.r2(),
        }
    }

    /// Advances by one goal. Only indices `< width` are kept when `width` is
    /// given, which is enough when no probability beyond `width - 1` is needed.
    pub fn step(&mut self, width: Option<usize>) {
        let (r1, r2) = (self.r1, self.r2);
        let grow = width.map_or(true, |w| self.q1.len() < w);
        if grow {
            self.q1.push(0.0);
            self.q2.push(0.0);
        }
        // Descending so that index i-1 still holds the previous step.
        for i in (1..self.q1.len()).rev() {
            let keep = (1.0 - r1) * self.q1[i] + r2 * self.q2[i];
            let score = r1 * self.q1[i - 1] + (1.0 - r2) * self.q2[i - 1];
            self.q1[i] = keep;
            self.q2[i] = score;
        }
        self.q1[0] = (1.0 - r1) * self.q1[0] + r2 * self.q2[0];
        self.q2[0] = 0.0;
        self.n += 1;
    }

    /// `P(i team-1 goals | N = n)`.
    #[inline]
    pub fn prob(&self, i: usize) -> f64 {
        match (self.q1.get(i), self.q2.get(i)) {
            (Some(a), Some(b)) => a + b,
            _ => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.q1.iter().chain(&self.q2).sum()
    }
}

/// Exact pmf with the default support cap.
pub fn pmf(spec: &BDist, tail_tol: f64) -> Result<PmfVector> {
    pmf_with_cap(spec, tail_tol, DEFAULT_SUPPORT_CAP)
}

pub fn pmf_with_cap(spec: &BDist, tail_tol: f64, cap: usize) -> Result<PmfVector> {
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tail_tol",
            value: tail_tol,
            reason: "must be positive",
        });
    }
    let table = spec.parent().table(tail_tol, cap)?;
    let mut state = RecursionState::new(spec.chain());
    let mut probs = vec![0.0; table.probs.len()];
    for (n, &pn) in table.probs.iter().enumerate() {
        if n > 0 {
            state.step(None);
        }
        if pn == 0.0 {
            continue;
        }
        for (i, p) in probs.iter_mut().enumerate().take(n + 1) {
            *p += (state.q1[i] + state.q2[i]) * pn;
        }
    }
    Ok(PmfVector {
        probs,
        truncation_mass: table.truncated,
    })
}

/// Default-tolerance convenience wrapper.
pub fn pmf_default(spec: &BDist) -> Result<PmfVector> {
    pmf(spec, DEFAULT_TAIL_TOL)
}

/// Single entry `p_i` by the recursion, keeping only indices `0..=i`.
/// Costs `O(i m)` for a parent table of length `m`.
pub fn recursive_prob(spec: &BDist, i: usize, tail_tol: f64, cap: usize) -> Result<f64> {
    let table = spec.parent().table(tail_tol, cap)?;
    Ok(recursive_prob_table(spec.chain(), &table, i))
}

/// [`recursive_prob`] against a precomputed parent table.
pub fn recursive_prob_table(chain: &ChainParams, table: &ParentTable, i: usize) -> f64 {
    if i >= table.probs.len() {
        return 0.0;
    }
    if *chain == ChainParams::parent_recovery() {
        return table.probs[i];
    }
    let mut state = RecursionState::new(chain);
    let mut acc = 0.0;
    for (n, &pn) in table.probs.iter().enumerate() {
        if n > 0 {
            state.step(Some(i + 1));
        }
        if n >= i {
            acc += state.prob(i) * pn;
        }
    }
    acc
}

/// Largest `n` accepted by [`brute_force_pmf`].
pub const BRUTE_FORCE_MAX_N: usize = 20;

/// Enumerates all `2^n` scorer sequences from both starting possessions.
/// Independent of the recursion; used as a test oracle.
pub fn brute_force_pmf(chain: &ChainParams, n: usize) -> Result<PmfVector> {
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeLimit {
            size: n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let (r1, r2) = (chain.r1(), chain.r2());
    let s = stationary_possession(chain);
    let mut probs = vec![0.0; n + 1];
    for mask in 0u32..(1u32 << n) {
        for (team1_starts, weight) in [(true, s), (false, 1.0 - s)] {
            if weight == 0.0 {
                continue;
            }
            let mut w = weight;
            let mut team1_has_ball = team1_starts;
            for step in 0..n {
                let team1_scores = mask >> step & 1 == 1;
                w *= match (team1_has_ball, team1_scores) {
                    (true, true) => r1,
                    (true, false) => 1.0 - r1,
                    (false, true) => 1.0 - r2,
                    (false, false) => r2,
                };
                // The conceding side restarts with the ball.
                team1_has_ball = !team1_scores;
            }
            probs[mask.count_ones() as usize] += w;
        }
    }
    Ok(PmfVector::new(probs))
}

/// Number of local maxima; a run of equal values counts once and the
/// endpoints are eligible.
pub fn count_modes(probs: &[f64]) -> usize {
    let mut runs: Vec<f64> = Vec::with_capacity(probs.len());
    for &p in probs {
        if runs.last() != Some(&p) {
            runs.push(p);
        }
    }
    (0..runs.len())
        .filter(|&k| {
            let left = k == 0 || runs[k - 1] < runs[k];
            let right = k + 1 == runs.len() || runs[k + 1] < runs[k];
            left && right
        })
        .count()
}

/// Convenience for composing a pmf as the parent of a further b-distribution.
pub fn compose(outer: ChainParams, inner: &PmfVector) -> Result<BDist> {
    BDist::new(outer, ParentDist::from_pmf(inner)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParentDist;

    fn spec(r1: f64, r2: f64, parent: ParentDist) -> BDist {
        BDist::new(ChainParams::new(r1, r2).unwrap(), parent).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
        }
    }

    #[test]
    fn single_goal() {
        for (r1, r2) in [(0.8, 0.3), (0.1, 0.6), (1.0, 0.4)] {
            let p = pmf(&spec(r1, r2, ParentDist::fixed(1)), 1e-12).unwrap();
            assert_close(&p.probs, &[r2 / (r1 + r2), r1 / (r1 + r2)], 1e-15);
            assert_eq!(p.truncation_mass, 0.0);
        }
    }

    #[test]
    fn thinning_two_goals_is_binomial() {
        let p = pmf(&spec(0.5, 0.5, ParentDist::fixed(2)), 1e-12).unwrap();
        assert_close(&p.probs, &[0.25, 0.5, 0.25], 1e-15);
    }

    #[test]
    fn three_goals_match_small_n_table() {
        // (r1 + r2) p_i from the N = 3 polynomials at (0.8, 0.3).
        let (r1, r2) = (0.8f64, 0.3f64);
        let expected = [
            (1.0 - r1).powi(2) * r2,
            2.0 * r1 * (1.0 - r1) * r2 + r1 * r2 * r2,
            r1 * r1 * r2 + 2.0 * r1 * r2 * (1.0 - r2),
            r1 * (1.0 - r2).powi(2),
        ]
        .map(|v| v / (r1 + r2));
        let p = pmf(&spec(r1, r2, ParentDist::fixed(3)), 1e-12).unwrap();
        assert_close(&p.probs, &expected, 1e-15);
        assert_close(&p.probs, &[0.0109091, 0.1527273, 0.48, 0.3563636], 1e-7);
        let brute = brute_force_pmf(&ChainParams::new(r1, r2).unwrap(), 3).unwrap();
        assert_close(&p.probs, &brute.probs, 1e-14);
    }

    #[test]
    fn brute_force_edge_cases() {
        let c = ChainParams::new(0.3, 0.6).unwrap();
        assert_eq!(brute_force_pmf(&c, 0).unwrap().probs, vec![1.0]);
        let all = brute_force_pmf(&ChainParams::parent_recovery(), 5).unwrap();
        assert_close(&all.probs, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 0.0);
        assert!(matches!(
            brute_force_pmf(&c, 21),
            Err(Error::SizeLimit { size: 21, max: 20 })
        ));
    }

    #[test]
    fn recursion_state_conserves_mass() {
        let mut st = RecursionState::new(&ChainParams::new(0.37, 0.81).unwrap());
        for _ in 0..200 {
            st.step(None);
            assert!((st.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recursive_prob_matches_full_pmf() {
        let s = spec(0.3, 0.45, ParentDist::poisson(12.0).unwrap());
        let full = pmf(&s, 1e-12).unwrap();
        for i in [0, 1, 4, 9, 30] {
            let single = recursive_prob(&s, i, 1e-12, DEFAULT_SUPPORT_CAP).unwrap();
            assert!((single - full.get(i)).abs() < 1e-15, "i={i}");
        }
        assert_eq!(recursive_prob(&s, 10_000, 1e-12, DEFAULT_SUPPORT_CAP).unwrap(), 0.0);
    }

    #[test]
    fn rejects_nonpositive_tail_tolerance() {
        assert!(pmf(&spec(0.5, 0.5, ParentDist::fixed(3)), 0.0).is_err());
    }

    #[test]
    fn modes() {
        let bin: Vec<f64> = pmf(&spec(0.5, 0.5, ParentDist::fixed(20)), 1e-12)
            .unwrap()
            .probs;
        assert_eq!(count_modes(&bin), 1);
        let over = pmf(&spec(0.05, 0.05, ParentDist::fixed(20)), 1e-12).unwrap().probs;
        assert!(count_modes(&over) >= 2, "{over:?}");
        assert_eq!(count_modes(&[1.0]), 1);
        assert_eq!(count_modes(&[0.2, 0.3, 0.3, 0.2]), 1);
        assert_eq!(count_modes(&[0.25; 4]), 1);
        assert_eq!(count_modes(&[0.4, 0.1, 0.1, 0.4]), 2);
    }

    #[test]
    fn composed_parent_is_valid() {
        let inner = pmf(&spec(0.7, 0.6, ParentDist::poisson(6.0).unwrap()), 1e-12).unwrap();
        let outer = compose(ChainParams::new(0.4, 0.3).unwrap(), &inner).unwrap();
        let p = pmf(&outer, 1e-12).unwrap();
        assert!((p.total() - 1.0).abs() < 1e-10);
        assert!((p.mean() - outer.mean()).abs() < 1e-9);
    }
}
