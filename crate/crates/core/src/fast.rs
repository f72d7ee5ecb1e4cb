//! Single probabilities in `O(m - i)` operations.
//!
//! Team 1 has scored exactly `i` goals after `n` in total when the `i`-th
//! team-1 goal falls at or before `n` and the `(i+1)`-th after it. The first
//! goal arrives after an equilibrium interval and every later one after an
//! ordinary interval, so with `C_k` the `k`-fold convolution of the ordinary
//! law and `F` the equilibrium cdf,
//!
//! ```text
//! P(i | n) = Σ_s (C_{i-1}(s) - C_i(s)) F(n - s).
//! ```
//!
//! `C_k` comes from De Pril's recursion. Because the ordinary law is
//! geometric beyond its first point, the convolution sum collapses into two
//! running accumulators (`ta`, `tb`) and each new `s` costs `O(1)`. In the
//! underdispersed regime forward recursion eventually amplifies rounding, so
//! past [`forward_limit`] the values come from the equivalent three-term
//! recurrence run downward from exact seeds.
//!
//! The outer sum over `s` likewise collapses into the running pair `(A, B)`
//! because `1 - F` is geometric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ln_choose, stationary_possession, BDist, ChainParams, ParentTable, DEFAULT_SUPPORT_CAP, DEFAULT_TAIL_TOL,
};
use crate::pmf::recursive_prob;

const RESCALE_HIGH: f64 = 1e150;
const RESCALE_LOW: f64 = 1e-150;

/// Streams `C_order(s)` for `s = order, order + 1, ...`.
///
/// Values are held as `h * exp(log_scale)`; the recursion is linear in `C`,
/// so `C_order(order) = P1(1)^order` can be factored out and `h` started at 1.
#[derive(Debug, Clone)]
struct Convolution {
    order: usize,
    s: usize,
    head: f64,
    tail_start: f64,
    decay: f64,
    h: f64,
    ta: f64,
    tb: f64,
    log_scale: f64,
}

impl Convolution {
    fn new(chain: &ChainParams, order: usize) -> Self {
        let head = 1.0 - chain.r2();
        Self {
            order,
            s: order,
            head,
            tail_start: chain.r1() * chain.r2(),
            decay: 1.0 - chain.r1(),
            h: 1.0,
            ta: 0.0,
            tb: 0.0,
            log_scale: order as f64 * head.ln(),
        }
    }

    /// `C_order(s)` at the current `s`.
    #[inline]
    fn value(&self) -> f64 {
        if self.order == 0 {
            return if self.s == 0 { 1.0 } else { 0.0 };
        }
        if self.h == 0.0 {
            return 0.0;
        }
        self.h * self.log_scale.exp()
    }

    #[inline]
    fn advance(&mut self) {
        if self.order > 0 {
            let feed = self.tail_start * self.h;
            let ta = self.decay * self.ta + feed;
            let tb = self.decay * (self.tb + self.ta) + feed;
            let lag = (self.s + 1 - self.order) as f64;
            self.h = ((self.order + 1) as f64 / lag * tb - ta) / self.head;
            self.ta = ta;
            self.tb = tb;
            self.rescale();
        }
        self.s += 1;
    }

    fn rescale(&mut self) {
        let size = self.h.abs().max(self.ta.abs()).max(self.tb.abs());
        if size > RESCALE_HIGH || (size < RESCALE_LOW && size > 0.0) {
            let factor = size.recip();
            self.h *= factor;
            self.ta *= factor;
            self.tb *= factor;
            self.log_scale += size.ln();
        }
    }
}

/// Offset `t = s - order` beyond which forward recursion loses the wanted
/// solution, if there is one.
///
/// With `h[t] = C_k(k + t)`, `a = 1 - r2`, `b = r1 + r2 - 1`, `y = 1 - r1`,
/// the convolution satisfies
///
/// ```text
/// a (t+1) h[t+1] = (k r1 r2 - (b - a y) t) h[t] + b y (t-1) h[t-1].
/// ```
///
/// For `b > 0` the two local solutions have opposite signs and the positive
/// (wanted) one dominates only while `k r1 r2 - (b - a y) t >= 0`. For
/// `b <= 0` forward recursion is stable throughout.
pub fn forward_limit(chain: &ChainParams, order: usize) -> Option<f64> {
    let (r1, r2) = (chain.r1(), chain.r2());
    let (a, b, y) = (1.0 - r2, r1 + r2 - 1.0, 1.0 - r1);
    let drift = b - a * y;
    if b <= 0.0 || drift <= 0.0 || y <= 0.0 || order == 0 {
        return None;
    }
    Some(order as f64 * r1 * r2 / drift)
}

/// `ln C_order(order + t)` as a positive sum: `J` of the `order` intervals
/// take the geometric branch and their excesses sum to `t`.
fn ln_convolution_direct(chain: &ChainParams, order: usize, t: usize) -> f64 {
    let (r1, r2) = (chain.r1(), chain.r2());
    let (ln_a, ln_y) = ((1.0 - r2).ln(), (-r1).ln_1p());
    if t == 0 {
        return order as f64 * ln_a;
    }
    let k = order as f64;
    let terms: Vec<f64> = (1..=order.min(t))
        .map(|j| {
            let j = j as f64;
            ln_choose(k, j) + (k - j) * ln_a + j * (r1 * r2).ln() + ln_choose(t as f64 - 1.0, j - 1.0)
                + (t as f64 - j) * ln_y
        })
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// `h[t]` for `t = split ..= top` by running the recurrence downward from
/// exact values at `top` and `top - 1`. Returns the values (indexed from
/// `split`) and the number of constant-cost steps.
fn backward_segment(chain: &ChainParams, order: usize, split: usize, top: usize) -> (Vec<f64>, usize) {
    debug_assert!(split >= 1 && split <= top);
    let (r1, r2) = (chain.r1(), chain.r2());
    let (a, b, y) = (1.0 - r2, r1 + r2 - 1.0, 1.0 - r1);
    let k = order as f64;
    let len = top - split + 1;
    let ln_top = ln_convolution_direct(chain, order, top);
    let mut steps = order.min(top);
    // Values are g[j] * exp(scale[j]) for t = split + j.
    let mut g = vec![0.0; len];
    let mut scale = vec![ln_top; len];
    g[len - 1] = 1.0;
    if len >= 2 {
        g[len - 2] = (ln_convolution_direct(chain, order, top - 1) - ln_top).exp();
        steps += order.min(top - 1);
    }
    let mut offset = ln_top;
    for t in (split + 1..top).rev() {
        let j = t - split;
        let tf = t as f64;
        g[j - 1] = (a * (tf + 1.0) * g[j + 1] - (k * r1 * r2 - (b - a * y) * tf) * g[j])
            / (b * y * (tf - 1.0));
        let size = g[j - 1].abs().max(g[j].abs());
        if size > RESCALE_HIGH || (size < RESCALE_LOW && size > 0.0) {
            g[j - 1] /= size;
            g[j] /= size;
            offset += size.ln();
            scale[j] = offset;
        }
        scale[j - 1] = offset;
        steps += 1;
    }
    let values = g
        .iter()
        .zip(&scale)
        .map(|(&v, &ln_s)| if v > 0.0 { (v.ln() + ln_s).exp() } else { 0.0 })
        .collect();
    (values, steps)
}

/// `C_order(s)` streamed in increasing `s`: De Pril forward while that is
/// stable, then precomputed values from the downward recurrence.
struct ConvolutionStream {
    forward: Convolution,
    split_s: usize,
    tail: Vec<f64>,
}

impl ConvolutionStream {
    /// Covers `s = order ..= s_max`; also returns the setup cost in steps.
    fn new(chain: &ChainParams, order: usize, s_max: usize) -> (Self, usize) {
        let forward = Convolution::new(chain, order);
        let top = s_max.saturating_sub(order);
        let split = forward_limit(chain, order)
            .map(|t| (t.ceil() as usize).max(1))
            .filter(|&t| s_max > order && t <= top);
        match split {
            None => (
                Self {
                    forward,
                    split_s: usize::MAX,
                    tail: Vec::new(),
                },
                0,
            ),
            Some(split) => {
                let (tail, steps) = backward_segment(chain, order, split, top);
                (
                    Self {
                        forward,
                        split_s: order + split,
                        tail,
                    },
                    steps,
                )
            }
        }
    }

    #[inline]
    fn value(&self) -> f64 {
        let s = self.forward.s;
        if s >= self.split_s {
            self.tail.get(s - self.split_s).copied().unwrap_or(0.0)
        } else {
            self.forward.value()
        }
    }

    #[inline]
    fn advance(&mut self) {
        if self.forward.s >= self.split_s {
            self.forward.s += 1;
        } else {
            self.forward.advance();
        }
    }
}

/// `C_order(s)` for `s = order ..= s_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionTable {
    pub order: usize,
    pub values: Vec<f64>,
}

impl ConvolutionTable {
    /// `C_order(s)`, zero outside the computed range.
    pub fn at(&self, s: usize) -> f64 {
        s.checked_sub(self.order)
            .and_then(|k| self.values.get(k))
            .copied()
            .unwrap_or(0.0)
    }
}

/// The `order`-fold convolution of the ordinary interval law by De Pril's
/// recursion with geometric accumulators.
pub fn depril_convolve(chain: &ChainParams, order: usize, s_max: usize) -> Result<ConvolutionTable> {
    if order == 0 {
        return Err(Error::InvalidParameter {
            name: "order",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    if chain.r2() >= 1.0 {
        return Err(Error::DegenerateInterval);
    }
    let (mut conv, _) = ConvolutionStream::new(chain, order, s_max);
    let values = (order..=s_max)
        .map(|_| {
            let v = conv.value();
            conv.advance();
            v
        })
        .collect();
    Ok(ConvolutionTable { order, values })
}

/// Outcome of the instability guard for one accumulated term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardDecision {
    Continue,
    Stop,
}

/// Stops accumulation once a contribution `A_n - s B_n` turns negative.
/// The exact contributions are conditional probabilities, so a negative one
/// can only come from rounding; zero is allowed.
#[inline]
pub fn stability_guard(contribution: f64) -> GuardDecision {
    if contribution < 0.0 {
        GuardDecision::Stop
    } else {
        GuardDecision::Continue
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastOptions {
    pub tail_tol: f64,
    pub cap: usize,
    /// Apply [`stability_guard`]; disable only for diagnostics.
    pub guard: bool,
}

impl Default for FastOptions {
    fn default() -> Self {
        Self {
            tail_tol: DEFAULT_TAIL_TOL,
            cap: DEFAULT_SUPPORT_CAP,
            guard: true,
        }
    }
}

/// A single probability and the work spent on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastOutcome {
    pub prob: f64,
    /// Constant-cost loop iterations executed.
    pub steps: usize,
    /// Parent index at which the guard stopped the sum, if it did.
    pub stopped_at: Option<usize>,
    /// The chain was routed to the recursion.
    pub used_recursion: bool,
}

/// `p_i` with default options.
pub fn fast_prob(spec: &BDist, i: usize) -> Result<f64> {
    Ok(fast_prob_with(spec, i, &FastOptions::default())?.prob)
}

pub fn fast_prob_with(spec: &BDist, i: usize, opts: &FastOptions) -> Result<FastOutcome> {
    let chain = spec.chain();
    if needs_recursion(chain) {
        let prob = recursive_prob(spec, i, opts.tail_tol, opts.cap)?;
        return Ok(FastOutcome {
            prob,
            steps: 0,
            stopped_at: None,
            used_recursion: true,
        });
    }
    let table = spec.parent().table(opts.tail_tol, opts.cap)?;
    Ok(fast_prob_table(chain, &table, i, opts.guard))
}

/// `r1 = 1` collapses the geometric part and `r2 = 1` zeroes `P1(1)`, which
/// De Pril's recursion divides by.
pub fn needs_recursion(chain: &ChainParams) -> bool {
    chain.r1() >= 1.0 || chain.r2() >= 1.0
}

/// `p_i` against a precomputed parent table. The chain must satisfy
/// `!needs_recursion(chain)`.
pub fn fast_prob_table(chain: &ChainParams, table: &ParentTable, i: usize, guard: bool) -> FastOutcome {
    debug_assert!(!needs_recursion(chain));
    let parent = &table.probs;
    let m = table.max_n();
    let mut out = FastOutcome {
        prob: 0.0,
        steps: 0,
        stopped_at: None,
        used_recursion: false,
    };
    if i > m {
        return out;
    }
    let s0 = stationary_possession(chain);
    let decay = 1.0 - chain.r1();

    if i == 0 {
        // No team-1 goal in n steps: the equilibrium interval exceeds n.
        let mut survive = s0;
        let mut acc = parent[0];
        for &pn in &parent[1..] {
            acc += pn * survive;
            survive *= decay;
            out.steps += 1;
        }
        out.prob = acc;
        return out;
    }

    let (mut lower, lower_cost) = ConvolutionStream::new(chain, i - 1, m - 1);
    let (mut upper, upper_cost) = ConvolutionStream::new(chain, i, m - 1);
    out.steps += lower_cost + upper_cost;
    let mut a = 0.0;
    let mut b = 0.0;
    let mut acc = 0.0;
    for s in (i - 1)..m {
        let upper_val = if s >= i { upper.value() } else { 0.0 };
        let d = lower.value() - upper_val;
        a += d;
        b = decay * b + d;
        let n = s + 1;
        let contribution = a - s0 * b;
        out.steps += 1;
        if guard && stability_guard(contribution) == GuardDecision::Stop {
            out.stopped_at = Some(n);
            break;
        }
        acc += parent[n] * contribution;
        lower.advance();
        if s >= i {
            upper.advance();
        }
    }
    out.prob = acc;
    out
}
