//! Exact fixed-`N` probabilities as integer combinations of
//! `r1^a (1-r1)^b r2^c (1-r2)^d`.
//!
//! Each polynomial represents `(r1 + r2) p_i`. The possession recursion is run
//! on polynomials and simplified after every step by merging like terms and
//! collapsing `X r1 + X (1-r1) -> X` (likewise for `r2`) when the two
//! coefficients are equal.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChainParams;

/// Largest `N` for which tables are produced.
pub const MAX_SYMBOLIC_N: usize = 12;

/// Exponents of `r1`, `1-r1`, `r2`, `1-r2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Powers {
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub d: u32,
}

impl Powers {
    pub const ONE: Powers = Powers { a: 0, b: 0, c: 0, d: 0 };

    pub fn new(a: u32, b: u32, c: u32, d: u32) -> Self {
        Self { a, b, c, d }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: i64,
    pub powers: Powers,
}

/// A sum of monomials with distinct exponents and non-zero coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicPoly {
    terms: BTreeMap<Powers, i64>,
}

impl SymbolicPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(coef: i64, powers: Powers) -> Self {
        let mut p = Self::zero();
        p.add_term(coef, powers);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (i64, Powers)>) -> Self {
        let mut p = Self::zero();
        for (coef, powers) in terms {
            p.add_term(coef, powers);
        }
        p
    }

    pub fn add_term(&mut self, coef: i64, powers: Powers) {
        if coef == 0 {
            return;
        }
        let entry = self.terms.entry(powers).or_insert(0);
        *entry += coef;
        if *entry == 0 {
            self.terms.remove(&powers);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical (descending lexicographic) order.
    pub fn terms(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.terms
            .iter()
            .rev()
            .map(|(&powers, &coef)| Monomial { coef, powers })
    }

    fn add(&mut self, other: &SymbolicPoly) {
        for (&powers, &coef) in &other.terms {
            self.add_term(coef, powers);
        }
    }

    fn times(&self, f: impl Fn(Powers) -> Powers) -> SymbolicPoly {
        SymbolicPoly {
            terms: self.terms.iter().map(|(&p, &c)| (f(p), c)).collect(),
        }
    }

    /// Exchanges the roles of the two teams: `(a, b, c, d) -> (c, d, a, b)`.
    pub fn swap_teams(&self) -> SymbolicPoly {
        self.times(|p| Powers::new(p.c, p.d, p.a, p.b))
    }
}

/// Applies the collapse rule to a fixpoint. Like terms are already merged by
/// construction.
pub fn simplify(poly: &SymbolicPoly) -> SymbolicPoly {
    let mut out = poly.clone();
    while let Some((hi, lo, target, coef)) = find_collapse(&out) {
        out.terms.remove(&hi);
        out.terms.remove(&lo);
        out.add_term(coef, target);
    }
    out
}

/// First pair `X r + X (1-r)` with equal coefficients in ascending key order.
fn find_collapse(poly: &SymbolicPoly) -> Option<(Powers, Powers, Powers, i64)> {
    for (&p, &coef) in &poly.terms {
        if p.a > 0 {
            let partner = Powers::new(p.a - 1, p.b + 1, p.c, p.d);
            if poly.terms.get(&partner) == Some(&coef) {
                return Some((p, partner, Powers::new(p.a - 1, p.b, p.c, p.d), coef));
            }
        }
        if p.c > 0 {
            let partner = Powers::new(p.a, p.b, p.c - 1, p.d + 1);
            if poly.terms.get(&partner) == Some(&coef) {
                return Some((p, partner, Powers::new(p.a, p.b, p.c - 1, p.d), coef));
            }
        }
    }
    None
}

/// Polynomials for `(r1 + r2) p_i`, `i = 0 ..= n`.
pub fn symbolic_pmf(n: usize) -> Result<Vec<SymbolicPoly>> {
    if n > MAX_SYMBOLIC_N {
        return Err(Error::SizeLimit {
            size: n,
            max: MAX_SYMBOLIC_N,
        });
    }
    // Team 1 starts with the ball in proportion to r2, team 2 to r1.
    let mut q1 = vec![SymbolicPoly::monomial(1, Powers::new(0, 0, 1, 0))];
    let mut q2 = vec![SymbolicPoly::monomial(1, Powers::new(1, 0, 0, 0))];
    for _ in 0..n {
        q1.push(SymbolicPoly::zero());
        q2.push(SymbolicPoly::zero());
        let mut n1 = Vec::with_capacity(q1.len());
        let mut n2 = Vec::with_capacity(q1.len());
        for i in 0..q1.len() {
            let mut keep = q1[i].times(|p| Powers { b: p.b + 1, ..p });
            keep.add(&q2[i].times(|p| Powers { c: p.c + 1, ..p }));
            let mut score = SymbolicPoly::zero();
            if i > 0 {
                score = q1[i - 1].times(|p| Powers { a: p.a + 1, ..p });
                score.add(&q2[i - 1].times(|p| Powers { d: p.d + 1, ..p }));
            }
            n1.push(simplify(&keep));
            n2.push(simplify(&score));
        }
        q1 = n1;
        q2 = n2;
    }
    Ok(q1
        .iter()
        .zip(&q2)
        .map(|(x, y)| {
            let mut p = x.clone();
            p.add(y);
            simplify(&p)
        })
        .collect())
}

pub fn eval_symbolic(poly: &SymbolicPoly, chain: &ChainParams) -> f64 {
    let (r1, r2) = (chain.r1(), chain.r2());
    poly.terms
        .iter()
        .map(|(p, &c)| {
            c as f64
                * r1.powi(p.a as i32)
                * (1.0 - r1).powi(p.b as i32)
                * r2.powi(p.c as i32)
                * (1.0 - r2).powi(p.d as i32)
        })
        .sum()
}

fn factor(out: &mut String, base: &str, exp: u32) {
    if exp == 0 {
        return;
    }
    if !out.is_empty() {
        out.push('*');
    }
    out.push_str(base);
    if exp > 1 {
        out.push_str(&format!("^{exp}"));
    }
}

/// Plain-text form, e.g. `2*r1*(1-r1)^2*r2 + 2*r1*(1-r1)*r2^2`.
pub fn render(poly: &SymbolicPoly) -> String {
    if poly.is_zero() {
        return "0".to_owned();
    }
    let mut out = String::new();
    for (k, m) in poly.terms().enumerate() {
        let mut term = String::new();
        if m.coef != 1 || m.powers == Powers::ONE {
            term.push_str(&m.coef.abs().to_string());
        }
        factor(&mut term, "r1", m.powers.a);
        factor(&mut term, "(1-r1)", m.powers.b);
        factor(&mut term, "r2", m.powers.c);
        factor(&mut term, "(1-r2)", m.powers.d);
        match (k, m.coef < 0) {
            (0, false) => {}
            (0, true) => out.push('-'),
            (_, false) => out.push_str(" + "),
            (_, true) => out.push_str(" - "),
        }
        out.push_str(&term);
    }
    out
}

impl fmt::Display for SymbolicPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}
