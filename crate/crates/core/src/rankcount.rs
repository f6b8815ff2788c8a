//! Counting small integer matrices by their rank modulo a prime, with the elementary lower bounds.

use crate::arith;
use crate::error::{pre, Error, Result};
use crate::modring::rank_mod_p_raw;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const RANK_CAP: u128 = 1_000_000_000;

/// `N_{p,b}` query: `d x n` integer matrices with entries in `[-b, b]` and rank `r` mod `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCountQuery {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub p: u64,
    pub b: u64,
}

impl RankCountQuery {
    pub fn new(d: usize, n: usize, r: usize, p: u64, b: u64) -> Result<Self> {
        if !(1 <= r && r < n && n < d) {
            return Err(pre("need 1 <= r < n < d"));
        }
        if p < 3 || !arith::is_prime(p) {
            return Err(pre("p must be an odd prime"));
        }
        if !(1 <= b && b <= (p - 1) / 2) {
            return Err(pre("need 1 <= b <= (p - 1) / 2"));
        }
        Ok(RankCountQuery { d, n, r, p, b })
    }

    /// Every `b` allowed for this `p`.
    pub fn legal_b(p: u64) -> std::ops::RangeInclusive<u64> {
        1..=(p.saturating_sub(1) / 2)
    }
}

/// Row-reduced basis of a subspace of `F_p^d`.
#[derive(Clone, Debug)]
struct Span {
    p: u64,
    basis: Vec<(usize, Vec<u64>)>,
}

impl Span {
    fn new(p: u64) -> Self {
        Span { p, basis: Vec::new() }
    }

    fn residue(&self, v: &[u64]) -> Vec<u64> {
        let p = self.p;
        let mut w = v.to_vec();
        for (piv, b) in &self.basis {
            let f = w[*piv];
            if f != 0 {
                for (x, y) in w.iter_mut().zip(b) {
                    *x = (*x + (p - f) * y) % p;
                }
            }
        }
        w
    }

    fn contains(&self, v: &[u64]) -> bool {
        self.residue(v).iter().all(|&x| x == 0)
    }

    /// Span with `v` adjoined.
    fn with(&self, v: &[u64]) -> Span {
        let p = self.p;
        let mut w = self.residue(v);
        let Some(piv) = w.iter().position(|&x| x != 0) else { return self.clone() };
        let inv = arith::inv_mod(w[piv], p).expect("p is prime");
        w.iter_mut().for_each(|x| *x = *x * inv % p);
        let mut basis = self.basis.clone();
        for (_, b) in basis.iter_mut() {
            let f = b[piv];
            if f != 0 {
                for (x, y) in b.iter_mut().zip(&w) {
                    *x = (*x + (p - f) * y) % p;
                }
            }
        }
        basis.push((piv, w));
        Span { p, basis }
    }

    fn rank(&self) -> usize {
        self.basis.len()
    }
}

/// Vectors of `[-b, b]^d` in ascending lexicographic order, as integers and residues mod `p`.
fn box_vectors(d: usize, p: u64, b: u64) -> (Vec<Vec<i64>>, Vec<Vec<u64>>) {
    let side = 2 * b + 1;
    let total = side.pow(d as u32);
    let mut ints = Vec::with_capacity(total as usize);
    let mut res = Vec::with_capacity(total as usize);
    for idx in 0..total {
        let mut v = vec![0i64; d];
        let mut k = idx;
        for j in (0..d).rev() {
            v[j] = (k % side) as i64 - b as i64;
            k /= side;
        }
        res.push(v.iter().map(|&x| arith::rem(x as i128, p)).collect());
        ints.push(v);
    }
    (ints, res)
}

fn enumeration_size(d: usize, n: usize, b: u64) -> u128 {
    arith::checked_pow(2 * b as u128 + 1, (d * n) as u32).unwrap_or(u128::MAX)
}

/// Exact `N_{p,b}` by column-wise enumeration carrying the span mod `p`.
///
/// Branches whose rank can no longer reach `r` are cut; once the rank equals `r`, every remaining
/// column must lie in the span, and those completions are counted in one step.
pub fn count_rank(query: &RankCountQuery, cap: u128) -> Result<u128> {
    let RankCountQuery { d, n, r, p, b } = *query;
    count_rank_general(d, n, r, p, b, cap)
}

/// [`count_rank`] without the `r < n < d` and `b <= (p - 1) / 2` restrictions.
pub fn count_rank_general(d: usize, n: usize, r: usize, p: u64, b: u64, cap: u128) -> Result<u128> {
    if d == 0 || n == 0 || !arith::is_prime(p) || r > n.min(d) {
        return Err(pre("need d, n >= 1, prime p and r <= min(n, d)"));
    }
    let size = enumeration_size(d, n, b);
    if size > cap {
        return Err(Error::EnumerationTooLarge { count: size, cap });
    }
    let (_, res) = box_vectors(d, p, b);
    let in_span = |s: &Span| res.iter().filter(|v| s.contains(v)).count() as u128;
    fn rec(s: &Span, col: usize, n: usize, r: usize, res: &[Vec<u64>], in_span: &dyn Fn(&Span) -> u128) -> u128 {
        let k = s.rank();
        if k > r || k + (n - col) < r {
            return 0;
        }
        if col == n {
            return 1;
        }
        if k == r {
            return in_span(s).pow((n - col) as u32);
        }
        res.iter().map(|v| rec(&s.with(v), col + 1, n, r, res, in_span)).sum()
    }
    let root = Span::new(p);
    if r == 0 {
        return Ok(rec(&root, 0, n, r, &res, &in_span));
    }
    Ok(res.par_iter().map(|v| rec(&root.with(v), 1, n, r, &res, &in_span)).sum())
}

/// Counts for every rank `0..=min(n, d)` by direct elimination on each matrix.
pub fn count_by_rank_naive(d: usize, n: usize, p: u64, b: u64, cap: u128) -> Result<Vec<u128>> {
    if d == 0 || n == 0 || !arith::is_prime(p) {
        return Err(pre("need d, n >= 1 and prime p"));
    }
    let size = enumeration_size(d, n, b);
    if size > cap {
        return Err(Error::EnumerationTooLarge { count: size, cap });
    }
    let side = 2 * b as u128 + 1;
    let len = d * n;
    let chunks = size.div_ceil(1 << 12);
    let zero = || vec![0u128; n.min(d) + 1];
    let hist = (0..chunks)
        .into_par_iter()
        .fold(zero, |mut h, c| {
            let mut x = vec![0i128; len];
            for idx in (c << 12)..((c + 1) << 12).min(size) {
                let mut k = idx;
                for e in x.iter_mut().rev() {
                    *e = (k % side) as i128 - b as i128;
                    k /= side;
                }
                h[rank_mod_p_raw(&x, d, n, p)] += 1;
            }
            h
        })
        .reduce(zero, |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    Ok(hist)
}

/// `max(b^{dr}, b^{dn} p^{-(d-r)(n-r)})`.
pub fn envelope(query: &RankCountQuery) -> f64 {
    let RankCountQuery { d, n, r, p, b } = *query;
    let (b, p) = (b as f64, p as f64);
    b.powi((d * r) as i32).max(b.powi((d * n) as i32) * p.powi(-(((d - r) * (n - r)) as i32)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub query: RankCountQuery,
    pub count: u128,
    /// `N >= b^{dr}`.
    pub trivial_ok: bool,
    /// `N > b^{dr} ((b/2)^d p^{r-d})^{n-r}`, checked as `N 2^{d(n-r)} p^{(d-r)(n-r)} > b^{dn}`.
    pub halfbox_ok: bool,
    pub envelope: f64,
    pub ratio: f64,
}

impl BoundReport {
    pub fn ok(&self) -> bool {
        self.trivial_ok && self.halfbox_ok
    }
}

fn pow_u128(b: u64, e: usize) -> Result<u128> {
    arith::checked_pow(b as u128, e as u32).ok_or(Error::ArithmeticOverflow)
}

/// Both elementary lower bounds for `N_{p,b}` in exact integer arithmetic.
pub fn check_lower_bounds(query: &RankCountQuery, cap: u128) -> Result<BoundReport> {
    let count = count_rank(query, cap)?;
    bound_report(query, count)
}

/// [`BoundReport`] for an already computed count.
pub fn bound_report(query: &RankCountQuery, count: u128) -> Result<BoundReport> {
    let RankCountQuery { d, n, r, p, b } = *query;
    let trivial_ok = count >= pow_u128(b, d * r)?;
    let lhs = count
        .checked_mul(pow_u128(2, d * (n - r))?)
        .and_then(|x| x.checked_mul(pow_u128(p, (d - r) * (n - r)).ok()?))
        .ok_or(Error::ArithmeticOverflow)?;
    let halfbox_ok = lhs > pow_u128(b, d * n)?;
    let env = envelope(query);
    Ok(BoundReport { query: *query, count, trivial_ok, halfbox_ok, envelope: env, ratio: count as f64 / env })
}

/// `#{Y in M_r(Z) : |Y|_inf <= b, det Y != 0 mod p}`.
pub fn count_invertible(r: usize, p: u64, b: u64, cap: u128) -> Result<u128> {
    Ok(count_by_rank_naive(r, r, p, b, cap)?[r])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub p: u64,
    pub b: u64,
    pub count: u128,
    pub envelope: f64,
    pub ratio: f64,
    pub lower_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioScan {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub rows: Vec<RatioRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `min_ratio >= 2^{-d(n-r)}`.
    pub min_ok: bool,
}

/// `N / envelope` over every legal `b` for each prime.
pub fn ratio_scan(d: usize, n: usize, r: usize, primes: &[u64], cap: u128) -> Result<RatioScan> {
    let mut rows = Vec::new();
    for &p in primes {
        for b in RankCountQuery::legal_b(p) {
            let q = RankCountQuery::new(d, n, r, p, b)?;
            let rep = check_lower_bounds(&q, cap)?;
            rows.push(RatioRow { p, b, count: rep.count, envelope: rep.envelope, ratio: rep.ratio, lower_ok: rep.ok() });
        }
    }
    let min_ratio = rows.iter().map(|x| x.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|x| x.ratio).fold(0.0, f64::max);
    let floor = 2f64.powi(-((d * (n - r)) as i32));
    Ok(RatioScan { d, n, r, min_ok: rows.iter().all(|x| x.ratio >= floor), rows, min_ratio, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_validation() {
        assert!(RankCountQuery::new(3, 2, 1, 3, 1).is_ok());
        assert!(RankCountQuery::new(3, 2, 1, 2, 1).is_err());
        assert!(RankCountQuery::new(3, 2, 1, 7, 4).is_err());
        assert!(RankCountQuery::new(2, 2, 1, 7, 1).is_err());
        assert!(RankCountQuery::new(3, 2, 0, 7, 1).is_err());
    }

    #[test]
    fn pruned_matches_naive() {
        for (d, n, p, b) in [(3, 2, 3, 1), (3, 2, 5, 2), (2, 2, 3, 1), (3, 3, 3, 1), (4, 2, 5, 1), (2, 3, 2, 1)] {
            let naive = count_by_rank_naive(d, n, p, b, RANK_CAP).unwrap();
            let total: u128 = naive.iter().sum();
            assert_eq!(total, (2 * b as u128 + 1).pow((d * n) as u32));
            for (r, &c) in naive.iter().enumerate() {
                assert_eq!(count_rank_general(d, n, r, p, b, RANK_CAP).unwrap(), c, "{d} {n} {p} {b} {r}");
            }
        }
    }

    #[test]
    fn envelope_examples() {
        let q = RankCountQuery::new(3, 2, 1, 11, 1).unwrap();
        assert_eq!(envelope(&q), 1.0);
        let q = RankCountQuery::new(3, 2, 1, 11, 5).unwrap();
        assert!((envelope(&q) - 15625.0 / 121.0).abs() < 1e-9);
    }

    #[test]
    fn invertible_two_by_two() {
        let c = count_invertible(2, 5, 2, RANK_CAP).unwrap();
        let mut oracle = 0;
        for a in -2i64..=2 {
            for b in -2i64..=2 {
                for c in -2i64..=2 {
                    for d in -2i64..=2 {
                        oracle += ((a * d - b * c).rem_euclid(5) != 0) as u128;
                    }
                }
            }
        }
        assert_eq!(c, oracle);
        assert!(c > 16);
    }

    #[test]
    fn lower_bounds_small() {
        let q = RankCountQuery::new(3, 2, 1, 3, 1).unwrap();
        let rep = check_lower_bounds(&q, RANK_CAP).unwrap();
        assert!(rep.ok() && rep.count >= 1);
    }
}
