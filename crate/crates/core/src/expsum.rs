//! Exact sums of `q`-th roots of unity.

use crate::arith;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Mutex, OnceLock};

/// `sum_k counts[k] * e(k / q)` kept as an integer histogram over residues.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpSum {
    q: u64,
    counts: Vec<i64>,
}

impl ExpSum {
    pub fn zero(q: u64) -> Self {
        assert!(q > 0);
        ExpSum { q, counts: vec![0; q as usize] }
    }

    pub fn constant(q: u64, c: i64) -> Self {
        let mut s = Self::zero(q);
        s.counts[0] = c;
        s
    }

    pub fn from_counts(q: u64, counts: Vec<i64>) -> Self {
        assert_eq!(counts.len() as u64, q);
        ExpSum { q, counts }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn counts(&self) -> &[i64] {
        &self.counts
    }

    pub fn add_term(&mut self, k: u64, c: i64) {
        self.counts[(k % self.q) as usize] += c;
    }

    pub fn add_assign(&mut self, other: &ExpSum) {
        assert_eq!(self.q, other.q);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn scaled(&self, c: i64) -> ExpSum {
        ExpSum { q: self.q, counts: self.counts.iter().map(|x| x * c).collect() }
    }

    /// Sum of absolute coefficients.
    pub fn weight(&self) -> i64 {
        self.counts.iter().map(|x| x.abs()).sum()
    }

    pub fn value(&self) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c != 0 {
                let (s, co) = (TAU * k as f64 / self.q as f64).sin_cos();
                re += c as f64 * co;
                im += c as f64 * s;
            }
        }
        Complex64::new(re, im)
    }

    /// Same sum written over the modulus `q2`, a multiple of `q`.
    pub fn lift(&self, q2: u64) -> ExpSum {
        assert_eq!(q2 % self.q, 0, "{q2} is not a multiple of {}", self.q);
        let f = q2 / self.q;
        let mut out = ExpSum::zero(q2);
        for (k, &c) in self.counts.iter().enumerate() {
            out.counts[k * f as usize] += c;
        }
        out
    }

    /// Product of two sums, over the lcm of the moduli.
    pub fn mul(&self, other: &ExpSum) -> ExpSum {
        let q = arith::lcm(self.q, other.q);
        let a = self.lift(q);
        let b = other.lift(q);
        let mut out = ExpSum::zero(q);
        for (i, &x) in a.counts.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.counts.iter().enumerate() {
                if y != 0 {
                    out.counts[(i + j) % q as usize] += x * y;
                }
            }
        }
        out
    }

    /// Coefficients of the histogram polynomial reduced modulo the `q`-th cyclotomic polynomial.
    /// Two sums over the same modulus have equal complex value iff their canonical forms agree.
    pub fn canonical(&self) -> Vec<i128> {
        let phi = cyclotomic(self.q);
        let deg = phi.len() - 1;
        let mut c: Vec<i128> = self.counts.iter().map(|&x| x as i128).collect();
        for k in (deg..c.len()).rev() {
            let lead = c[k];
            if lead != 0 {
                for (i, &pc) in phi.iter().enumerate() {
                    c[k - deg + i] -= lead * pc as i128;
                }
            }
        }
        c.truncate(deg);
        c
    }

    /// Exact equality of complex values.
    pub fn exact_eq(&self, other: &ExpSum) -> bool {
        let q = arith::lcm(self.q, other.q);
        self.lift(q).canonical() == other.lift(q).canonical()
    }

    pub fn is_zero_value(&self) -> bool {
        self.canonical().iter().all(|&c| c == 0)
    }
}

/// Integer coefficients of the `n`-th cyclotomic polynomial, lowest degree first.
pub fn cyclotomic(n: u64) -> Vec<i64> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Vec<i64>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().unwrap().get(&n) {
        return p.clone();
    }
    // x^n - 1 divided by every Phi_d with d | n, d < n.
    let mut num = vec![0i64; n as usize + 1];
    num[0] = -1;
    num[n as usize] = 1;
    for d in arith::divisors(n) {
        if d < n {
            num = poly_div_exact(&num, &cyclotomic(d));
        }
    }
    cache.lock().unwrap().insert(n, num.clone());
    num
}

fn poly_div_exact(num: &[i64], den: &[i64]) -> Vec<i64> {
    let dn = den.len() - 1;
    assert_eq!(den[dn], 1, "divisor must be monic");
    let mut r = num.to_vec();
    let mut quo = vec![0i64; num.len() - dn];
    for k in (0..quo.len()).rev() {
        let c = r[k + dn];
        quo[k] = c;
        for (i, &d) in den.iter().enumerate() {
            r[k + i] -= c * d;
        }
    }
    debug_assert!(r.iter().all(|&x| x == 0), "inexact polynomial division");
    quo
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclotomic_small() {
        assert_eq!(cyclotomic(1), vec![-1, 1]);
        assert_eq!(cyclotomic(4), vec![1, 0, 1]);
        assert_eq!(cyclotomic(6), vec![1, -1, 1]);
        assert_eq!(cyclotomic(9), vec![1, 0, 0, 1, 0, 0, 1]);
        assert_eq!(cyclotomic(12), vec![1, 0, -1, 0, 1]);
    }

    #[test]
    fn canonical_detects_vanishing() {
        // 1 + e(1/3) + e(2/3) = 0
        let s = ExpSum::from_counts(3, vec![1, 1, 1]);
        assert!(s.is_zero_value());
        assert!(s.value().norm() < 1e-12);
        // e(1/4) + e(3/4) = 0 but e(1/4) alone is not
        assert!(ExpSum::from_counts(4, vec![0, 1, 0, 1]).is_zero_value());
        assert!(!ExpSum::from_counts(4, vec![0, 1, 0, 0]).is_zero_value());
    }

    #[test]
    fn lift_and_mul_preserve_value() {
        let a = ExpSum::from_counts(3, vec![2, -1, 5]);
        let b = ExpSum::from_counts(4, vec![0, 1, 3, -2]);
        let prod = a.mul(&b);
        assert_eq!(prod.modulus(), 12);
        assert!((prod.value() - a.value() * b.value()).norm() < 1e-9);
        assert!(a.lift(12).exact_eq(&a));
    }
}
