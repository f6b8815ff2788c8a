//! Matrix Kloosterman sums `K_n(A, B; q) = sum_{X in GL_n(Z/q)} e_q(tr(A X + B X^{-1}))` and the
//! auxiliary counts and Gauss sums used to bound them.

mod bounds;

pub use bounds::{verify_kloos_bounds, BoundKind, BoundReport, BoundScan};

use crate::arith;
use crate::error::{pre, Error, Result};
use crate::expsum::ExpSum;
use crate::modring::{candidate_count, decode_index, gl_table, mat_inv_mod, ModMatrix, DEFAULT_CAP};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::TAU;

const CHUNK: usize = 4096;

fn check_pair(a: &ModMatrix, b: &ModMatrix) -> Result<(usize, u64)> {
    if !a.is_square() || a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(pre("A and B must be square of the same size"));
    }
    if a.modulus() != b.modulus() {
        return Err(pre("A and B must share a modulus"));
    }
    Ok((a.rows(), a.modulus()))
}

/// `tr(M X)` modulo `q` for row-major `n x n` blocks.
#[inline]
fn tr_prod(m: &[u64], x: &[u32], n: usize, q: u64) -> u64 {
    let mut acc: u64 = 0;
    for i in 0..n {
        for j in 0..n {
            acc += m[i * n + j] * x[j * n + i] as u64;
        }
    }
    acc % q
}

/// Exhaustive evaluation over `GL_n(Z/qZ)`.
pub fn kloos_brute(a: &ModMatrix, b: &ModMatrix) -> Result<ExpSum> {
    let (n, q) = check_pair(a, b)?;
    let count = candidate_count(n, n, q);
    if count > DEFAULT_CAP {
        return Err(Error::EnumerationTooLarge { count, cap: DEFAULT_CAP });
    }
    let table = gl_table(n, q)?;
    let (ae, be) = (a.entries(), b.entries());
    let chunks = table.len().div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut h = vec![0i64; q as usize];
            for i in c * CHUNK..((c + 1) * CHUNK).min(table.len()) {
                let k = tr_prod(ae, table.mat(i), n, q) + tr_prod(be, table.inv(i), n, q);
                h[(k % q) as usize] += 1;
            }
            h
        })
        .reduce(
            || vec![0i64; q as usize],
            |mut x, y| {
                for (u, v) in x.iter_mut().zip(y) {
                    *u += v;
                }
                x
            },
        );
    Ok(ExpSum::from_counts(q, counts))
}

/// Evaluation through the factorisation of `q` into coprime prime powers.
pub fn kloos_crt(a: &ModMatrix, b: &ModMatrix) -> Result<ExpSum> {
    let (_, q) = check_pair(a, b)?;
    let factors = arith::factorize(q);
    if factors.len() <= 1 {
        return kloos_prime_power_component(a, b);
    }
    let mut acc = ExpSum::constant(1, 1);
    for (p, e) in factors {
        let qj = p.pow(e);
        let cj = arith::inv_mod((q / qj) % qj, qj).expect("coprime cofactor") as i64;
        let aj = a.relift(qj).scale(cj);
        let bj = b.relift(qj).scale(cj);
        acc = acc.mul(&kloos_prime_power_component(&aj, &bj)?);
    }
    Ok(acc.lift(q))
}

fn kloos_prime_power_component(a: &ModMatrix, b: &ModMatrix) -> Result<ExpSum> {
    let q = a.modulus();
    if q > 1 {
        let (p, e) = arith::factorize(q)[0];
        if e >= 2 && !a.divisible_by(p) && !b.divisible_by(p) {
            return kloos_primepower(a, b, LiftConvention::Minimal);
        }
    }
    kloos_brute(a, b)
}

/// Outcome of the divisor reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reduced {
    Zero,
    /// `factor * sum`, where `sum` is over the modulus `q / l`.
    Scaled { factor: i64, sum: ExpSum },
}

impl Reduced {
    pub fn to_expsum(&self, q: u64) -> ExpSum {
        match self {
            Reduced::Zero => ExpSum::zero(q),
            Reduced::Scaled { factor, sum } => sum.scaled(*factor).lift(q),
        }
    }

    pub fn value(&self) -> Complex64 {
        match self {
            Reduced::Zero => Complex64::new(0.0, 0.0),
            Reduced::Scaled { factor, sum } => sum.value() * *factor as f64,
        }
    }
}

/// For `l | q / rad(q)` and `l | B`: zero unless `l | A`, else `l^{n^2} K_n(A/l, B/l; q/l)`.
pub fn kloos_reduce(a: &ModMatrix, b: &ModMatrix, l: u64) -> Result<Reduced> {
    let (n, q) = check_pair(a, b)?;
    let top = q / arith::radical(q);
    if l == 0 || !top.is_multiple_of(l) {
        return Err(pre(format!("{l} does not divide q/rad(q) = {top}")));
    }
    if !b.divisible_by(l) {
        return Err(pre(format!("{l} does not divide B")));
    }
    if !a.divisible_by(l) {
        return Ok(Reduced::Zero);
    }
    let factor = i64::try_from((l as u128).pow((n * n) as u32)).map_err(|_| Error::ArithmeticOverflow)?;
    let sum = kloos_crt(&a.div_exact(l)?, &b.div_exact(l)?)?;
    Ok(Reduced::Scaled { factor, sum })
}

/// How representatives of `GL_n(Z/p^alpha)` are lifted to `Z/q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftConvention {
    /// Entrywise least non-negative lift.
    Minimal,
    /// Least lift plus `p^alpha` in every entry.
    Shifted,
}

/// Exact stationary-phase reduction for `q = p^beta`, `beta >= 2`, `A, B != 0 mod p`.
pub fn kloos_primepower(a: &ModMatrix, b: &ModMatrix, lift: LiftConvention) -> Result<ExpSum> {
    let (n, q) = check_pair(a, b)?;
    let (p, beta) = match arith::factorize(q).as_slice() {
        [(p, e)] if *e >= 2 => (*p, *e),
        _ => return Err(pre("kloos_primepower needs q = p^beta with beta >= 2")),
    };
    if a.divisible_by(p) || b.divisible_by(p) {
        return Err(pre("A and B must be nonzero mod p"));
    }
    let alpha = beta / 2;
    let pa = p.pow(alpha);
    let scale = i64::try_from((pa as u128).pow((n * n) as u32)).map_err(|_| Error::ArithmeticOverflow)?;
    let table = gl_table(n, pa)?;
    let mut out = ExpSum::zero(q);
    for i in 0..table.len() {
        let shift = if lift == LiftConvention::Shifted { pa as i128 } else { 0 };
        let y = ModMatrix::from_fn(n, n, q, |r, c| table.mat(i)[r * n + c] as i128 + shift);
        let yinv = mat_inv_mod(&y)?;
        let ay = a.mul(&y);
        let yb = yinv.mul(b);
        let s = ay.sub(&yb);
        if !s.divisible_by(pa) {
            continue;
        }
        let t = ay.add(&yb).trace();
        if beta % 2 == 0 {
            out.add_term(t, scale);
        } else {
            let c = yb.reduce(p);
            let d = s.div_exact(pa)?.reduce(p);
            let g = gauss_brute(&c, &d)?;
            let step = q / p;
            for (k, &gc) in g.counts().iter().enumerate() {
                if gc != 0 {
                    out.add_term(t + k as u64 * step, gc * scale);
                }
            }
        }
    }
    Ok(out)
}

/// `K_n(0, A; p^m)` by the closed form in terms of the rank of `p^{-(m-1)} A mod p`.
pub fn ramanujan_eval(a: &ModMatrix, p: u64, m: u32) -> Result<i128> {
    if !a.is_square() || a.modulus() != p.pow(m) || !arith::is_prime(p) || m == 0 {
        return Err(pre("A must be square modulo p^m with p prime and m >= 1"));
    }
    let n = a.rows() as u32;
    let pm1 = p.pow(m - 1);
    if !a.divisible_by(pm1) {
        return Ok(0);
    }
    let r = a.div_exact(pm1)?.rank_mod_p(p) as u32;
    let pi = p as i128;
    let mut v = pi.pow((m - 1) * n * n) * pi.pow(r * n - r * (r + 1) / 2);
    if r % 2 == 1 {
        v = -v;
    }
    for i in 0..n - r {
        v *= pi.pow(n - r) - pi.pow(i);
    }
    Ok(v)
}

/// `G_p(C, D) = sum_{Z in M_n(F_p)} e_p(tr(C Z^2 + D Z))`.
pub fn gauss_brute(c: &ModMatrix, d: &ModMatrix) -> Result<ExpSum> {
    let (n, p) = check_pair(c, d)?;
    let count = candidate_count(n, n, p);
    if count > DEFAULT_CAP {
        return Err(Error::EnumerationTooLarge { count, cap: DEFAULT_CAP });
    }
    let (ce, de) = (c.entries(), d.entries());
    let mut out = ExpSum::zero(p);
    let len = n * n;
    let mut z = vec![0u64; len];
    let mut z2 = vec![0u64; len];
    for idx in 0..count as u64 {
        decode_index(idx, len, p, &mut z);
        for i in 0..n {
            for j in 0..n {
                z2[i * n + j] = (0..n).map(|k| z[i * n + k] * z[k * n + j]).sum::<u64>() % p;
            }
        }
        let mut t = 0u64;
        for i in 0..n {
            for j in 0..n {
                t += ce[i * n + j] * z2[j * n + i] + de[i * n + j] * z[j * n + i];
            }
        }
        out.add_term(t % p, 1);
    }
    Ok(out)
}

/// `#{Y in GL_n(Z/q) : A Y = Y^{-1} B}`.
pub fn count_c(a: &ModMatrix, b: &ModMatrix) -> Result<u128> {
    let (n, q) = check_pair(a, b)?;
    let count = candidate_count(n, n, q);
    if count > DEFAULT_CAP {
        return Err(Error::EnumerationTooLarge { count, cap: DEFAULT_CAP });
    }
    let table = gl_table(n, q)?;
    let (ae, be) = (a.entries(), b.entries());
    let hits = (0..table.len())
        .into_par_iter()
        .filter(|&t| {
            let y = table.mat(t);
            let yi = table.inv(t);
            (0..n).all(|i| {
                (0..n).all(|j| {
                    let lhs: u64 = (0..n).map(|k| ae[i * n + k] * y[k * n + j] as u64).sum::<u64>() % q;
                    let rhs: u64 = (0..n).map(|k| yi[i * n + k] as u64 * be[k * n + j]).sum::<u64>() % q;
                    lhs == rhs
                })
            })
        })
        .count();
    Ok(hits as u128)
}

/// Dimension over `F_p` of `{Z : C Z + Z C = 0}`, or of `{Z : Z + C Z + Z C = 0}` when `affine`.
pub fn dim_anticommutant(c: &ModMatrix, affine: bool) -> Result<usize> {
    let p = c.modulus();
    if !c.is_square() || !arith::is_prime(p) {
        return Err(pre("C must be square over a prime field"));
    }
    let n = c.rows();
    let nn = n * n;
    // Column (k, l) of the map holds the image of the matrix unit E_{kl}.
    let mut m = vec![0i128; nn * nn];
    for k in 0..n {
        for l in 0..n {
            let col = k * n + l;
            for i in 0..n {
                // (C E_kl)_{i l} = C_{i k}
                m[(i * n + l) * nn + col] += c.get(i, k) as i128;
                // (E_kl C)_{k j} = C_{l j}
                m[(k * n + i) * nn + col] += c.get(l, i) as i128;
            }
            if affine {
                m[col * nn + col] += 1;
            }
        }
    }
    Ok(nn - crate::modring::rank_mod_p_raw(&m, nn, nn, p))
}

/// `K_n(0, A; q)` for every `A in M_n(Z/q)`, indexed like the lexicographic candidate order.
///
/// The values are the discrete Fourier transform of the indicator of `GL_n(Z/q)`, computed axis by
/// axis in floating point and rounded; every value is a rational integer, and the routine fails if
/// any rounding residual exceeds `1e-6`.
pub fn kloos_zero_all(n: usize, q: u64) -> Result<Vec<i128>> {
    let len = n * n;
    let size = candidate_count(n, n, q);
    if size.saturating_mul(q as u128 * len as u128) > 20 * DEFAULT_CAP {
        return Err(Error::EnumerationTooLarge { count: size, cap: DEFAULT_CAP });
    }
    let size = size as usize;
    let table = gl_table(n, q)?;
    let mut f = vec![Complex64::new(0.0, 0.0); size];
    for i in 0..table.len() {
        let idx = table.mat(i).iter().fold(0usize, |acc, &x| acc * q as usize + x as usize);
        f[idx] = Complex64::new(1.0, 0.0);
    }
    let tw: Vec<Complex64> =
        (0..q).map(|k| Complex64::from_polar(1.0, TAU * k as f64 / q as f64)).collect();
    let qs = q as usize;
    let mut line = vec![Complex64::new(0.0, 0.0); qs];
    for axis in 0..len {
        let stride = qs.pow((len - 1 - axis) as u32);
        let block = stride * qs;
        for base in (0..size).step_by(block) {
            for off in 0..stride {
                for t in 0..qs {
                    line[t] = f[base + off + t * stride];
                }
                for j in 0..qs {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (t, v) in line.iter().enumerate() {
                        acc += v * tw[(j * t) % qs];
                    }
                    f[base + off + j * stride] = acc;
                }
            }
        }
    }
    let mut out = vec![0i128; size];
    let mut digits = vec![0u64; len];
    for (idx, slot) in out.iter_mut().enumerate() {
        decode_index(idx as u64, len, q, &mut digits);
        // K(0, A) = sum_Y e_q(tr(A Y)) = F(A^t)
        let t_idx = (0..len).fold(0usize, |acc, k| {
            let (i, j) = (k / n, k % n);
            acc * qs + digits[j * n + i] as usize
        });
        let v = f[t_idx];
        let r = v.re.round();
        if (v.re - r).abs() > 1e-6 || v.im.abs() > 1e-6 {
            return Err(pre(format!("Fourier value {v} is not an integer")));
        }
        *slot = r as i128;
    }
    Ok(out)
}
