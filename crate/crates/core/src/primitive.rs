//! Primitive matrices modulo `q`, their coset parametrization, explicit `SL_{d+n}(Z)` completions
//! and the rational points `n_+(R/q) D(q)` on the expanding horosphere.

use crate::arith;
use crate::error::{pre, Error, Result};
use crate::modring::{
    candidate_count, decode_index, gl_table, lift_sl, mat_inv_mod, rank_small, smith_normal_form, IntMatrix,
    ModMatrix, DEFAULT_CAP,
};
use crate::real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK: u64 = 1 << 14;

/// True iff the rows of `R` generate `(Z/qZ)^n`, i.e. `rank(R mod p) = n` for every `p | q`.
pub fn is_primitive(r: &ModMatrix) -> bool {
    let primes: Vec<u64> = arith::factorize(r.modulus()).into_iter().map(|(p, _)| p).collect();
    primitive_residues(r.entries(), r.rows(), r.cols(), &primes)
}

/// Primitivity test on raw residues for the given primes.
pub fn primitive_residues(entries: &[u64], rows: usize, cols: usize, primes: &[u64]) -> bool {
    if rows < cols {
        return cols == 0 || primes.is_empty();
    }
    primes.iter().all(|&p| {
        if entries.len() <= 64 {
            rank_small(entries, rows, cols, p) == cols
        } else {
            let m: Vec<i128> = entries.iter().map(|&x| x as i128).collect();
            crate::modring::rank_mod_p_raw(&m, rows, cols, p) == cols
        }
    })
}

/// `#R_q = prod_{p^e || q} p^{(e-1)dn} prod_{l<n} (p^d - p^l)`.
pub fn primitive_count(d: usize, n: usize, q: u64) -> u128 {
    let mut total: u128 = 1;
    for (p, e) in arith::factorize(q) {
        let p = p as u128;
        let pd = p.pow(d as u32);
        let mut local = p.pow((e - 1) * (d * n) as u32);
        for l in 0..n {
            local *= pd.saturating_sub(p.pow(l as u32));
        }
        total *= local;
    }
    total
}

/// Number of primitive `d x n` matrices found by visiting all `q^{dn}` candidates.
pub fn primitive_count_enum(d: usize, n: usize, q: u64, cap: u128) -> Result<u128> {
    let total = candidate_count(d, n, q);
    if total > cap {
        return Err(Error::EnumerationTooLarge { count: total, cap });
    }
    let total = total as u64;
    let primes: Vec<u64> = arith::factorize(q).into_iter().map(|(p, _)| p).collect();
    let len = d * n;
    let count = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut buf = [0u64; 64];
            let mut hits = 0u128;
            for idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
                decode_index(idx, len, q, &mut buf[..len]);
                hits += primitive_residues(&buf[..len], d, n, &primes) as u128;
            }
            hits
        })
        .sum();
    Ok(count)
}

/// Result of the column-wise scan over `3 x 3` matrices mod `q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Square3Scan {
    pub q: u64,
    /// Number of `(c1, c2, c3)` with unit determinant.
    pub units: u128,
    /// Number of visited candidates: all `q^9` triples are either visited or skipped as a block of
    /// `q^3` when `c1, c2` are dependent mod some prime.
    pub candidates: u128,
    /// Number of elements for which the relation check was run.
    pub relation_checked: u128,
    pub relation_failures: u128,
}

#[inline]
fn cross(a: [i64; 3], b: [i64; 3], q: i64) -> [i64; 3] {
    [
        (a[1] * b[2] - a[2] * b[1]).rem_euclid(q),
        (a[2] * b[0] - a[0] * b[2]).rem_euclid(q),
        (a[0] * b[1] - a[1] * b[0]).rem_euclid(q),
    ]
}

#[inline]
fn det3(m: &[i64; 9]) -> i64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
}

/// Remainders by a fixed small modulus via a precomputed 64-bit reciprocal (Lemire's method).
#[derive(Clone, Copy)]
struct FastMod {
    d: u64,
    m: u64,
    offset: i64,
}

impl FastMod {
    fn new(d: u64) -> Self {
        // Offset keeps inputs of magnitude below 2^31 non-negative without changing residues.
        let offset = ((1i64 << 31) / d as i64 + 1) * d as i64;
        FastMod { d, m: u64::MAX / d + 1, offset }
    }

    #[inline]
    fn rem(self, a: i64) -> i64 {
        let a = (a + self.offset) as u32 as u64;
        let low = self.m.wrapping_mul(a);
        ((low as u128 * self.d as u128) >> 64) as i64
    }
}

#[inline]
fn cross_raw(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Exact check of the horosphere relation for `n = d = 3`, `gamma = I`, `R = U` given by columns.
///
/// `S'` is the lift of `R^{-1}` given by the adjugate times `inv_det`, and the block matrix is
/// `[[qI, -R'], [S', (I - S'R')/q]]`. Since `qI` is central, its determinant equals
/// `det(q D - C B) = det(q (I - S'R')/q + S'R')`, which is evaluated as an integer `3 x 3`
/// determinant once the divisibility of `I - S'R'` by `q` is confirmed.
#[inline]
fn relation3(cols: [[i64; 3]; 3], w: [i64; 3], inv_det: i64, fm: FastMod) -> bool {
    let rows_inv = [cross_raw(cols[1], cols[2]), cross_raw(cols[2], cols[0]), w];
    let mut x = [0i64; 9];
    for i in 0..3 {
        let s = [rows_inv[i][0] * inv_det, rows_inv[i][1] * inv_det, rows_inv[i][2] * inv_det];
        for j in 0..3 {
            let sr = s[0] * cols[j][0] + s[1] * cols[j][1] + s[2] * cols[j][2];
            let num = (i == j) as i64 - sr;
            if fm.rem(num) != 0 {
                return false;
            }
            // `q * (num / q) = num` exactly once divisibility holds.
            x[i * 3 + j] = num + sr;
        }
    }
    det3(&x) == 1
}

/// Visit `M_3(Z/qZ)` column by column, counting unit-determinant matrices and optionally running
/// the exact relation check on each of them.
pub fn square3_scan(q: u64, check_relation: bool) -> Result<Square3Scan> {
    if !(2..=64).contains(&q) {
        return Err(pre("square3_scan needs 2 <= q <= 64"));
    }
    let qi = q as i64;
    let fm = FastMod::new(q);
    let primes: Vec<i64> = arith::factorize(q).into_iter().map(|(p, _)| p as i64).collect();
    let inv: Vec<i64> = (0..q).map(|x| arith::inv_mod(x, q).map_or(0, |v| v as i64)).collect();
    let q3 = q * q * q;
    let vec_of = |i: u64| [(i / (q * q)) as i64, (i / q % q) as i64, (i % q) as i64];
    let parts: Vec<(u128, u128, u128, u128)> = (0..q3)
        .into_par_iter()
        .map(|i1| {
            let c1 = vec_of(i1);
            let (mut units, mut cand, mut checked, mut fails) = (0u128, 0u128, 0u128, 0u128);
            for i2 in 0..q3 {
                let c2 = vec_of(i2);
                let w = cross(c1, c2, qi);
                if primes.iter().any(|&p| w.iter().all(|&x| x % p == 0)) {
                    continue;
                }
                cand += q3 as u128;
                for x in 0..qi {
                    let ax = w[0] * x;
                    for y in 0..qi {
                        let axy = ax + w[1] * y;
                        for z in 0..qi {
                            let di = inv[fm.rem(axy + w[2] * z) as usize];
                            if di == 0 {
                                continue;
                            }
                            units += 1;
                            if check_relation {
                                checked += 1;
                                fails += !relation3([c1, c2, [x, y, z]], w, di, fm) as u128;
                            }
                        }
                    }
                }
            }
            (units, cand, checked, fails)
        })
        .collect();
    let mut out = Square3Scan { q, units: 0, candidates: 0, relation_checked: 0, relation_failures: 0 };
    for (u, c, k, f) in parts {
        out.units += u;
        out.candidates += c;
        out.relation_checked += k;
        out.relation_failures += f;
    }
    Ok(out)
}

/// A lifted right-coset representative of `Gamma^0(q)` in `SL_d(Z)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosetRep {
    pub id: usize,
    pub gamma: IntMatrix,
    pub gamma_inv: IntMatrix,
}

/// The bijection `B_q x GL_n(Z/qZ) -> R_q`, `(gamma, U) -> gamma^{-1} (0; U)`.
#[derive(Clone, Debug)]
pub struct Parametrization {
    d: usize,
    n: usize,
    q: u64,
    reps: Vec<CosetRep>,
    tops: Vec<ModMatrix>,
    gamma_inv_mod: Vec<ModMatrix>,
}

/// Lexicographic index of residues, first entry most significant.
pub fn lex_index(entries: &[u64], q: u64) -> u64 {
    entries.iter().fold(0u64, |acc, &x| acc * q + x)
}

fn rep_from_mod(id: usize, g: &ModMatrix) -> Result<CosetRep> {
    let gamma = lift_sl(g)?;
    let gamma_inv = gamma.inverse_unimodular()?;
    Ok(CosetRep { id, gamma, gamma_inv })
}

/// Lexicographically least completion of the first rows `top` to an element of `SL_d(Z/qZ)`.
fn least_completion(top: &ModMatrix, d: usize) -> Result<ModMatrix> {
    let q = top.modulus();
    let primes: Vec<u64> = arith::factorize(q).into_iter().map(|(p, _)| p).collect();
    let mut rows: Vec<u64> = top.entries().to_vec();
    let q_d = candidate_count(1, d, q) as u64;
    let mut v = vec![0u64; d];
    for r in top.rows()..d {
        let mut found = false;
        for idx in 0..q_d {
            decode_index(idx, d, q, &mut v);
            let mut trial = rows.clone();
            trial.extend_from_slice(&v);
            let ok = if r + 1 < d {
                let t = ModMatrix::from_residues(r + 1, d, q, trial.clone()).transpose();
                primitive_residues(t.entries(), d, r + 1, &primes)
            } else {
                ModMatrix::from_residues(d, d, q, trial.clone()).det() == 1 % q
            };
            if ok {
                rows = trial;
                found = true;
                break;
            }
        }
        if !found {
            return Err(pre("rows do not extend to SL_d(Z/qZ)"));
        }
    }
    Ok(ModMatrix::from_residues(d, d, q, rows))
}

/// Coset representatives of `Gamma^0(q) \ SL_d(Z)`, each the lift of the lexicographically least
/// element of its coset in `SL_d(Z/qZ)`.
///
/// The coset of `gamma` is determined by the orbit of its top `d - n` rows under left
/// multiplication by `GL_{d-n}(Z/qZ)`; the least element therefore has the least orbit member on
/// top, followed by the greedy least completion.
pub fn coset_reps(d: usize, n: usize, q: u64) -> Result<Vec<CosetRep>> {
    coset_reps_capped(d, n, q, DEFAULT_CAP)
}

pub fn coset_reps_capped(d: usize, n: usize, q: u64, cap: u128) -> Result<Vec<CosetRep>> {
    if n == 0 || n > d || q == 0 {
        return Err(pre("coset_reps needs 1 <= n <= d and q >= 1"));
    }
    if n == d || q == 1 {
        let i = IntMatrix::identity(d);
        return Ok(vec![CosetRep { id: 0, gamma: i.clone(), gamma_inv: i }]);
    }
    let k = d - n;
    let total = candidate_count(k, d, q);
    if total > cap {
        return Err(Error::EnumerationTooLarge { count: total, cap });
    }
    let gl = gl_table(k, q)?;
    let primes: Vec<u64> = arith::factorize(q).into_iter().map(|(p, _)| p).collect();
    let mut seen = vec![false; total as usize];
    let mut buf = vec![0u64; k * d];
    let mut reps = Vec::new();
    for idx in 0..total as u64 {
        if seen[idx as usize] {
            continue;
        }
        decode_index(idx, k * d, q, &mut buf);
        let t = ModMatrix::from_residues(k, d, q, buf.clone());
        if !primitive_residues(t.transpose().entries(), d, k, &primes) {
            continue;
        }
        for g in 0..gl.len() {
            let gm = ModMatrix::from_residues(k, k, q, gl.mat(g).iter().map(|&x| x as u64).collect());
            let img = gm.mul(&t);
            seen[lex_index(img.entries(), q) as usize] = true;
        }
        let full = least_completion(&t, d)?;
        reps.push(rep_from_mod(reps.len(), &full)?);
    }
    Ok(reps)
}

impl Parametrization {
    pub fn new(d: usize, n: usize, q: u64) -> Result<Self> {
        let reps = coset_reps(d, n, q)?;
        Ok(Self::from_reps(d, n, q, reps))
    }

    pub fn from_reps(d: usize, n: usize, q: u64, reps: Vec<CosetRep>) -> Self {
        let tops = reps.iter().map(|r| r.gamma.to_mod(q).submatrix(0, d - n, 0, d)).collect();
        let gamma_inv_mod = reps.iter().map(|r| r.gamma_inv.to_mod(q)).collect();
        Parametrization { d, n, q, reps, tops, gamma_inv_mod }
    }

    pub fn dims(&self) -> (usize, usize, u64) {
        (self.d, self.n, self.q)
    }

    pub fn reps(&self) -> &[CosetRep] {
        &self.reps
    }

    /// `R = gamma_c^{-1} (0; U) mod q`.
    pub fn forward(&self, c: usize, u: &ModMatrix) -> Result<ModMatrix> {
        let (d, n, q) = (self.d, self.n, self.q);
        if c >= self.reps.len() || u.rows() != n || u.cols() != n || u.modulus() != q {
            return Err(pre("forward needs a valid coset index and an n x n matrix mod q"));
        }
        if !u.is_unit_det() {
            return Err(Error::NotInvertible { q });
        }
        let stacked = ModMatrix::zeros(d - n, n, q).vstack(u);
        Ok(self.gamma_inv_mod[c].mul(&stacked))
    }

    /// The unique `(c, U)` with `forward(c, U) = R`.
    pub fn inverse(&self, r: &ModMatrix) -> Result<(usize, ModMatrix)> {
        let (d, n, q) = (self.d, self.n, self.q);
        if r.rows() != d || r.cols() != n || r.modulus() != q {
            return Err(pre("inverse needs a d x n matrix mod q"));
        }
        if !is_primitive(r) {
            return Err(Error::NotPrimitive { q });
        }
        for (c, top) in self.tops.iter().enumerate() {
            if top.mul(r).is_zero() {
                let g = self.reps[c].gamma.to_mod(q).mul(r);
                return Ok((c, g.submatrix(d - n, d, 0, n)));
            }
        }
        Err(pre("no coset representative matches; the representative set is incomplete"))
    }

    /// Visit every pair `(c, U)`, check that the image is primitive, that no image repeats, that
    /// every primitive matrix is hit, and that the horosphere relation holds.
    pub fn verify_exhaustive(&self, cap: u128) -> Result<BijectionReport> {
        let (d, n, q) = (self.d, self.n, self.q);
        let total = candidate_count(d, n, q);
        if total > cap {
            return Err(Error::EnumerationTooLarge { count: total, cap });
        }
        let gl = gl_table(n, q)?;
        let per_rep: Vec<(Vec<u64>, u128, u128)> = (0..self.reps.len())
            .into_par_iter()
            .map(|c| {
                let mut idxs = Vec::with_capacity(gl.len());
                let (mut non_prim, mut rel_fail) = (0u128, 0u128);
                for g in 0..gl.len() {
                    let u = ModMatrix::from_residues(n, n, q, gl.mat(g).iter().map(|&x| x as u64).collect());
                    let r = self.forward(c, &u).expect("valid pair");
                    if !is_primitive(&r) {
                        non_prim += 1;
                    }
                    if !check_mtx_relation(&self.reps[c], &u).unwrap_or(false) {
                        rel_fail += 1;
                    }
                    idxs.push(lex_index(r.entries(), q));
                }
                (idxs, non_prim, rel_fail)
            })
            .collect();
        let mut hit = vec![false; total as usize];
        let mut report = BijectionReport {
            d,
            n,
            q,
            reps: self.reps.len(),
            pairs: 0,
            non_primitive_images: 0,
            collisions: 0,
            primitive_total: primitive_count(d, n, q),
            hit: 0,
            relation_failures: 0,
        };
        for (idxs, np, rf) in per_rep {
            report.non_primitive_images += np;
            report.relation_failures += rf;
            for i in idxs {
                report.pairs += 1;
                if hit[i as usize] {
                    report.collisions += 1;
                } else {
                    hit[i as usize] = true;
                    report.hit += 1;
                }
            }
        }
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BijectionReport {
    pub d: usize,
    pub n: usize,
    pub q: u64,
    pub reps: usize,
    pub pairs: u128,
    pub non_primitive_images: u128,
    pub collisions: u128,
    pub primitive_total: u128,
    pub hit: u128,
    pub relation_failures: u128,
}

impl BijectionReport {
    pub fn ok(&self) -> bool {
        self.non_primitive_images == 0
            && self.collisions == 0
            && self.hit == self.primitive_total
            && self.pairs == self.primitive_total
            && self.relation_failures == 0
    }
}

/// Shorthand for [`Parametrization::new`].
pub fn param_bij(d: usize, n: usize, q: u64) -> Result<Parametrization> {
    Parametrization::new(d, n, q)
}

/// Exact check that `n_-(S'/q) diag(D_q gamma, I_n) (n_+(R'/q) D(q))^{-1}` lies in `SL_{d+n}(Z)`,
/// where `R = gamma^{-1}(0; U)` and `S = (0  U^{-1})`.
///
/// The four blocks are `P gamma`, `-P gamma R'/q`, `S' P gamma/q` and `(-S' P gamma R'/q + I)/q`
/// with `P = diag(I_{d-n}, q I_n)`; they are scaled by `q^2`, tested for divisibility and the
/// determinant of the resulting integer matrix is computed exactly.
pub fn check_mtx_relation(rep: &CosetRep, u: &ModMatrix) -> Result<bool> {
    let q = u.modulus();
    let n = u.rows();
    let d = rep.gamma.rows();
    if n > d || u.cols() != n {
        return Err(pre("U must be n x n with n <= d"));
    }
    let qi = q as i64;
    let uinv = mat_inv_mod(u)?;
    let stacked = ModMatrix::zeros(d - n, n, q).vstack(u);
    let r = rep.gamma_inv.to_mod(q).mul(&stacked).lift();
    let s = ModMatrix::zeros(n, d - n, q).hstack(&uinv).lift();
    let p = IntMatrix::from_fn(d, d, |i, j| if i != j { 0 } else if i < d - n { 1 } else { qi });
    let pg = p.mul(&rep.gamma)?;
    let pgr = pg.mul(&r)?;
    let spg = s.mul(&pg)?;
    let spgr = s.mul(&pgr)?;
    let q2 = qi.checked_mul(qi).ok_or(Error::ArithmeticOverflow)?;
    let tl = pg.scale(q2)?;
    let tr = pgr.scale(-qi)?;
    let bl = spg.scale(qi)?;
    let br = spgr.neg().add(&IntMatrix::identity(n).scale(qi)?)?;
    let big = IntMatrix::blocks(&tl, &tr, &bl, &br);
    if big.entries().iter().any(|&x| x % q2 != 0) {
        return Ok(false);
    }
    let m = IntMatrix::from_fn(d + n, d + n, |i, j| big.get(i, j) / q2);
    Ok(m.det()? == 1)
}

/// Explicit `eta in SL_{d+n}(Z)` with `eta n_+(R'/q) D(q) = [[A, 0], [C, I_n]]`.
///
/// The first `d` rows `(a_i, b_i)` span the integer kernel of `(R'; q I_n)`; the last `n` rows
/// `(x_j, y_j)` satisfy `x_j R' + q y_j = e_j`.
pub fn complete_to_sl(r: &ModMatrix) -> Result<IntMatrix> {
    let (d, n, q) = (r.rows(), r.cols(), r.modulus());
    if n > d || !is_primitive(r) {
        return Err(Error::NotPrimitive { q });
    }
    let rl = r.lift();
    let qi = q as i64;
    if n == d {
        let s = mat_inv_mod(r)?.lift();
        let sr = s.mul(&rl)?;
        let corr = IntMatrix::from_fn(n, n, |i, j| ((i == j) as i64 - sr.get(i, j)) / qi);
        let top = IntMatrix::identity(n).scale(qi)?;
        return Ok(IntMatrix::blocks(&top, &rl.neg(), &s, &corr));
    }
    let m = IntMatrix::from_fn(d + n, n, |i, j| if i < d { rl.get(i, j) } else { qi * (i - d == j) as i64 });
    let snf = smith_normal_form(&m)?;
    if snf.diagonal().iter().any(|&x| x != 1) {
        return Err(Error::NotPrimitive { q });
    }
    let c_rows = snf.v.mul(&snf.u.submatrix(0, n, 0, d + n))?;
    let kernel = snf.u.submatrix(n, d + n, 0, d + n);
    let mut eta = IntMatrix::from_fn(d + n, d + n, |i, j| if i < d { kernel.get(i, j) } else { c_rows.get(i - d, j) });
    if eta.det()? < 0 {
        if d >= 2 {
            for j in 0..d + n {
                let (a, b) = (eta.get(0, j), eta.get(1, j));
                eta.set(0, j, b);
                eta.set(1, j, a);
            }
        } else {
            for j in 0..d + n {
                eta.set(0, j, -eta.get(0, j));
            }
        }
    }
    Ok(eta)
}

/// Exact post-conditions of [`complete_to_sl`].
pub fn verify_completion(eta: &IntMatrix, r: &ModMatrix) -> Result<bool> {
    let (d, n, q) = (r.rows(), r.cols(), r.modulus());
    if eta.rows() != d + n || eta.cols() != d + n {
        return Ok(false);
    }
    let rl = r.lift();
    let m = IntMatrix::from_fn(d + n, n, |i, j| if i < d { rl.get(i, j) } else { q as i64 * (i - d == j) as i64 });
    let prod = eta.mul(&m)?;
    let shape = (0..d + n).all(|i| (0..n).all(|j| prod.get(i, j) == if i < d { 0 } else { (i - d == j) as i64 }));
    let a = eta.submatrix(0, d, 0, d);
    let qn = (q as i128).pow(n as u32);
    let a_ok = if n == d { a == IntMatrix::identity(n).scale(q as i64)? } else { a.det()? == qn };
    Ok(shape && a_ok && eta.det()? == 1)
}

/// A rational point `n_+(R/q) D(q)` on the horosphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoroPoint {
    pub r: ModMatrix,
    pub dim: usize,
    /// Row-major `(d+n) x (d+n)` real matrix.
    pub matrix: Vec<f64>,
    /// `D_q = q^{-n/d} diag(I_{d-n}, q I_n)` when `n < d`.
    pub dq: Option<Vec<f64>>,
}

pub fn horosphere_point(r: &ModMatrix) -> Result<HoroPoint> {
    let (d, n, q) = (r.rows(), r.cols(), r.modulus());
    if n > d || !is_primitive(r) {
        return Err(Error::NotPrimitive { q });
    }
    let dim = d + n;
    let qf = q as f64;
    let s = qf.powf(-(n as f64) / d as f64);
    let mut g = vec![0.0; dim * dim];
    for i in 0..d {
        g[i * dim + i] = s;
        for j in 0..n {
            g[i * dim + d + j] = r.get(i, j) as f64;
        }
    }
    for j in 0..n {
        g[(d + j) * dim + d + j] = qf;
    }
    let dq = (n < d).then(|| {
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = s * if i < d - n { 1.0 } else { qf };
        }
        m
    });
    Ok(HoroPoint { r: r.clone(), dim, matrix: g, dq })
}

impl HoroPoint {
    pub fn det(&self) -> f64 {
        real::det(&self.matrix, self.dim)
    }
}

/// `eta * n_+(R/q) D(q)` in floating point.
pub fn completed_point(eta: &IntMatrix, p: &HoroPoint) -> Vec<f64> {
    let e: Vec<f64> = eta.entries().iter().map(|&x| x as f64).collect();
    real::mat_mul(&e, &p.matrix, p.dim, p.dim, p.dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[i64], q: u64) -> ModMatrix {
        ModMatrix::new(v.len(), 1, q, v).unwrap()
    }

    #[test]
    fn primitive_examples() {
        assert!(!is_primitive(&col(&[2, 0], 4)));
        assert!(is_primitive(&col(&[2, 1], 4)));
        let r = ModMatrix::new(3, 2, 6, &[1, 0, 0, 1, 3, 2]).unwrap();
        assert!(is_primitive(&r));
        assert_eq!(primitive_count(2, 1, 2), 3);
        assert_eq!(primitive_count(2, 1, 4), 12);
        assert_eq!(primitive_count(3, 2, 2), 42);
        assert_eq!(primitive_count_enum(3, 2, 2, DEFAULT_CAP).unwrap(), 42);
    }

    #[test]
    fn coset_counts() {
        assert_eq!(coset_reps(2, 1, 2).unwrap().len(), 3);
        assert_eq!(coset_reps(2, 1, 3).unwrap().len(), 4);
        let sq = coset_reps(3, 3, 5).unwrap();
        assert_eq!(sq.len(), 1);
        assert_eq!(sq[0].gamma, IntMatrix::identity(3));
        for r in coset_reps(3, 2, 4).unwrap() {
            assert_eq!(r.gamma.det().unwrap(), 1);
            assert_eq!(r.gamma.mul(&r.gamma_inv).unwrap(), IntMatrix::identity(3));
        }
    }

    #[test]
    fn bijection_small() {
        for (d, n, q) in [(2, 1, 2), (3, 2, 3), (3, 2, 2), (3, 1, 4), (2, 2, 6)] {
            let p = param_bij(d, n, q).unwrap();
            let rep = p.verify_exhaustive(DEFAULT_CAP).unwrap();
            assert!(rep.ok(), "{rep:?}");
        }
        let p = param_bij(3, 2, 3).unwrap();
        let gl2 = crate::modring::count_gl(2, 3);
        assert_eq!(p.reps().len() as u128 * gl2, primitive_count(3, 2, 3));
    }

    #[test]
    fn square_identity_parametrization() {
        let p = param_bij(2, 2, 5).unwrap();
        let u = ModMatrix::new(2, 2, 5, &[1, 2, 3, 4]).unwrap();
        assert_eq!(p.forward(0, &u).unwrap(), u);
        assert_eq!(p.inverse(&u).unwrap(), (0, u));
    }

    #[test]
    fn completion_examples() {
        let r = col(&[1, 0], 2);
        let eta = complete_to_sl(&r).unwrap();
        assert!(verify_completion(&eta, &r).unwrap());
        let pt = horosphere_point(&r).unwrap();
        let g = completed_point(&eta, &pt);
        for j in 0..2 {
            assert!(g[j * 3 + 2].abs() < 1e-12);
        }
        assert!((g[8] - 1.0).abs() < 1e-12);
        let u = ModMatrix::new(2, 2, 7, &[2, 1, 1, 1]).unwrap();
        let eta = complete_to_sl(&u).unwrap();
        assert!(verify_completion(&eta, &u).unwrap());
    }

    #[test]
    fn horopoint_examples() {
        assert_eq!(horosphere_point(&col(&[0, 0], 3)), Err(Error::NotPrimitive { q: 3 }));
        let p = horosphere_point(&col(&[1, 1], 3)).unwrap();
        assert!((p.det() - 1.0).abs() < 1e-12);
        let p = horosphere_point(&col(&[0, 0], 1)).unwrap();
        assert!((p.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fastmod_matches() {
        for q in 2..=64u64 {
            let fm = FastMod::new(q);
            for a in (-200_000i64..200_000).step_by(7) {
                assert_eq!(fm.rem(a), a.rem_euclid(q as i64));
            }
        }
    }

    #[test]
    fn square3_small() {
        let s = square3_scan(2, true).unwrap();
        assert_eq!(s.units, crate::modring::count_gl(3, 2));
        assert_eq!(s.relation_failures, 0);
        let s = square3_scan(6, true).unwrap();
        assert_eq!(s.units, crate::modring::count_gl(3, 6));
        assert_eq!(s.relation_checked, s.units);
    }
}
