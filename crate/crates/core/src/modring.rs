//! Exact linear algebra over `Z`, `Z/qZ` and `F_p`.

use crate::arith::{self, inv_mod};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Default cap on the number of candidate matrices any exhaustive routine may visit.
pub const DEFAULT_CAP: u128 = 100_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Modulus {
    q: u64,
    factors: Vec<(u64, u32)>,
}

impl Modulus {
    pub fn new(q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::Precondition("modulus must be positive".into()));
        }
        Ok(Modulus { q, factors: arith::factorize(q) })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn primes(&self) -> Vec<u64> {
        self.factors.iter().map(|f| f.0).collect()
    }

    pub fn radical(&self) -> u64 {
        self.factors.iter().map(|f| f.0).product()
    }

    /// `Some((p, e))` when `q = p^e` with `e >= 1`.
    pub fn prime_power(&self) -> Option<(u64, u32)> {
        match self.factors.as_slice() {
            [(p, e)] => Some((*p, *e)),
            _ => None,
        }
    }
}

/// Matrix over `Z/qZ` stored row-major with canonical residues.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModMatrix {
    rows: usize,
    cols: usize,
    q: u64,
    data: Vec<u64>,
}

impl ModMatrix {
    pub fn new(rows: usize, cols: usize, q: u64, entries: &[i64]) -> Result<Self> {
        if q == 0 || rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::Precondition(format!(
                "bad matrix shape {rows}x{cols} with {} entries mod {q}",
                entries.len()
            )));
        }
        let data = entries.iter().map(|&x| arith::rem(x as i128, q)).collect();
        Ok(ModMatrix { rows, cols, q, data })
    }

    pub fn from_residues(rows: usize, cols: usize, q: u64, data: Vec<u64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|&x| x < q));
        ModMatrix { rows, cols, q, data }
    }

    pub fn from_fn(rows: usize, cols: usize, q: u64, mut f: impl FnMut(usize, usize) -> i128) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(arith::rem(f(i, j), q));
            }
        }
        ModMatrix { rows, cols, q, data }
    }

    pub fn zeros(rows: usize, cols: usize, q: u64) -> Self {
        ModMatrix { rows, cols, q, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize, q: u64) -> Self {
        Self::from_fn(n, n, q, |i, j| (i == j) as i128)
    }

    pub fn scalar(n: usize, q: u64, c: i64) -> Self {
        Self::from_fn(n, n, q, |i, j| if i == j { c as i128 } else { 0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn modulus(&self) -> u64 {
        self.q
    }
    pub fn entries(&self) -> &[u64] {
        &self.data
    }
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: i128) {
        self.data[i * self.cols + j] = arith::rem(v, self.q);
    }
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    fn same_ring(&self, other: &Self) {
        assert_eq!(self.q, other.q, "moduli differ");
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.same_ring(other);
        assert_eq!(self.cols, other.rows, "shape mismatch in product");
        let q = self.q as u128;
        let mut data = vec![0u64; self.rows * other.cols];
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc: u128 = 0;
                for k in 0..self.cols {
                    acc = (acc + self.get(i, k) as u128 * other.get(k, j) as u128) % q;
                }
                data[i * other.cols + j] = acc as u64;
            }
        }
        ModMatrix { rows: self.rows, cols: other.cols, q: self.q, data }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.same_ring(other);
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| ((a as u128 + b as u128) % self.q as u128) as u64)
            .collect();
        ModMatrix { data, ..self.clone() }
    }

    pub fn neg(&self) -> Self {
        let data = self.data.iter().map(|&a| (self.q - a) % self.q).collect();
        ModMatrix { data, ..self.clone() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: i64) -> Self {
        let c = arith::rem(c as i128, self.q);
        let data = self.data.iter().map(|&a| arith::mul_mod(a, c, self.q)).collect();
        ModMatrix { data, ..self.clone() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, self.q, |i, j| self.get(j, i) as i128)
    }

    pub fn trace(&self) -> u64 {
        assert!(self.is_square());
        (0..self.rows).fold(0u64, |acc, i| (acc + self.get(i, i)) % self.q)
    }

    /// Entries reduced modulo a divisor `q2` of `q`.
    pub fn reduce(&self, q2: u64) -> Self {
        assert!(q2 > 0 && self.q.is_multiple_of(q2), "{q2} does not divide {}", self.q);
        let data = self.data.iter().map(|&a| a % q2).collect();
        ModMatrix { rows: self.rows, cols: self.cols, q: q2, data }
    }

    /// Reinterpret the minimal non-negative lift modulo another modulus.
    pub fn relift(&self, q2: u64) -> Self {
        let data = self.data.iter().map(|&a| a % q2).collect();
        ModMatrix { rows: self.rows, cols: self.cols, q: q2, data }
    }

    /// True when `l` divides every entry (as an element of `Z/qZ`, with `l | q`).
    pub fn divisible_by(&self, l: u64) -> bool {
        self.data.iter().all(|&a| a % l == 0)
    }

    /// Divide every entry by `l`, giving a matrix modulo `q / l`. Requires `l | q` and `l | self`.
    pub fn div_exact(&self, l: u64) -> Result<Self> {
        if l == 0 || !self.q.is_multiple_of(l) || !self.divisible_by(l) {
            return Err(Error::Precondition(format!("{l} does not divide the matrix")));
        }
        let q2 = self.q / l;
        let data = self.data.iter().map(|&a| (a / l) % q2).collect();
        Ok(ModMatrix { rows: self.rows, cols: self.cols, q: q2, data })
    }

    pub fn lift(&self) -> IntMatrix {
        IntMatrix::new(self.rows, self.cols, self.data.iter().map(|&x| x as i64).collect())
    }

    /// Determinant modulo `q` through an exact integer determinant of the minimal lift.
    pub fn det(&self) -> u64 {
        assert!(self.is_square());
        let d = self.lift().det().expect("determinant of a lift of a residue matrix overflowed");
        arith::rem(d, self.q)
    }

    pub fn is_unit_det(&self) -> bool {
        self.is_square() && arith::gcd(self.det(), self.q) == 1
    }

    pub fn rank_mod_p(&self, p: u64) -> usize {
        if self.data.len() <= 64 {
            return rank_small(&self.data, self.rows, self.cols, p);
        }
        let ents: Vec<i128> = self.data.iter().map(|&x| x as i128).collect();
        rank_mod_p_raw(&ents, self.rows, self.cols, p)
    }

    /// Row `i` as a vector of residues.
    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Stack `self` on top of `other`.
    pub fn vstack(&self, other: &Self) -> Self {
        self.same_ring(other);
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        ModMatrix { rows: self.rows + other.rows, cols: self.cols, q: self.q, data }
    }

    /// Place `self` to the left of `other`.
    pub fn hstack(&self, other: &Self) -> Self {
        self.same_ring(other);
        assert_eq!(self.rows, other.rows);
        Self::from_fn(self.rows, self.cols + other.cols, self.q, |i, j| {
            if j < self.cols {
                self.get(i, j) as i128
            } else {
                other.get(i, j - self.cols) as i128
            }
        })
    }

    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        Self::from_fn(r1 - r0, c1 - c0, self.q, |i, j| self.get(r0 + i, c0 + j) as i128)
    }
}

impl fmt::Debug for ModMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for ModMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            write!(f, "]")?;
        }
        write!(f, "] mod {}", self.q)
    }
}

/// Parses `[[a,b],[c,d]] mod q`, the format produced by `Display`.
impl FromStr for ModMatrix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (body, q) = s
            .rsplit_once("mod")
            .ok_or_else(|| Error::Parse("missing `mod q` suffix".into()))?;
        let q: u64 = q.trim().parse().map_err(|_| Error::Parse(format!("bad modulus {:?}", q.trim())))?;
        if q == 0 {
            return Err(Error::Parse("modulus must be positive".into()));
        }
        let m = parse_int_rows(body)?;
        let rows = m.len();
        let cols = m[0].len();
        let flat: Vec<i64> = m.into_iter().flatten().collect();
        ModMatrix::new(rows, cols, q, &flat).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Parses a nested list literal `[[1,2],[3,4]]` into rows of equal length.
pub fn parse_int_rows(s: &str) -> Result<Vec<Vec<i64>>> {
    let s = s.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::Parse("matrix literal must be bracketed".into()))?
        .trim();
    let mut rows = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let r = rest
            .strip_prefix('[')
            .ok_or_else(|| Error::Parse("expected `[` at start of row".into()))?;
        let end = r.find(']').ok_or_else(|| Error::Parse("unterminated row".into()))?;
        let row: Vec<i64> = r[..end]
            .split(',')
            .map(|t| t.trim().parse::<i64>().map_err(|_| Error::Parse(format!("bad entry {:?}", t.trim()))))
            .collect::<Result<_>>()?;
        rows.push(row);
        rest = r[end + 1..].trim_start();
        if let Some(t) = rest.strip_prefix(',') {
            rest = t.trim_start();
            if rest.is_empty() {
                return Err(Error::Parse("trailing comma".into()));
            }
        } else if !rest.is_empty() {
            return Err(Error::Parse("expected `,` between rows".into()));
        }
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Parse("ragged rows".into()));
    }
    Ok(rows)
}

/// Exact integer matrix with `i64` storage; products go through `i128` and fail on overflow.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

fn narrow(x: i128) -> Result<i64> {
    i64::try_from(x).map_err(|_| Error::ArithmeticOverflow)
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape mismatch");
        IntMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        IntMatrix::new(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> i64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        IntMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| (i == j) as i64)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn entries(&self) -> &[i64] {
        &self.data
    }
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        assert_eq!(self.cols, other.rows, "shape mismatch in product");
        let mut data = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc: i128 = 0;
                for k in 0..self.cols {
                    acc = acc
                        .checked_add(self.get(i, k) as i128 * other.get(k, j) as i128)
                        .ok_or(Error::ArithmeticOverflow)?;
                }
                data.push(narrow(acc)?);
            }
        }
        Ok(IntMatrix { rows: self.rows, cols: other.cols, data })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn to_mod(&self, q: u64) -> ModMatrix {
        ModMatrix::from_fn(self.rows, self.cols, q, |i, j| self.get(i, j) as i128)
    }

    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        Self::from_fn(r1 - r0, c1 - c0, |i, j| self.get(r0 + i, c0 + j))
    }

    pub fn rank_mod_p(&self, p: u64) -> usize {
        let ents: Vec<i128> = self.data.iter().map(|&x| x as i128).collect();
        rank_mod_p_raw(&ents, self.rows, self.cols, p)
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> Result<i128> {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut a: Vec<i128> = self.data.iter().map(|&x| x as i128).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n {
            if a[k * n + k] == 0 {
                match (k + 1..n).find(|&i| a[i * n + k] != 0) {
                    Some(i) => {
                        for j in 0..n {
                            a.swap(k * n + j, i * n + j);
                        }
                        sign = -sign;
                    }
                    None => return Ok(0),
                }
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                for j in k + 1..n {
                    let t = pivot
                        .checked_mul(a[i * n + j])
                        .and_then(|x| x.checked_sub(a[i * n + k].checked_mul(a[k * n + j])?))
                        .ok_or(Error::ArithmeticOverflow)?;
                    a[i * n + j] = t / prev;
                }
                a[i * n + k] = 0;
            }
            prev = pivot;
        }
        if n == 0 {
            return Ok(1);
        }
        Ok(sign * a[n * n - 1])
    }

    /// Exact inverse of a matrix with determinant `+-1`, by cofactors.
    pub fn inverse_unimodular(&self) -> Result<IntMatrix> {
        let n = self.rows;
        assert_eq!(n, self.cols);
        let det = self.det()?;
        if det.abs() != 1 {
            return Err(Error::Precondition("matrix is not unimodular".into()));
        }
        if n == 1 {
            return Ok(IntMatrix::new(1, 1, vec![det as i64]));
        }
        let mut out = IntMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let minor = IntMatrix::from_fn(n - 1, n - 1, |r, c| {
                    self.get(if r < j { r } else { r + 1 }, if c < i { c } else { c + 1 })
                });
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                out.set(i, j, narrow(sign * minor.det()? * det)?);
            }
        }
        Ok(out)
    }

    pub fn neg(&self) -> IntMatrix {
        IntMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| -x).collect() }
    }

    pub fn add(&self, other: &IntMatrix) -> Result<IntMatrix> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.checked_add(b).ok_or(Error::ArithmeticOverflow))
            .collect::<Result<_>>()?;
        Ok(IntMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, c: i64) -> Result<IntMatrix> {
        let data = self
            .data
            .iter()
            .map(|&a| a.checked_mul(c).ok_or(Error::ArithmeticOverflow))
            .collect::<Result<_>>()?;
        Ok(IntMatrix { rows: self.rows, cols: self.cols, data })
    }

    /// Block matrix `[[a, b], [c, d]]`.
    pub fn blocks(a: &IntMatrix, b: &IntMatrix, c: &IntMatrix, d: &IntMatrix) -> IntMatrix {
        assert_eq!(a.rows, b.rows);
        assert_eq!(c.rows, d.rows);
        assert_eq!(a.cols, c.cols);
        assert_eq!(b.cols, d.cols);
        IntMatrix::from_fn(a.rows + c.rows, a.cols + b.cols, |i, j| match (i < a.rows, j < a.cols) {
            (true, true) => a.get(i, j),
            (true, false) => b.get(i, j - a.cols),
            (false, true) => c.get(i - a.rows, j),
            (false, false) => d.get(i - a.rows, j - a.cols),
        })
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row[dst] += c * row[src]
    fn add_row(&mut self, dst: usize, src: usize, c: i128) -> Result<()> {
        for j in 0..self.cols {
            let v = self.get(dst, j) as i128 + c * self.get(src, j) as i128;
            self.data[dst * self.cols + j] = narrow(v)?;
        }
        Ok(())
    }

    /// col[dst] += c * col[src]
    fn add_col(&mut self, dst: usize, src: usize, c: i128) -> Result<()> {
        for i in 0..self.rows {
            let v = self.get(i, dst) as i128 + c * self.get(i, src) as i128;
            self.data[i * self.cols + dst] = narrow(v)?;
        }
        Ok(())
    }

    fn negate_row(&mut self, r: usize) {
        for j in 0..self.cols {
            self.data[r * self.cols + j] = -self.data[r * self.cols + j];
        }
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

/// Rank over `F_p` of a matrix with at most 64 non-negative entries, without allocation.
pub fn rank_small(entries: &[u64], rows: usize, cols: usize, p: u64) -> usize {
    debug_assert!(entries.len() <= 64 && entries.len() == rows * cols);
    let mut a = [0u64; 64];
    for (x, &e) in a.iter_mut().zip(entries) {
        *x = e % p;
    }
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows).find(|&r| a[r * cols + c] != 0) else { continue };
        if piv != rank {
            for j in 0..cols {
                a.swap(rank * cols + j, piv * cols + j);
            }
        }
        let inv = inv_mod(a[rank * cols + c], p).expect("nonzero residue mod a prime");
        for r in rank + 1..rows {
            let f = a[r * cols + c];
            if f != 0 {
                let f = p - arith::mul_mod(f, inv, p);
                for j in c..cols {
                    let t = if p < 1 << 31 { f * a[rank * cols + j] % p } else { arith::mul_mod(f, a[rank * cols + j], p) };
                    a[r * cols + j] = (a[r * cols + j] + t) % p;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Row rank over `F_p` of an integer matrix given row-major.
pub fn rank_mod_p_raw(entries: &[i128], rows: usize, cols: usize, p: u64) -> usize {
    let mut a: Vec<u64> = entries.iter().map(|&x| arith::rem(x, p)).collect();
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows).find(|&r| a[r * cols + c] != 0) else { continue };
        for j in 0..cols {
            a.swap(rank * cols + j, piv * cols + j);
        }
        let inv = inv_mod(a[rank * cols + c], p).expect("nonzero residue mod a prime");
        for j in 0..cols {
            a[rank * cols + j] = arith::mul_mod(a[rank * cols + j], inv, p);
        }
        for r in 0..rows {
            if r != rank && a[r * cols + c] != 0 {
                let f = a[r * cols + c];
                for j in 0..cols {
                    let s = arith::mul_mod(f, a[rank * cols + j], p);
                    a[r * cols + j] = (a[r * cols + j] + p - s) % p;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Inverse over `Z/qZ` for any `q`, by Gauss-Jordan elimination with Euclidean row steps.
pub fn mat_inv_mod(m: &ModMatrix) -> Result<ModMatrix> {
    if !m.is_square() {
        return Err(Error::Precondition("inverse of a non-square matrix".into()));
    }
    let n = m.rows();
    let q = m.modulus();
    if q == 1 {
        return Ok(ModMatrix::zeros(n, n, 1));
    }
    let qi = q as i128;
    let w = 2 * n;
    let mut a = vec![0i128; n * w];
    for i in 0..n {
        for j in 0..n {
            a[i * w + j] = m.get(i, j) as i128;
        }
        a[i * w + n + i] = 1;
    }
    for c in 0..n {
        // Euclid on column c over rows c..n until one row holds the gcd and the rest are zero.
        loop {
            let mut best: Option<usize> = None;
            for r in c..n {
                let v = a[r * w + c];
                if v != 0 && best.is_none_or(|b| v < a[b * w + c]) {
                    best = Some(r);
                }
            }
            let Some(b) = best else { return Err(Error::NotInvertible { q }) };
            if b != c {
                for j in 0..w {
                    a.swap(b * w + j, c * w + j);
                }
            }
            let pv = a[c * w + c];
            let mut done = true;
            for r in c + 1..n {
                let v = a[r * w + c];
                if v != 0 {
                    let f = v / pv;
                    for j in 0..w {
                        a[r * w + j] = (a[r * w + j] - f * a[c * w + j]).rem_euclid(qi);
                    }
                    if a[r * w + c] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        let inv = inv_mod(a[c * w + c] as u64, q).ok_or(Error::NotInvertible { q })? as i128;
        for j in 0..w {
            a[c * w + j] = (a[c * w + j] * inv).rem_euclid(qi);
        }
        for r in 0..n {
            if r != c && a[r * w + c] != 0 {
                let f = a[r * w + c];
                for j in 0..w {
                    a[r * w + j] = (a[r * w + j] - f * a[c * w + j]).rem_euclid(qi);
                }
            }
        }
    }
    Ok(ModMatrix::from_fn(n, n, q, |i, j| a[i * w + n + j]))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnfResult {
    pub u: IntMatrix,
    pub v: IntMatrix,
    pub d: IntMatrix,
}

impl SnfResult {
    pub fn diagonal(&self) -> Vec<i64> {
        (0..self.d.rows().min(self.d.cols())).map(|i| self.d.get(i, i)).collect()
    }
}

/// Smith normal form `U A V = D` with non-negative diagonal `d_1 | d_2 | ...`.
pub fn smith_normal_form(a: &IntMatrix) -> Result<SnfResult> {
    let (r, c) = (a.rows(), a.cols());
    let mut d = a.clone();
    let mut u = IntMatrix::identity(r);
    let mut v = IntMatrix::identity(c);
    for t in 0..r.min(c) {
        loop {
            let mut best: Option<(usize, usize)> = None;
            for i in t..r {
                for j in t..c {
                    let x = d.get(i, j).unsigned_abs();
                    if x != 0 && best.is_none_or(|(bi, bj)| x < d.get(bi, bj).unsigned_abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((bi, bj)) = best else { return finish(u, v, d) };
            if bi != t {
                d.swap_rows(bi, t);
                u.swap_rows(bi, t);
            }
            if bj != t {
                d.swap_cols(bj, t);
                v.swap_cols(bj, t);
            }
            let pv = d.get(t, t) as i128;
            let mut clean = true;
            for i in t + 1..r {
                let f = d.get(i, t) as i128 / pv;
                if f != 0 {
                    d.add_row(i, t, -f)?;
                    u.add_row(i, t, -f)?;
                }
                clean &= d.get(i, t) == 0;
            }
            for j in t + 1..c {
                let f = d.get(t, j) as i128 / pv;
                if f != 0 {
                    d.add_col(j, t, -f)?;
                    v.add_col(j, t, -f)?;
                }
                clean &= d.get(t, j) == 0;
            }
            if !clean {
                continue;
            }
            let bad = (t + 1..r).find(|&i| (t + 1..c).any(|j| d.get(i, j) as i128 % pv != 0));
            match bad {
                Some(i) => {
                    d.add_row(t, i, 1)?;
                    u.add_row(t, i, 1)?;
                }
                None => break,
            }
        }
        if d.get(t, t) < 0 {
            d.negate_row(t);
            u.negate_row(t);
        }
    }
    finish(u, v, d)
}

fn finish(u: IntMatrix, v: IntMatrix, d: IntMatrix) -> Result<SnfResult> {
    Ok(SnfResult { u, v, d })
}

/// Number of candidate matrices `q^(n*n)`, saturating.
pub fn candidate_count(rows: usize, cols: usize, q: u64) -> u128 {
    (q as u128).checked_pow((rows * cols) as u32).unwrap_or(u128::MAX)
}

/// Lexicographic stream of `GL_n(Z/qZ)`. Candidates are indexed row-major with the first entry most
/// significant; a stream covers a contiguous index range and can be split for parallel work.
#[derive(Clone, Debug)]
pub struct GlEnumerator {
    n: usize,
    q: u64,
    next: u64,
    end: u64,
}

pub fn enumerate_gl(n: usize, q: u64, cap: u128) -> Result<GlEnumerator> {
    let count = candidate_count(n, n, q);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    Ok(GlEnumerator { n, q, next: 0, end: count as u64 })
}

/// Decode candidate index `idx` into row-major residues.
pub fn decode_index(mut idx: u64, len: usize, q: u64, out: &mut [u64]) {
    for k in (0..len).rev() {
        out[k] = idx % q;
        idx /= q;
    }
}

impl GlEnumerator {
    pub fn candidates(&self) -> u64 {
        self.end - self.next
    }

    /// Split the remaining range into `k` contiguous pieces in order.
    pub fn split(&self, k: usize) -> Vec<GlEnumerator> {
        let total = self.end - self.next;
        let k = k.max(1) as u64;
        (0..k)
            .map(|i| GlEnumerator {
                n: self.n,
                q: self.q,
                next: self.next + total * i / k,
                end: self.next + total * (i + 1) / k,
            })
            .collect()
    }
}

impl Iterator for GlEnumerator {
    type Item = ModMatrix;
    fn next(&mut self) -> Option<ModMatrix> {
        let len = self.n * self.n;
        let mut buf = vec![0u64; len];
        while self.next < self.end {
            decode_index(self.next, len, self.q, &mut buf);
            self.next += 1;
            let m = ModMatrix::from_residues(self.n, self.n, self.q, buf.clone());
            if m.is_unit_det() {
                return Some(m);
            }
        }
        None
    }
}

/// `#GL_n(Z/qZ) = q^{n^2} prod_{p | q} prod_{j=1..n} (1 - p^{-j})`, computed exactly per prime power.
pub fn count_gl(n: usize, q: u64) -> u128 {
    let mut total: u128 = 1;
    for (p, e) in arith::factorize(q) {
        let p = p as u128;
        let pn = p.pow(n as u32);
        let mut gl_p: u128 = 1;
        for i in 0..n {
            gl_p *= pn - p.pow(i as u32);
        }
        total *= gl_p * p.pow((e as usize - 1) as u32 * (n * n) as u32);
    }
    total
}

/// Exact lift of `M` with `det M = 1 mod q` to `SL_n(Z)`.
///
/// Row and column transvections reduce `M` to a diagonal matrix of units; the transvections lift
/// verbatim, and the diagonal is lifted as a product of integer blocks
/// `[[u, q], [t + u s, v + s q]]` of determinant one on neighbouring coordinates.
pub fn lift_sl(m: &ModMatrix) -> Result<IntMatrix> {
    if !m.is_square() {
        return Err(Error::Precondition("lift_sl needs a square matrix".into()));
    }
    let n = m.rows();
    let q = m.modulus();
    if m.det() != 1 % q {
        return Err(Error::NotSpecialLinear { q });
    }
    if q == 1 {
        return Ok(IntMatrix::identity(n));
    }
    let qi = q as i128;
    // Work with L * M * R = diag(units) mod q, where L and R are products of transvections and
    // their inverses are tracked as exact integer matrices.
    let mut a: Vec<i128> = m.entries().iter().map(|&x| x as i128).collect();
    let mut l_inv = IntMatrix::identity(n);
    let mut r_inv = IntMatrix::identity(n);
    let at = |a: &Vec<i128>, i: usize, j: usize| a[i * n + j];
    for t in 0..n {
        // Euclid on column t using transvections only. The trailing block is invertible, so the
        // integer gcd that lands in the pivot is a unit mod q.
        for s in t + 1..n {
            loop {
                let y = at(&a, s, t);
                if y == 0 {
                    break;
                }
                let c = -(at(&a, t, t) / y);
                row_op(&mut a, n, qi, t, s, c, &mut l_inv)?;
                let x = at(&a, t, t);
                if x == 0 {
                    row_op(&mut a, n, qi, t, s, 1, &mut l_inv)?;
                    row_op(&mut a, n, qi, s, t, -1, &mut l_inv)?;
                    break;
                }
                let c = -(at(&a, s, t) / x);
                row_op(&mut a, n, qi, s, t, c, &mut l_inv)?;
            }
        }
        if arith::gcd(at(&a, t, t) as u64, q) != 1 {
            return Err(Error::NotInvertible { q });
        }
        let inv = inv_mod(at(&a, t, t) as u64, q).unwrap() as i128;
        for i in t + 1..n {
            let c = (-at(&a, i, t) * inv).rem_euclid(qi);
            if c != 0 {
                row_op(&mut a, n, qi, i, t, c, &mut l_inv)?;
            }
        }
        for j in t + 1..n {
            let c = (-at(&a, t, j) * inv).rem_euclid(qi);
            if c != 0 {
                for i in 0..n {
                    a[i * n + j] = (a[i * n + j] + c * a[i * n + t]).rem_euclid(qi);
                }
                // R gains E_{tj}(c) on the right, so R^{-1} gains E_{tj}(-c) on the left.
                r_inv.add_row(t, j, -c)?;
            }
        }
    }
    let units: Vec<i128> = (0..n).map(|i| at(&a, i, i)).collect();
    let diag = lift_unit_diagonal(&units, q)?;
    // M = L^{-1} * diag * R^{-1}
    l_inv.mul(&diag)?.mul(&r_inv)
}

/// `row[dst] += c row[src]` on the working matrix, recording the inverse transvection.
fn row_op(a: &mut [i128], n: usize, qi: i128, dst: usize, src: usize, c: i128, l_inv: &mut IntMatrix) -> Result<()> {
    for j in 0..n {
        a[dst * n + j] = (a[dst * n + j] + c * a[src * n + j]).rem_euclid(qi);
    }
    // L gains E_{dst,src}(c) on the left, so L^{-1} gains E_{dst,src}(-c) on the right.
    l_inv.add_col(src, dst, -c)
}

/// Integer matrix of determinant 1 congruent to `diag(units)` modulo `q`, given `prod units = 1`.
fn lift_unit_diagonal(units: &[i128], q: u64) -> Result<IntMatrix> {
    let n = units.len();
    let qi = q as i128;
    let mut out = IntMatrix::identity(n);
    if n == 1 {
        return Ok(out);
    }
    // Block i is congruent to diag(.., w_i, w_i^{-1}, ..) at (i, i+1), where w_i = u_0 ... u_i;
    // the product of the blocks is congruent to diag(u_0, ..., u_{n-1}).
    let mut w: i128 = 1;
    for (i, &u) in units.iter().enumerate().take(n - 1) {
        w = (w * u).rem_euclid(qi);
        if w == 1 {
            continue;
        }
        let winv = inv_mod(w as u64, q).ok_or(Error::NotInvertible { q })? as i128;
        let block = sl2_block(w, winv, qi)?;
        let mut e = IntMatrix::identity(n);
        e.set(i, i, block[0]);
        e.set(i, i + 1, block[1]);
        e.set(i + 1, i, block[2]);
        e.set(i + 1, i + 1, block[3]);
        out = out.mul(&e)?;
    }
    Ok(out)
}

/// `[[u, q], [t + u s, v + s q]]` with `t = (u v - 1) / q`, `s = -t v mod q`, which has
/// determinant `u v - q t = 1` and is congruent to `diag(u, v)` modulo `q`.
fn sl2_block(u: i128, v: i128, q: i128) -> Result<[i64; 4]> {
    let t = (u * v - 1) / q;
    debug_assert_eq!((u * v - 1) % q, 0);
    let s = (-t * v).rem_euclid(q);
    let c = t + u * s;
    let d = v + s * q;
    debug_assert_eq!(u * d - q * c, 1);
    debug_assert_eq!(c.rem_euclid(q), 0);
    Ok([narrow(u)?, narrow(q)?, narrow(c)?, narrow(d)?])
}

/// All of `GL_n(Z/qZ)` with inverses, in lexicographic order, stored flat.
#[derive(Clone, Debug)]
pub struct GlTable {
    pub n: usize,
    pub q: u64,
    pub mats: Vec<u32>,
    pub invs: Vec<u32>,
}

impl GlTable {
    pub fn build(n: usize, q: u64, cap: u128) -> Result<Self> {
        use rayon::prelude::*;
        let en = enumerate_gl(n, q, cap)?;
        let blocks = en.split(64);
        let parts: Vec<(Vec<u32>, Vec<u32>)> = blocks
            .into_par_iter()
            .map(|b| {
                let mut m = Vec::new();
                let mut iv = Vec::new();
                for x in b {
                    let xi = mat_inv_mod(&x).expect("unit determinant");
                    m.extend(x.entries().iter().map(|&v| v as u32));
                    iv.extend(xi.entries().iter().map(|&v| v as u32));
                }
                (m, iv)
            })
            .collect();
        let mut mats = Vec::new();
        let mut invs = Vec::new();
        for (m, iv) in parts {
            mats.extend(m);
            invs.extend(iv);
        }
        Ok(GlTable { n, q, mats, invs })
    }

    pub fn len(&self) -> usize {
        self.mats.len() / (self.n * self.n).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mat(&self, i: usize) -> &[u32] {
        let s = self.n * self.n;
        &self.mats[i * s..(i + 1) * s]
    }

    pub fn inv(&self, i: usize) -> &[u32] {
        let s = self.n * self.n;
        &self.invs[i * s..(i + 1) * s]
    }
}

/// Shared, lazily built GL tables keyed by `(n, q)`.
pub fn gl_table(n: usize, q: u64) -> Result<std::sync::Arc<GlTable>> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    type Cache = Mutex<HashMap<(usize, u64), Arc<GlTable>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&(n, q)) {
        return Ok(t.clone());
    }
    let t = Arc::new(GlTable::build(n, q, DEFAULT_CAP)?);
    let mut guard = cache.lock().unwrap();
    Ok(guard.entry((n, q)).or_insert(t).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm(rows: &[Vec<i64>], q: u64) -> ModMatrix {
        let r = rows.len();
        let c = rows[0].len();
        ModMatrix::new(r, c, q, &rows.concat()).unwrap()
    }

    #[test]
    fn inverse_examples() {
        let m = mm(&[vec![1, 1], vec![0, 1]], 7);
        assert_eq!(mat_inv_mod(&m).unwrap(), mm(&[vec![1, 6], vec![0, 1]], 7));
        let i = ModMatrix::identity(3, 10);
        assert_eq!(mat_inv_mod(&i).unwrap(), i);
        let bad = mm(&[vec![2, 0], vec![0, 2]], 4);
        assert_eq!(mat_inv_mod(&bad), Err(Error::NotInvertible { q: 4 }));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(ModMatrix::zeros(3, 2, 5).rank_mod_p(5), 0);
        assert_eq!(ModMatrix::identity(4, 7).rank_mod_p(7), 4);
        assert_eq!(mm(&[vec![1, 2], vec![2, 4]], 5).rank_mod_p(5), 1);
    }

    #[test]
    fn snf_examples() {
        let s = smith_normal_form(&IntMatrix::from_rows(&[vec![2, 0], vec![0, 3]])).unwrap();
        assert_eq!(s.diagonal(), vec![1, 6]);
        let s = smith_normal_form(&IntMatrix::identity(3)).unwrap();
        assert_eq!(s.diagonal(), vec![1, 1, 1]);
        let s = smith_normal_form(&IntMatrix::from_rows(&[vec![0]])).unwrap();
        assert_eq!(s.diagonal(), vec![0]);
    }

    #[test]
    fn gl_examples() {
        let units: Vec<u64> = enumerate_gl(1, 5, DEFAULT_CAP).unwrap().map(|m| m.get(0, 0)).collect();
        assert_eq!(units, vec![1, 2, 3, 4]);
        assert_eq!(enumerate_gl(2, 2, DEFAULT_CAP).unwrap().count(), 6);
        assert_eq!(enumerate_gl(2, 4, DEFAULT_CAP).unwrap().count(), 96);
        assert_eq!(count_gl(1, 12), 4);
        assert_eq!(count_gl(2, 2), 6);
        assert_eq!(count_gl(2, 3), 48);
        assert!(matches!(enumerate_gl(3, 10, DEFAULT_CAP), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn lift_examples() {
        let m = mm(&[vec![0, 4], vec![1, 0]], 5);
        let l = lift_sl(&m).unwrap();
        assert_eq!(l.det().unwrap(), 1);
        assert_eq!(l.to_mod(5), m);
        let i = ModMatrix::identity(3, 9);
        assert_eq!(lift_sl(&i).unwrap(), IntMatrix::identity(3));
        let m = mm(&[vec![2, 0], vec![0, 3]], 5);
        let l = lift_sl(&m).unwrap();
        assert_eq!(l.det().unwrap(), 1);
        assert_eq!(l.to_mod(5), m);
        assert_eq!(lift_sl(&mm(&[vec![2, 0], vec![0, 2]], 5)), Err(Error::NotSpecialLinear { q: 5 }));
    }

    #[test]
    fn parse_roundtrip() {
        let m = mm(&[vec![1, 2, 3], vec![4, 5, 6]], 7);
        let s = m.to_string();
        assert_eq!(s.parse::<ModMatrix>().unwrap(), m);
        assert!("[[1,2],[3]] mod 5".parse::<ModMatrix>().is_err());
        assert!("[[1,2]] mod 0".parse::<ModMatrix>().is_err());
        assert!("[] mod 3".parse::<ModMatrix>().is_err());
    }
}
