//! Geometry of numbers for unimodular lattices: reduction, successive minima, point counting, the
//! majorant `Phi` with a certified tail, Haar sampling at `d = 2` and a Monte-Carlo Siegel check.

use crate::error::{pre, Error, Result};
use crate::real;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

pub const MAX_DIM: usize = 6;
const UNIMODULAR_TOL: f64 = 1e-9;

/// Row basis of a covolume-one lattice in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeBasis {
    d: usize,
    rows: Vec<f64>,
}

impl LatticeBasis {
    /// Basis with `| |det| - 1 | <= 1e-9`.
    pub fn new(d: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != d * d || d == 0 {
            return Err(pre("basis must be d x d"));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(pre("basis entries must be finite"));
        }
        if (real::det(&rows, d).abs() - 1.0).abs() > UNIMODULAR_TOL {
            return Err(pre("basis must have covolume 1"));
        }
        Ok(LatticeBasis { d, rows })
    }

    /// Rescale a non-degenerate basis to covolume one.
    pub fn normalized(d: usize, mut rows: Vec<f64>) -> Result<Self> {
        if rows.len() != d * d || d == 0 {
            return Err(pre("basis must be d x d"));
        }
        let det = real::det(&rows, d).abs();
        if !(det > 0.0 && det.is_finite()) {
            return Err(pre("rows must be linearly independent"));
        }
        let s = det.powf(-1.0 / d as f64);
        rows.iter_mut().for_each(|x| *x *= s);
        LatticeBasis::new(d, rows)
    }

    pub fn standard(d: usize) -> Self {
        let rows = (0..d * d).map(|k| (k / d == k % d) as u8 as f64).collect();
        LatticeBasis { d, rows }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    /// Lattice vector `c B`.
    pub fn vector(&self, c: &[i64]) -> Vec<f64> {
        let d = self.d;
        (0..d).map(|j| (0..d).map(|i| c[i] as f64 * self.rows[i * d + j]).sum()).collect()
    }

    /// `B k` for a `d x d` orthogonal `k`, i.e. the same lattice rotated.
    pub fn transformed(&self, k: &[f64]) -> Result<Self> {
        LatticeBasis::new(self.d, real::mat_mul(&self.rows, k, self.d, self.d, self.d))
    }
}

/// Translate `L + shift` of a lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub basis: LatticeBasis,
    pub shift: Vec<f64>,
}

/// Union of half-open axis-aligned boxes `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub boxes: Vec<(Vec<f64>, Vec<f64>)>,
    pub disjoint: bool,
}

impl BoxRegion {
    pub fn new(boxes: Vec<(Vec<f64>, Vec<f64>)>, disjoint: bool) -> Result<Self> {
        let d = boxes.first().map_or(0, |b| b.0.len());
        for (lo, hi) in &boxes {
            if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h)
            {
                return Err(pre("boxes need matching dimensions and finite lo <= hi"));
            }
        }
        if disjoint {
            for i in 0..boxes.len() {
                for j in 0..i {
                    let (a, b) = (&boxes[i], &boxes[j]);
                    if (0..d).all(|k| a.0[k].max(b.0[k]) < a.1[k].min(b.1[k])) {
                        return Err(pre("boxes flagged disjoint overlap"));
                    }
                }
            }
        }
        Ok(BoxRegion { boxes, disjoint })
    }

    pub fn single(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        BoxRegion::new(vec![(lo, hi)], true)
    }

    pub fn dim(&self) -> usize {
        self.boxes.first().map_or(0, |b| b.0.len())
    }

    /// Sum of box volumes (the region volume when disjoint).
    pub fn volume(&self) -> f64 {
        self.boxes.iter().map(|(l, h)| l.iter().zip(h).map(|(a, b)| b - a).product::<f64>()).sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|(l, h)| x.iter().zip(l.iter().zip(h)).all(|(v, (a, b))| *a <= *v && *v < *b))
    }
}

/// Lagrange-Gauss reduction of a planar basis.
fn gauss_reduce(rows: &mut [f64]) {
    let (mut u, mut v) = ([rows[0], rows[1]], [rows[2], rows[3]]);
    let n2 = |a: [f64; 2]| a[0] * a[0] + a[1] * a[1];
    if n2(u) > n2(v) {
        std::mem::swap(&mut u, &mut v);
    }
    for _ in 0..10_000 {
        let m = ((u[0] * v[0] + u[1] * v[1]) / n2(u)).round();
        v = [v[0] - m * u[0], v[1] - m * u[1]];
        if n2(v) >= n2(u) {
            break;
        }
        std::mem::swap(&mut u, &mut v);
    }
    rows.copy_from_slice(&[u[0], u[1], v[0], v[1]]);
}

fn gram_schmidt(rows: &[f64], d: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut bstar = rows.to_vec();
    let mut mu = vec![0.0; d * d];
    let mut norms = vec![0.0; d];
    for i in 0..d {
        for j in 0..i {
            let m = real::dot(&rows[i * d..(i + 1) * d], &bstar[j * d..(j + 1) * d]) / norms[j];
            mu[i * d + j] = m;
            for k in 0..d {
                bstar[i * d + k] -= m * bstar[j * d + k];
            }
        }
        norms[i] = real::dot(&bstar[i * d..(i + 1) * d], &bstar[i * d..(i + 1) * d]);
    }
    (bstar, mu, norms)
}

/// LLL reduction with parameter `delta`, in place on the rows.
pub fn lll_reduce(rows: &mut [f64], d: usize, delta: f64) {
    let mut k = 1;
    let mut guard = 0usize;
    while k < d && guard < 1_000_000 {
        guard += 1;
        for j in (0..k).rev() {
            let (_, mu, _) = gram_schmidt(rows, d);
            let m = mu[k * d + j].round();
            if m != 0.0 {
                for c in 0..d {
                    rows[k * d + c] -= m * rows[j * d + c];
                }
            }
        }
        let (_, mu, norms) = gram_schmidt(rows, d);
        if norms[k] >= (delta - mu[k * d + k - 1].powi(2)) * norms[k - 1] {
            k += 1;
        } else {
            for c in 0..d {
                rows.swap(k * d + c, (k - 1) * d + c);
            }
            k = (k - 1).max(1);
        }
    }
}

/// Reduced basis of the same lattice: Lagrange-Gauss for `d = 2`, LLL with `delta = 0.99` above.
pub fn reduce(l: &LatticeBasis) -> LatticeBasis {
    let mut rows = l.rows.clone();
    reduce_rows(&mut rows, l.d);
    LatticeBasis { d: l.d, rows }
}

/// In-place reduction of `d` rows. Only integer row operations are applied, so rows with integral
/// entries below `2^53` stay exactly integral.
pub fn reduce_rows(rows: &mut [f64], d: usize) {
    match d {
        0 | 1 => {}
        2 => gauss_reduce(rows),
        d => lll_reduce(rows, d, 0.99),
    }
}

/// Visit every `c in Z^d` with `||c B - target||^2 <= r2`, passing `c` and the squared distance.
pub fn enumerate_near(
    basis: &LatticeBasis,
    target: &[f64],
    r2: f64,
    cap: u64,
    visit: &mut dyn FnMut(&[i64], f64),
) -> Result<u64> {
    let d = basis.d;
    let (bstar, mu, norms) = gram_schmidt(&basis.rows, d);
    let tau: Vec<f64> = (0..d).map(|i| real::dot(target, &bstar[i * d..(i + 1) * d]) / norms[i]).collect();
    let mut c = vec![0i64; d];
    let mut count = 0u64;
    #[allow(clippy::too_many_arguments)]
    fn rec(
        i: usize,
        d: usize,
        partial: f64,
        r2: f64,
        c: &mut Vec<i64>,
        mu: &[f64],
        norms: &[f64],
        tau: &[f64],
        cap: u64,
        count: &mut u64,
        visit: &mut dyn FnMut(&[i64], f64),
    ) -> Result<()> {
        let center = tau[i] - (i + 1..d).map(|j| c[j] as f64 * mu[j * d + i]).sum::<f64>();
        let room = (r2 - partial).max(0.0) / norms[i];
        let half = room.sqrt();
        let lo = (center - half - 1e-9).ceil() as i64;
        let hi = (center + half + 1e-9).floor() as i64;
        for x in lo..=hi {
            let y = x as f64 - center;
            let p = partial + y * y * norms[i];
            if p > r2 * (1.0 + 1e-12) + 1e-300 {
                continue;
            }
            c[i] = x;
            if i == 0 {
                *count += 1;
                if *count > cap {
                    return Err(Error::EnumerationTooLarge { count: *count as u128, cap: cap as u128 });
                }
                visit(c, p);
            } else {
                rec(i - 1, d, p, r2, c, mu, norms, tau, cap, count, visit)?;
            }
        }
        Ok(())
    }
    rec(d - 1, d, 0.0, r2, &mut c, &mu, &norms, &tau, cap, &mut count, visit)?;
    Ok(count)
}

pub const POINT_CAP: u64 = 200_000_000;

/// Rank of integer vectors by fraction-free elimination.
pub fn integer_rank(vectors: &[Vec<i64>]) -> usize {
    let mut rows: Vec<Vec<i128>> = vectors.iter().map(|v| v.iter().map(|&x| x as i128).collect()).collect();
    let cols = rows.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else { continue };
        rows.swap(rank, p);
        for r in rank + 1..rows.len() {
            if rows[r][col] != 0 {
                let (a, b) = (rows[rank][col], rows[r][col]);
                let g = crate::arith::gcd_i(a, b);
                let (fa, fb) = (a / g, b / g);
                let pivot = rows[rank].clone();
                for (x, &y) in rows[r].iter_mut().zip(&pivot) {
                    *x = *x * fa - y * fb;
                }
                let cg = rows[r].iter().fold(0i128, |acc, &x| crate::arith::gcd_i(acc, x));
                if cg > 1 {
                    rows[r].iter_mut().for_each(|x| *x /= cg);
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Successive minima `lambda_1 <= ... <= lambda_d` for the Euclidean ball, `d <= 6`.
///
/// After reduction every lattice vector within `max_i |b_i|` is listed; the minima are the lengths
/// picked greedily in increasing order whenever the integer coefficient rank grows.
pub fn successive_minima(l: &LatticeBasis) -> Result<Vec<f64>> {
    let d = l.d;
    if d > MAX_DIM {
        return Err(Error::DimensionTooLarge(d));
    }
    let red = reduce(l);
    let radius2 = (0..d).map(|i| real::dot(red.row(i), red.row(i))).fold(0.0, f64::max);
    let mut found: Vec<(f64, Vec<i64>)> = Vec::new();
    enumerate_near(&red, &vec![0.0; d], radius2, POINT_CAP, &mut |c, n2| {
        if c.iter().any(|&x| x != 0) {
            found.push((n2, c.to_vec()));
        }
    })?;
    Ok(greedy_minima(found, d))
}

/// Successive minima without reduction: every coefficient vector in the box
/// `|c_i| <= max_j |b_j| * |B^{-1}|_F` of the given basis is listed, which covers the ball of radius
/// `max_j |b_j| >= lambda_d`.
pub fn successive_minima_bruteforce(l: &LatticeBasis, cap: u64) -> Result<Vec<f64>> {
    let d = l.d;
    let inv = real::inverse(&l.rows, d).ok_or_else(|| pre("basis is singular"))?;
    let radius = (0..d).map(|i| real::norm2(l.row(i))).fold(0.0, f64::max);
    let k = (radius * inv.iter().map(|x| x * x).sum::<f64>().sqrt()).ceil() as i64;
    let side = (2 * k + 1) as u64;
    let total = side.checked_pow(d as u32).filter(|&t| t <= cap).ok_or(Error::EnumerationTooLarge {
        count: (side as u128).saturating_pow(d as u32),
        cap: cap as u128,
    })?;
    let mut found = Vec::new();
    let mut c = vec![0i64; d];
    for idx in 0..total {
        let mut t = idx;
        for x in c.iter_mut() {
            *x = (t % side) as i64 - k;
            t /= side;
        }
        if c.iter().all(|&x| x == 0) {
            continue;
        }
        let n2 = real::norm2(&l.vector(&c)).powi(2);
        if n2 <= radius * radius * (1.0 + 1e-12) {
            found.push((n2, c.clone()));
        }
    }
    Ok(greedy_minima(found, d))
}

/// Greedy selection of independent vectors by increasing squared length.
pub fn greedy_minima(mut found: Vec<(f64, Vec<i64>)>, d: usize) -> Vec<f64> {
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut chosen: Vec<Vec<i64>> = Vec::new();
    let mut minima = Vec::new();
    for (n2, c) in found {
        chosen.push(c);
        if integer_rank(&chosen) == chosen.len() {
            minima.push(n2.sqrt());
            if minima.len() == d {
                break;
            }
        } else {
            chosen.pop();
        }
    }
    minima
}

/// Counting region for [`count_points`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Closed Euclidean ball around the origin.
    Ball(f64),
    Boxes(BoxRegion),
}

/// Exact number of points of `L + shift` in the region.
pub fn count_points(basis: &LatticeBasis, shift: Option<&[f64]>, region: &Region) -> Result<u64> {
    let d = basis.d;
    let zero = vec![0.0; d];
    let shift = shift.unwrap_or(&zero);
    if shift.len() != d {
        return Err(pre("shift has the wrong dimension"));
    }
    let red = reduce(basis);
    match region {
        Region::Ball(r) => {
            if r.is_nan() || *r < 0.0 {
                return Err(pre("radius must be non-negative"));
            }
            let target: Vec<f64> = shift.iter().map(|x| -x).collect();
            enumerate_near(&red, &target, r * r, POINT_CAP, &mut |_, _| {})
        }
        Region::Boxes(b) => {
            if b.dim() != d {
                return Err(pre("region dimension mismatch"));
            }
            let mut total = 0u64;
            let mut seen = std::collections::HashSet::new();
            for (lo, hi) in &b.boxes {
                let center: Vec<f64> = lo.iter().zip(hi).map(|(a, c)| (a + c) / 2.0).collect();
                let r2: f64 = lo.iter().zip(hi).map(|(a, c)| ((c - a) / 2.0).powi(2)).sum();
                let target: Vec<f64> = center.iter().zip(shift).map(|(c, s)| c - s).collect();
                enumerate_near(&red, &target, r2 * (1.0 + 1e-9), POINT_CAP, &mut |c, _| {
                    let x: Vec<f64> = red.vector(c).iter().zip(shift).map(|(v, s)| v + s).collect();
                    if b.contains(&x) && (b.disjoint || seen.insert(c.to_vec())) {
                        total += 1;
                    }
                })?;
            }
            if !b.disjoint {
                // Every point was inserted at most once; recount in case it was seen in a box that
                // does not contain it.
                total = seen.len() as u64;
            }
            Ok(total)
        }
    }
}

/// `#(L cap B_R) / prod (1 + R / lambda_i)`.
pub fn minkowski_ratio(l: &LatticeBasis, r: f64) -> Result<f64> {
    let count = count_points(l, None, &Region::Ball(r))? as f64;
    let mins = successive_minima(l)?;
    Ok(count / mins.iter().map(|m| 1.0 + r / m).product::<f64>())
}

/// `2^d / vol(B_1)`: lattice points are centres of disjoint balls of radius `lambda_1 / 2` inside the
/// box of half-side `t + lambda_1 / 2`, so `#{v : |v|_inf <= t} <= packing_constant(d) (2t / lambda_1 + 1)^d`.
fn packing_constant(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    let unit_ball = PI.powf(half) / gamma_half_integer(half + 1.0);
    2f64.powi(d as i32) / unit_ball
}

/// `Gamma(x)` for `x` a positive multiple of one half.
fn gamma_half_integer(x: f64) -> f64 {
    let mut v = if x.fract() == 0.0 { 1.0 } else { PI.sqrt() };
    let mut y = if x.fract() == 0.0 { 1.0 } else { 0.5 };
    while y < x {
        v *= y;
        y += 1.0;
    }
    v
}

/// Certified bound for `sum_{X != 0, |Xg|_inf > r} 1 / (a + b |Xg|_inf^kappa)` over dyadic shells.
pub fn phi_tail_bound(r: f64, lambda1: f64, d: usize, n: usize, a: f64, b: f64, kappa: f64) -> f64 {
    let dn = (d * n) as i32;
    let ratio = 2f64.powf(dn as f64 - kappa);
    let c = packing_constant(d).powi(n as i32);
    let mut total = 0.0;
    for j in 0..200 {
        let lo = r * 2f64.powi(j);
        let hi = 2.0 * lo;
        let x = 2.0 * hi / lambda1;
        if x >= 1.0 {
            // From here on the count bound is at most `c (2x)^{dn}`, and the shell terms are dominated
            // by a geometric series of ratio `2^{dn - kappa}`.
            let dominating = c * (2.0 * x).powi(dn) / (b * lo.powf(kappa));
            return total + dominating / (1.0 - ratio);
        }
        total += c * (x + 1.0).powi(dn) / (a + b * lo.powf(kappa));
    }
    f64::INFINITY
}

/// Result of [`phi_eval`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub value: f64,
    pub r_cut: f64,
    pub tail_bound: f64,
    pub lattice_points: u64,
    pub lambda1: f64,
    /// `value` divided by the pointwise majorant shape (implied constant not included).
    pub pointwise_ratio: f64,
}

/// `sum_{X != 0, |Xg|_inf <= r_cut} 1 / (a + b |Xg|_inf^kappa)` over `n x d` integer `X`.
///
/// With `F(t) = #{v in L : |v|_inf <= t}`, the number of `X` with `|Xg|_inf = t` is
/// `F(t)^n - F(t^-)^n`, so the sum runs over the distinct norms of lattice vectors.
pub fn phi_truncated(g: &LatticeBasis, n: usize, a: f64, b: f64, kappa: f64, r_cut: f64) -> Result<(f64, u64)> {
    let d = g.d;
    let red = reduce(g);
    let mut norms: Vec<f64> = Vec::new();
    let cap = POINT_CAP;
    let visited = enumerate_near(&red, &vec![0.0; d], r_cut * r_cut * d as f64, cap, &mut |c, _| {
        let v = red.vector(c);
        let inf = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if inf <= r_cut && c.iter().any(|&x| x != 0) {
            norms.push(inf);
        }
    })?;
    norms.sort_by(f64::total_cmp);
    let mut value = 0.0;
    let mut below = 1.0f64;
    let mut i = 0;
    while i < norms.len() {
        let t = norms[i];
        let mut j = i;
        while j < norms.len() && norms[j] == t {
            j += 1;
        }
        let upto = 1.0 + j as f64;
        let shells = upto.powi(n as i32) - below.powi(n as i32);
        value += shells / (a + b * t.powf(kappa));
        below = upto;
        i = j;
    }
    Ok((value, visited))
}

/// `Phi^{(kappa)}_{a,b}(g)` to absolute accuracy `tol` with a certified tail.
pub fn phi_eval(g: &LatticeBasis, n: usize, a: f64, b: f64, kappa: f64, tol: f64) -> Result<PhiReport> {
    let d = g.d;
    if kappa.is_nan() || kappa <= (n * d) as f64 {
        return Err(pre("kappa must exceed n d"));
    }
    if !(a > 0.0 && b > 0.0 && tol > 0.0) {
        return Err(pre("a, b and tol must be positive"));
    }
    let lambda1 = successive_minima(g)?[0];
    let mut r_cut = lambda1.max(1.0);
    let mut tail = phi_tail_bound(r_cut, lambda1, d, n, a, b, kappa);
    while tail >= tol {
        r_cut *= 1.25;
        tail = phi_tail_bound(r_cut, lambda1, d, n, a, b, kappa);
        if r_cut > 1e7 {
            return Err(Error::EnumerationTooLarge { count: u128::MAX, cap: POINT_CAP as u128 });
        }
    }
    let (value, lattice_points) = phi_truncated(g, n, a, b, kappa, r_cut)?;
    let mins = successive_minima(g)?;
    let threshold = (a / b).powf(1.0 / kappa);
    let shape = if lambda1 >= threshold {
        1.0 / (b * lambda1.powf(kappa))
    } else {
        mins.iter().map(|l| (1.0 + threshold / l).powi(n as i32)).product::<f64>() / a
    };
    Ok(PhiReport { value, r_cut, tail_bound: tail, lattice_points, lambda1, pointwise_ratio: value / shape })
}

/// A point `x + iy` of the standard fundamental domain with density `(3/pi) y^{-2}`.
pub fn haar_point_sl2<R: Rng>(rng: &mut R) -> (f64, f64) {
    let y0 = 3f64.sqrt() / 2.0;
    loop {
        let x: f64 = rng.gen_range(-0.5..0.5);
        let u: f64 = 1.0 - rng.gen::<f64>();
        let y = y0 / u;
        if x * x + y * y >= 1.0 {
            return (x, y);
        }
    }
}

/// Basis `[[sqrt y, x/sqrt y], [0, 1/sqrt y]] k(theta)` for a Haar-random point and uniform angle.
pub fn haar_sample_sl2<R: Rng>(rng: &mut R) -> LatticeBasis {
    let (x, y) = haar_point_sl2(rng);
    let th: f64 = rng.gen_range(0.0..TAU);
    let s = y.sqrt();
    let g = [s, x / s, 0.0, 1.0 / s];
    let k = [th.cos(), th.sin(), -th.sin(), th.cos()];
    LatticeBasis { d: 2, rows: real::mat_mul(&g, &k, 2, 2, 2) }
}

/// Densities for the Siegel mean check in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    Ball { r: f64 },
    /// Closed box `[lo, hi]`.
    Box { lo: [f64; 2], hi: [f64; 2] },
    /// `1 / (a + b |x|_inf^kappa)` with `kappa > 2`.
    Rational { a: f64, b: f64, kappa: f64 },
}

impl Density {
    pub fn integral(&self) -> f64 {
        match *self {
            Density::Ball { r } => PI * r * r,
            Density::Box { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
            // The sup-norm sphere of radius t has length 8t, and
            // int_0^inf t / (a + b t^k) dt = a^{2/k - 1} b^{-2/k} (pi / k) / sin(2 pi / k).
            Density::Rational { a, b, kappa } => {
                8.0 * a.powf(2.0 / kappa - 1.0) * b.powf(-2.0 / kappa) * (PI / kappa) / (TAU / kappa).sin()
            }
        }
    }

    fn eval(&self, v: &[f64]) -> f64 {
        match *self {
            Density::Ball { r } => (v[0] * v[0] + v[1] * v[1] <= r * r) as u8 as f64,
            Density::Box { lo, hi } => (lo[0] <= v[0] && v[0] <= hi[0] && lo[1] <= v[1] && v[1] <= hi[1]) as u8 as f64,
            Density::Rational { a, b, kappa } => {
                let t = v[0].abs().max(v[1].abs());
                let p = if kappa == kappa.trunc() && kappa <= 64.0 { t.powi(kappa as i32) } else { t.powf(kappa) };
                1.0 / (a + b * p)
            }
        }
    }

    /// Euclidean radius outside which the density is summed by its integral instead.
    fn cutoff(&self) -> f64 {
        match *self {
            Density::Ball { r } => r,
            Density::Box { lo, hi } => lo.iter().chain(&hi).fold(0.0f64, |m, x| m.max(x.abs())) * 2f64.sqrt(),
            Density::Rational { .. } => RATIONAL_CUTOFF,
        }
    }

    /// `int rho` over `|x|_inf > t` for the rational density; zero for compactly supported ones.
    fn tail_integral(&self, t: f64) -> f64 {
        match *self {
            Density::Rational { a, b, kappa } => {
                // 8 int_t^inf s / (a + b s^k) ds, by substitution s = t / u on (0, 1].
                let f = |u: f64| {
                    let s = t / u;
                    8.0 * s / (a + b * s.powf(kappa)) * t / (u * u)
                };
                let steps = 2000;
                let h = 1.0 / steps as f64;
                (0..steps).map(|i| f((i as f64 + 0.5) * h) * h).sum()
            }
            _ => 0.0,
        }
    }
}

const RATIONAL_CUTOFF: f64 = 24.0;

/// Streaming mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan's pairwise combination.
    pub fn merge(&self, other: &Welford) -> Welford {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * self.count as f64 * other.count as f64 / n as f64;
        Welford { count: n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.count.max(1) as f64).sqrt()
    }
}

/// Number of fixed worker substreams for Monte-Carlo runs.
pub const SUBSTREAMS: u64 = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiegelReport {
    pub check: String,
    pub samples: u64,
    pub mean: f64,
    pub target: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// `sum_{v in L, v != 0} rho(v)`; for the rational density the part beyond the cutoff box is
/// replaced by its integral.
pub fn siegel_transform(l: &LatticeBasis, rho: &Density) -> Result<f64> {
    Ok(siegel_partial(l, rho)? + rho.tail_integral(rho.cutoff()))
}

fn siegel_partial(l: &LatticeBasis, rho: &Density) -> Result<f64> {
    let cut = rho.cutoff();
    let red = reduce(l);
    let mut s = 0.0;
    let box_cut = matches!(rho, Density::Rational { .. });
    let r2 = if box_cut { 2.0 * cut * cut } else { cut * cut };
    let b = red.rows();
    enumerate_near(&red, &[0.0, 0.0], r2, POINT_CAP, &mut |c, _| {
        if c != [0, 0] {
            let (x, y) = (c[0] as f64, c[1] as f64);
            let v = [x * b[0] + y * b[2], x * b[1] + y * b[3]];
            if !box_cut || v[0].abs().max(v[1].abs()) <= cut {
                s += rho.eval(&v);
            }
        }
    })?;
    Ok(s)
}

/// Monte-Carlo mean of the Siegel transform over Haar-random unimodular planar lattices.
pub fn siegel_check_d2(rho: &Density, samples: u64, seed: u64) -> Result<SiegelReport> {
    let tail = rho.tail_integral(rho.cutoff());
    let parts: Vec<Welford> = (0..SUBSTREAMS)
        .into_par_iter()
        .map(|w| -> Result<Welford> {
            let mut rng = crate::rng::stream(seed, w);
            let share = samples / SUBSTREAMS + (w < samples % SUBSTREAMS) as u64;
            let mut acc = Welford::default();
            for _ in 0..share {
                acc.push(siegel_partial(&haar_sample_sl2(&mut rng), rho)? + tail);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = parts.iter().fold(Welford::default(), |a, b| a.merge(b));
    let target = rho.integral();
    let stderr = total.stderr();
    Ok(SiegelReport {
        check: format!("{rho:?}"),
        samples,
        mean: total.mean,
        target,
        stderr,
        pass: (total.mean - target).abs() <= 3.0 * stderr,
    })
}

/// Random orthogonal `d x d` matrix by Gram-Schmidt on Gaussian-free uniform entries.
pub fn random_rotation<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let m: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (bstar, _, norms) = gram_schmidt(&m, d);
        if norms.iter().all(|&x| x > 1e-6) {
            let mut q = bstar;
            for i in 0..d {
                let s = norms[i].sqrt();
                q[i * d..(i + 1) * d].iter_mut().for_each(|x| *x /= s);
            }
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn minima_examples() {
        for d in 1..=4 {
            assert!(successive_minima(&LatticeBasis::standard(d)).unwrap().iter().all(|&x| close(x, 1.0, 1e-12)));
        }
        let l = LatticeBasis::new(2, vec![0.5, 0.0, 0.0, 2.0]).unwrap();
        let m = successive_minima(&l).unwrap();
        assert!(close(m[0], 0.5, 1e-12) && close(m[1], 2.0, 1e-12));
        let l = LatticeBasis::normalized(2, vec![1.0, 0.0, 0.5, 1.0]).unwrap();
        let m = successive_minima(&l).unwrap();
        assert!(close(m[0], 1.0, 1e-12) && close(m[1], 1.25f64.sqrt(), 1e-12));
        assert_eq!(successive_minima(&LatticeBasis::standard(7)), Err(Error::DimensionTooLarge(7)));
    }

    #[test]
    fn count_examples() {
        let z2 = LatticeBasis::standard(2);
        assert_eq!(count_points(&z2, None, &Region::Ball(1.0)).unwrap(), 5);
        assert_eq!(count_points(&z2, None, &Region::Ball(2f64.sqrt())).unwrap(), 9);
        let b = BoxRegion::single(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(count_points(&z2, Some(&[0.5, 0.5]), &Region::Boxes(b)).unwrap(), 1);
        assert!(close(minkowski_ratio(&z2, 1.0).unwrap(), 1.25, 1e-12));
        assert!(close(minkowski_ratio(&z2, 1e-3).unwrap(), 1.0, 1e-2));
    }

    #[test]
    fn phi_examples() {
        let z2 = LatticeBasis::standard(2);
        let (v, _) = phi_truncated(&z2, 1, 1.0, 1.0, 3.0, 1000.0).unwrap();
        let oracle: f64 = (1..=1000).map(|k| 8.0 * k as f64 / (1.0 + (k as f64).powi(3))).sum();
        assert!(close(v, oracle, 1e-12), "{v} vs {oracle}");
        let p1 = phi_eval(&z2, 1, 1.0, 1.0, 3.0, 0.5).unwrap();
        assert!(p1.tail_bound < 0.5 && (p1.value - oracle).abs() <= 0.51);
        let p2 = phi_eval(&z2, 1, 3.0, 3.0, 5.0, 1e-6).unwrap();
        let p3 = phi_eval(&z2, 1, 1.0, 1.0, 5.0, 1e-6).unwrap();
        assert!((p3.value - 3.0 * p2.value).abs() <= 1e-5);
        let (a, _) = phi_truncated(&z2, 2, 1.0, 1.0, 5.0, 50.0).unwrap();
        let (b, _) = phi_truncated(&z2, 2, 2.5, 2.5, 5.0, 50.0).unwrap();
        assert!(close(a, 2.5 * b, 1e-12));
        let p = phi_eval(&z2, 1, 1e-12, 1.0, 20.0, 1e-9).unwrap();
        assert!((p.pointwise_ratio - 8.0).abs() < 1e-3, "{}", p.pointwise_ratio);
        assert!(phi_eval(&z2, 1, 1.0, 1.0, 2.0, 1e-3).is_err());
    }

    #[test]
    fn phi_levels_match_brute_for_pairs() {
        let l = LatticeBasis::normalized(2, vec![1.0, 0.2, 0.3, 1.1]).unwrap();
        let (v, _) = phi_truncated(&l, 2, 1.0, 1.0, 6.0, 4.0).unwrap();
        let red = reduce(&l);
        let mut vecs = Vec::new();
        enumerate_near(&red, &[0.0, 0.0], 32.0, u64::MAX, &mut |c, _| {
            let v = red.vector(c);
            let inf = v[0].abs().max(v[1].abs());
            if inf <= 4.0 {
                vecs.push(inf);
            }
        })
        .unwrap();
        let mut brute = 0.0;
        for (i, &x) in vecs.iter().enumerate() {
            for (j, &y) in vecs.iter().enumerate() {
                let t = x.max(y);
                if (t > 0.0 || i != j)
                    && t > 0.0 {
                        brute += 1.0 / (1.0 + t.powi(6));
                    }
            }
        }
        assert!(close(v, brute, 1e-12), "{v} vs {brute}");
    }

    #[test]
    fn haar_samples_in_domain() {
        let mut rng = crate::rng::stream(11, 0);
        let mut hits = 0u64;
        let k = 200_000;
        for _ in 0..k {
            let (x, y) = haar_point_sl2(&mut rng);
            assert!(x.abs() <= 0.5 && x * x + y * y >= 1.0);
            hits += (y > 2.0) as u64;
        }
        let p = 3.0 / (2.0 * PI);
        let se = (p * (1.0 - p) / k as f64).sqrt();
        assert!((hits as f64 / k as f64 - p).abs() <= 3.0 * se);
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Welford::default();
        let mut b = Welford::default();
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        let m = a.merge(&b);
        assert!(close(m.mean, all.mean, 1e-12) && close(m.m2, all.m2, 1e-10));
    }

    #[test]
    fn rational_integral_closed_form() {
        let rho = Density::Rational { a: 1.0, b: 1.0, kappa: 4.0 };
        assert!(close(rho.integral(), TAU, 1e-12));
        let inner = 8.0 * (0..200_000).map(|i| {
            let t = (i as f64 + 0.5) * 1e-4;
            t / (1.0 + t.powi(4)) * 1e-4
        }).sum::<f64>();
        assert!(close(inner + rho.tail_integral(20.0), TAU, 1e-6));
    }
}
