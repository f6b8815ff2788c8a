//! Small solutions of random linear congruences `x R = b (mod q)`: direct counts, the grid
//! description of the solution set, solution-count histograms over `R`, and planar Monte-Carlo
//! limit distributions.

use crate::arith;
use crate::error::{pre, Error, Result};
use crate::geomnum::{self, BoxRegion, Grid, LatticeBasis, Region};
use crate::modring::{gl_table, IntMatrix, ModMatrix};
use crate::primitive::{complete_to_sl, is_primitive, primitive_residues};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const SOLUTION_CAP: u128 = 100_000_000;
pub const REJECTION_CAP: u64 = 10_000;

/// One congruence `x R = b (mod q)` with `x` restricted to `q^{n/d} Omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct CongruenceInstance {
    pub r: ModMatrix,
    pub b: Vec<i64>,
    pub omega: BoxRegion,
}

impl CongruenceInstance {
    pub fn new(r: ModMatrix, b: Vec<i64>, omega: BoxRegion) -> Result<Self> {
        let (d, n) = (r.rows(), r.cols());
        if n > d || b.len() != n {
            return Err(pre("need n <= d and b of length n"));
        }
        if omega.dim() != d {
            return Err(pre("omega must live in R^d"));
        }
        if b.iter().all(|&x| x.rem_euclid(r.modulus() as i64) == 0) && !contains_origin_nbhd(&omega) {
            return Err(pre("for b = 0 omega must contain a neighbourhood of the origin"));
        }
        Ok(CongruenceInstance { r, b, omega })
    }

    pub fn dims(&self) -> (usize, usize, u64) {
        (self.r.rows(), self.r.cols(), self.r.modulus())
    }
}

fn contains_origin_nbhd(omega: &BoxRegion) -> bool {
    omega.boxes.iter().any(|(lo, hi)| lo.iter().zip(hi).all(|(l, h)| *l < 0.0 && *h > 0.0))
}

/// `q^{n/d}`.
pub fn scale_factor(d: usize, n: usize, q: u64) -> f64 {
    (q as f64).powf(n as f64 / d as f64)
}

/// Membership of the integer point `x` in `s Omega` (half-open boxes).
pub fn scaled_contains(omega: &BoxRegion, s: f64, x: &[i64]) -> bool {
    omega.boxes.iter().any(|(lo, hi)| {
        x.iter().zip(lo.iter().zip(hi)).all(|(&v, (l, h))| s * l <= v as f64 && (v as f64) < s * h)
    })
}

fn solves(x: &[i64], r: &ModMatrix, b: &[i64]) -> bool {
    let q = r.modulus() as i128;
    (0..r.cols()).all(|j| {
        let s: i128 = x.iter().enumerate().map(|(i, &xi)| xi as i128 * r.get(i, j) as i128).sum();
        (s - b[j] as i128).rem_euclid(q) == 0
    })
}

/// Integer points of `s Omega`, each once.
fn integer_points(omega: &BoxRegion, s: f64, cap: u128, visit: &mut dyn FnMut(&[i64])) -> Result<u128> {
    let d = omega.dim();
    let mut seen = std::collections::HashSet::new();
    let mut visited = 0u128;
    for (k, (lo, hi)) in omega.boxes.iter().enumerate() {
        let ranges: Vec<(i64, i64)> =
            lo.iter().zip(hi).map(|(l, h)| ((s * l).floor() as i64 - 1, (s * h).ceil() as i64 + 1)).collect();
        let size: u128 = ranges.iter().map(|(a, b)| (b - a + 1) as u128).product();
        visited += size;
        if visited > cap {
            return Err(Error::EnumerationTooLarge { count: visited, cap });
        }
        let mut x: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            let inside = x.iter().zip(lo.iter().zip(hi)).all(|(&v, (l, h))| s * l <= v as f64 && (v as f64) < s * h);
            // A point inside an earlier box was already visited.
            let earlier = !omega.disjoint && omega.boxes[..k].iter().any(|(l2, h2)| {
                x.iter().zip(l2.iter().zip(h2)).all(|(&v, (l, h))| s * l <= v as f64 && (v as f64) < s * h)
            });
            if inside && !earlier && (omega.disjoint || seen.insert(x.clone())) {
                visit(&x);
            }
            for j in (0..d).rev() {
                if x[j] < ranges[j].1 {
                    x[j] += 1;
                    continue 'outer;
                }
                x[j] = ranges[j].0;
            }
            break;
        }
    }
    Ok(visited)
}

/// `#{x in Z^d cap q^{n/d} Omega : x R = b (mod q)}` by testing every integer point.
pub fn count_solutions(inst: &CongruenceInstance) -> Result<u64> {
    count_solutions_capped(inst, SOLUTION_CAP)
}

pub fn count_solutions_capped(inst: &CongruenceInstance, cap: u128) -> Result<u64> {
    let (d, n, q) = inst.dims();
    let s = scale_factor(d, n, q);
    let mut count = 0u64;
    integer_points(&inst.omega, s, cap, &mut |x| count += solves(x, &inst.r, &inst.b) as u64)?;
    Ok(count)
}

/// The solution set of `x R = b (mod q)` as the integer grid `Z^d A + b C`, with `A` reduced.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionGrid {
    pub d: usize,
    pub n: usize,
    pub q: u64,
    /// Row basis of `{x : x R = 0 (mod q)}`, of determinant `+-q^n`.
    pub a: IntMatrix,
    /// `n x d` with `C R' + q D = I_n` for an integer `D`.
    pub c: IntMatrix,
    /// `b C`.
    pub translate: Vec<i64>,
}

/// Kernel lattice and Bezout translate for `R`, from the completion of `R` to `SL_{d+n}(Z)`.
pub fn grid_construct(r: &ModMatrix, b: &[i64]) -> Result<SolutionGrid> {
    let (d, n, q) = (r.rows(), r.cols(), r.modulus());
    if b.len() != n {
        return Err(pre("b must have length n"));
    }
    if !is_primitive(r) {
        return Err(Error::NotPrimitive { q });
    }
    if n == d {
        let eta = complete_to_sl(r)?;
        let a = IntMatrix::identity(d).scale(q as i64)?;
        let c = eta.submatrix(d, 2 * d, 0, d);
        let translate = bezout_translate(&c, b)?;
        return Ok(SolutionGrid { d, n, q, a, c, translate });
    }
    let eta = complete_to_sl(r)?;
    let a0 = eta.submatrix(0, d, 0, d);
    let c = eta.submatrix(d, d + n, 0, d);
    let mut rows: Vec<f64> = a0.entries().iter().map(|&x| x as f64).collect();
    geomnum::reduce_rows(&mut rows, d);
    let a = IntMatrix::new(d, d, rows.iter().map(|x| x.round() as i64).collect());
    if a.det()?.unsigned_abs() != (q as u128).pow(n as u32) {
        return Err(Error::ArithmeticOverflow);
    }
    let translate = bezout_translate(&c, b)?;
    Ok(SolutionGrid { d, n, q, a, c, translate })
}

fn bezout_translate(c: &IntMatrix, b: &[i64]) -> Result<Vec<i64>> {
    (0..c.cols())
        .map(|j| {
            let s: i128 = (0..c.rows()).map(|i| b[i] as i128 * c.get(i, j) as i128).sum();
            i64::try_from(s).map_err(|_| Error::ArithmeticOverflow)
        })
        .collect()
}

impl SolutionGrid {
    /// `q^{-n/d} (Z^d A + b C)`, a grid of covolume one.
    pub fn grid(&self) -> Result<Grid> {
        let s = 1.0 / scale_factor(self.d, self.n, self.q);
        let rows = self.a.entries().iter().map(|&x| x as f64 * s).collect();
        let basis = LatticeBasis::normalized(self.d, rows)?;
        Ok(Grid { basis, shift: self.translate.iter().map(|&x| x as f64 * s).collect() })
    }

    /// `#(grid cap Omega)`: lattice coefficients are enumerated in floating point around each box and
    /// every candidate `c A + b C` is tested exactly against `q^{n/d} Omega`.
    pub fn count_in(&self, omega: &BoxRegion) -> Result<u64> {
        let s = scale_factor(self.d, self.n, self.q);
        let grid = self.grid()?;
        let mut seen = std::collections::HashSet::new();
        for (lo, hi) in &omega.boxes {
            let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (a + b) / 2.0).collect();
            let r2: f64 = lo.iter().zip(hi).map(|(a, b)| ((b - a) / 2.0).powi(2)).sum::<f64>() * (1.0 + 1e-6) + 1e-9;
            let target: Vec<f64> = center.iter().zip(&grid.shift).map(|(c, t)| c - t).collect();
            geomnum::enumerate_near(&grid.basis, &target, r2, geomnum::POINT_CAP, &mut |c, _| {
                let x: Vec<i64> = (0..self.d)
                    .map(|j| self.translate[j] + (0..self.d).map(|i| c[i] * self.a.get(i, j)).sum::<i64>())
                    .collect();
                if scaled_contains(omega, s, &x) {
                    seen.insert(x);
                }
            })?;
        }
        Ok(seen.len() as u64)
    }
}

/// `R mod q` lies in `q U` for a box region `U` of the `dn`-torus (row-major coordinates).
pub fn in_torus_region(r: &ModMatrix, u: &BoxRegion) -> bool {
    let q = r.modulus() as f64;
    let pt: Vec<f64> = r.entries().iter().map(|&x| x as f64 / q).collect();
    u.contains(&pt)
}

/// Full `dn`-torus `[0, 1)^{dn}`.
pub fn full_torus(dim: usize) -> BoxRegion {
    BoxRegion { boxes: vec![(vec![0.0; dim], vec![1.0; dim])], disjoint: true }
}

/// Counts of solution numbers `r = 0..=r_max`, with one overflow bin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub q: u64,
    pub counts: Vec<u64>,
    pub total: u64,
    /// Sum of all solution numbers, overflow included.
    pub sum: u128,
}

impl Histogram {
    pub fn new(q: u64, r_max: usize) -> Self {
        Histogram { q, counts: vec![0; r_max + 2], total: 0, sum: 0 }
    }

    pub fn r_max(&self) -> usize {
        self.counts.len() - 2
    }

    pub fn push(&mut self, r: u64) {
        let bin = (r as usize).min(self.r_max() + 1);
        self.counts[bin] += 1;
        self.total += 1;
        self.sum += r as u128;
    }

    pub fn merge(&self, other: &Histogram) -> Histogram {
        Histogram {
            q: self.q,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            total: self.total + other.total,
            sum: self.sum + other.sum,
        }
    }

    pub fn prob(&self, r: usize) -> f64 {
        self.counts[r] as f64 / self.total.max(1) as f64
    }

    pub fn probs(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|r| self.prob(r)).collect()
    }

    /// `sqrt(P (1 - P) / total)`.
    pub fn binomial_stderr(&self, r: usize) -> f64 {
        let p = self.prob(r);
        (p * (1.0 - p) / self.total.max(1) as f64).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.total.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistMode {
    Exhaustive,
    Sample { samples: u64, seed: u64 },
}

/// Parameters shared by the histogram and joint-frequency routines.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub d: usize,
    pub n: usize,
    pub q: u64,
    /// Region of the `dn`-torus that `R / q` must lie in.
    pub u: BoxRegion,
}

impl Ensemble {
    pub fn new(d: usize, n: usize, q: u64, u: BoxRegion) -> Result<Self> {
        if n == 0 || n > d || q < 2 {
            return Err(pre("need 1 <= n <= d and q >= 2"));
        }
        if u.dim() != d * n {
            return Err(pre("U must live in the dn-torus"));
        }
        Ok(Ensemble { d, n, q, u })
    }

    fn primes(&self) -> Vec<u64> {
        arith::factorize(self.q).into_iter().map(|(p, _)| p).collect()
    }

    /// Apply `f` to every primitive `R` with `R / q` in `U`, merging results with `merge`.
    fn fold_exhaustive<T: Send>(
        &self,
        cap: u128,
        init: impl Fn() -> T + Sync + Send,
        f: impl Fn(&mut T, &ModMatrix) -> Result<()> + Sync + Send,
        merge: impl Fn(T, T) -> T + Sync + Send,
    ) -> Result<T> {
        let len = self.d * self.n;
        let total = crate::modring::candidate_count(self.d, self.n, self.q);
        if total > cap {
            return Err(Error::EnumerationTooLarge { count: total, cap });
        }
        let primes = self.primes();
        let chunk = 1u64 << 10;
        let chunks = (total as u64).div_ceil(chunk);
        (0..chunks)
            .into_par_iter()
            .map(|c| -> Result<T> {
                let mut acc = init();
                let mut buf = vec![0u64; len];
                for idx in c * chunk..((c + 1) * chunk).min(total as u64) {
                    crate::modring::decode_index(idx, len, self.q, &mut buf);
                    if !primitive_residues(&buf, self.d, self.n, &primes) {
                        continue;
                    }
                    let r = ModMatrix::from_residues(self.d, self.n, self.q, buf.clone());
                    if in_torus_region(&r, &self.u) {
                        f(&mut acc, &r)?;
                    }
                }
                Ok(acc)
            })
            .try_reduce(&init, |a, b| Ok(merge(a, b)))
    }

    /// Uniform primitive `R` with `R / q` in `U`, by rejection.
    pub fn sample<G: Rng>(&self, rng: &mut G) -> Result<ModMatrix> {
        let primes = self.primes();
        for _ in 0..REJECTION_CAP {
            let buf: Vec<u64> = (0..self.d * self.n).map(|_| rng.gen_range(0..self.q)).collect();
            if primitive_residues(&buf, self.d, self.n, &primes) {
                let r = ModMatrix::from_residues(self.d, self.n, self.q, buf);
                if in_torus_region(&r, &self.u) {
                    return Ok(r);
                }
            }
        }
        Err(Error::EnumerationTooLarge { count: REJECTION_CAP as u128, cap: REJECTION_CAP as u128 })
    }
}

/// Distribution over `R` of the number of solutions of `x R = b` in `q^{n/d} Omega`.
pub fn hist_distribution(
    ens: &Ensemble,
    omega: &BoxRegion,
    b: &[i64],
    r_max: usize,
    mode: HistMode,
) -> Result<Histogram> {
    if omega.dim() != ens.d || b.len() != ens.n {
        return Err(pre("omega or b has the wrong dimension"));
    }
    let s = scale_factor(ens.d, ens.n, ens.q);
    let mut pts = Vec::new();
    integer_points(omega, s, SOLUTION_CAP, &mut |x| pts.push(x.to_vec()))?;
    let count = |r: &ModMatrix| pts.iter().filter(|x| solves(x, r, b)).count() as u64;
    match mode {
        HistMode::Exhaustive => ens.fold_exhaustive(
            crate::modring::DEFAULT_CAP,
            || Histogram::new(ens.q, r_max),
            |h, r| {
                h.push(count(r));
                Ok(())
            },
            |a, b| a.merge(&b),
        ),
        HistMode::Sample { samples, seed } => {
            let parts: Vec<Histogram> = (0..geomnum::SUBSTREAMS)
                .into_par_iter()
                .map(|w| -> Result<Histogram> {
                    let mut rng = crate::rng::stream(seed, w);
                    let share = samples / geomnum::SUBSTREAMS + (w < samples % geomnum::SUBSTREAMS) as u64;
                    let mut h = Histogram::new(ens.q, r_max);
                    for _ in 0..share {
                        h.push(count(&ens.sample(&mut rng)?));
                    }
                    Ok(h)
                })
                .collect::<Result<_>>()?;
            Ok(parts.iter().fold(Histogram::new(ens.q, r_max), |a, b| a.merge(b)))
        }
    }
}

/// One condition `#(solutions of x R = b in q^{n/d} Omega) = r` of a joint event.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub omega: BoxRegion,
    pub b: Vec<i64>,
    pub r: u64,
}

/// Number of `R` satisfying every condition simultaneously, and the number of `R` examined.
pub fn joint_frequency(ens: &Ensemble, conds: &[Condition]) -> Result<(u64, u64)> {
    let s = scale_factor(ens.d, ens.n, ens.q);
    let mut pts = Vec::new();
    for c in conds {
        if c.omega.dim() != ens.d || c.b.len() != ens.n {
            return Err(pre("condition has the wrong dimension"));
        }
        let mut v = Vec::new();
        integer_points(&c.omega, s, SOLUTION_CAP, &mut |x| v.push(x.to_vec()))?;
        pts.push(v);
    }
    ens.fold_exhaustive(
        crate::modring::DEFAULT_CAP,
        || (0u64, 0u64),
        |acc, r| {
            let hit = conds
                .iter()
                .zip(&pts)
                .all(|(c, v)| v.iter().filter(|x| solves(x, r, &c.b)).count() as u64 == c.r);
            acc.0 += hit as u64;
            acc.1 += 1;
            Ok(())
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    )
}

/// Planar limit distribution of `#((L + beta t) cap Omega)` for Haar-random `L` and `t` uniform in
/// the torus `R^2 / L`; `beta = 0` gives the lattice case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitDistribution {
    pub samples: u64,
    pub hist: Histogram,
    /// `sqrt(c (1 - c) / samples)` per bin.
    pub stderr: Vec<f64>,
    pub mean: f64,
    pub mean_stderr: f64,
}

impl LimitDistribution {
    /// Estimate of `c(Omega, b, r)` with its standard error.
    pub fn constant(&self, r: usize) -> (f64, f64) {
        (self.hist.prob(r), self.stderr[r])
    }
}

/// Monte-Carlo limit distribution at `d = 2`, `n = 1` for the translate multiplier `beta`.
pub fn limit_constant_mc(omega: &BoxRegion, beta: i64, r_max: usize, samples: u64, seed: u64) -> Result<LimitDistribution> {
    let conds = [(omega.clone(), beta)];
    let per_sample = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<u64>> { sample_counts(rng, &conds) };
    let parts: Vec<(Histogram, geomnum::Welford)> = (0..geomnum::SUBSTREAMS)
        .into_par_iter()
        .map(|w| -> Result<_> {
            let mut rng = crate::rng::stream(seed, w);
            let share = samples / geomnum::SUBSTREAMS + (w < samples % geomnum::SUBSTREAMS) as u64;
            let mut h = Histogram::new(0, r_max);
            let mut acc = geomnum::Welford::default();
            for _ in 0..share {
                let k = per_sample(&mut rng)?[0];
                h.push(k);
                acc.push(k as f64);
            }
            Ok((h, acc))
        })
        .collect::<Result<_>>()?;
    let (hist, acc) = parts
        .iter()
        .fold((Histogram::new(0, r_max), geomnum::Welford::default()), |(h, a), (h2, a2)| (h.merge(h2), a.merge(a2)));
    let stderr = (0..hist.counts.len()).map(|r| hist.binomial_stderr(r)).collect();
    Ok(LimitDistribution { samples, mean: acc.mean, mean_stderr: acc.stderr(), hist, stderr })
}

/// Counts `#((L + beta_j t) cap Omega_j)` for one Haar sample `(L, t)`.
fn sample_counts<G: Rng>(rng: &mut G, conds: &[(BoxRegion, i64)]) -> Result<Vec<u64>> {
    let l = geomnum::haar_sample_sl2(rng);
    let (u0, u1): (f64, f64) = (rng.gen(), rng.gen());
    let b = l.rows();
    let t = [u0 * b[0] + u1 * b[2], u0 * b[1] + u1 * b[3]];
    conds
        .iter()
        .map(|(omega, beta)| {
            let shift = [*beta as f64 * t[0], *beta as f64 * t[1]];
            geomnum::count_points(&l, Some(&shift), &Region::Boxes(omega.clone()))
        })
        .collect()
}

/// Monte-Carlo probability that `#((L + beta_j t) cap Omega_j) = r_j` for every `j`, with stderr.
pub fn joint_limit_mc(conds: &[(BoxRegion, i64, u64)], samples: u64, seed: u64) -> Result<(f64, f64)> {
    let regions: Vec<(BoxRegion, i64)> = conds.iter().map(|(o, b, _)| (o.clone(), *b)).collect();
    let hits: u64 = (0..geomnum::SUBSTREAMS)
        .into_par_iter()
        .map(|w| -> Result<u64> {
            let mut rng = crate::rng::stream(seed, w);
            let share = samples / geomnum::SUBSTREAMS + (w < samples % geomnum::SUBSTREAMS) as u64;
            let mut hits = 0;
            for _ in 0..share {
                let k = sample_counts(&mut rng, &regions)?;
                hits += k.iter().zip(conds).all(|(k, c)| *k == c.2) as u64;
            }
            Ok(hits)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let p = hits as f64 / samples.max(1) as f64;
    Ok((p, (p * (1.0 - p) / samples.max(1) as f64).sqrt()))
}

/// Fraction of `R` in `GL_n(Z/qZ) cap qU` with `b R^{-1} mod q` in `q Omega`, for `Omega` in the
/// `n`-torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseFraction {
    pub hits: u64,
    pub total: u64,
    pub fraction: f64,
}

pub fn inverse_experiment(n: usize, q: u64, u: &BoxRegion, omega: &BoxRegion, b: &[i64]) -> Result<InverseFraction> {
    if u.dim() != n * n || omega.dim() != n || b.len() != n {
        return Err(pre("U, Omega or b has the wrong dimension"));
    }
    let table = gl_table(n, q)?;
    let qf = q as f64;
    let (hits, total) = (0..table.len())
        .into_par_iter()
        .map(|i| {
            let m = table.mat(i);
            let pt: Vec<f64> = m.iter().map(|&x| x as f64 / qf).collect();
            if !u.contains(&pt) {
                return (0, 0);
            }
            let inv = table.inv(i);
            let x: Vec<f64> = (0..n)
                .map(|j| {
                    let s: i128 = (0..n).map(|k| b[k] as i128 * inv[k * n + j] as i128).sum();
                    arith::rem(s, q) as f64 / qf
                })
                .collect();
            (omega.contains(&x) as u64, 1u64)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(InverseFraction { hits, total, fraction: hits as f64 / total.max(1) as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxr(lo: &[f64], hi: &[f64]) -> BoxRegion {
        BoxRegion::single(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn count_examples() {
        let r = ModMatrix::new(2, 1, 3, &[1, 1]).unwrap();
        let tiny = boxr(&[-0.1, -0.1], &[0.1, 0.1]);
        assert_eq!(count_solutions(&CongruenceInstance::new(r.clone(), vec![0], tiny).unwrap()).unwrap(), 1);
        let inst = CongruenceInstance::new(r.clone(), vec![1], boxr(&[0.0, 0.0], &[2.0, 2.0])).unwrap();
        let mut oracle = 0;
        for x in 0..4i64 {
            for y in 0..4i64 {
                oracle += ((x + y) % 3 == 1) as u64;
            }
        }
        assert_eq!(count_solutions(&inst).unwrap(), oracle);
        let r1 = ModMatrix::new(2, 1, 1, &[0, 0]).unwrap();
        let inst = CongruenceInstance::new(r1, vec![0], boxr(&[-1.0, -1.0], &[1.0, 1.0])).unwrap();
        assert_eq!(count_solutions(&inst).unwrap(), 4);
    }

    #[test]
    fn grid_examples() {
        let r = ModMatrix::new(2, 1, 3, &[1, 1]).unwrap();
        let g = grid_construct(&r, &[0]).unwrap();
        assert_eq!(g.a.det().unwrap().abs(), 3);
        for i in 0..2 {
            assert_eq!((g.a.get(i, 0) + g.a.get(i, 1)).rem_euclid(3), 0);
        }
        let g4 = grid_construct(&r, &[4]).unwrap();
        let g1 = grid_construct(&r, &[1]).unwrap();
        let omega = boxr(&[-0.7, -1.3], &[1.9, 0.4]);
        assert_eq!(g4.count_in(&omega).unwrap(), g1.count_in(&omega).unwrap());
        let inst = CongruenceInstance::new(r, vec![1], omega.clone()).unwrap();
        assert_eq!(g1.count_in(&omega).unwrap(), count_solutions(&inst).unwrap());
    }

    #[test]
    fn histogram_q2() {
        let ens = Ensemble::new(2, 1, 2, full_torus(2)).unwrap();
        let omega = boxr(&[-1.1, -1.1], &[1.1, 1.1]);
        let h = hist_distribution(&ens, &omega, &[0], 8, HistMode::Exhaustive).unwrap();
        assert_eq!(h.total, 3);
        assert!((h.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut oracle = Histogram::new(2, 8);
        for r in [[1i64, 0], [0, 1], [1, 1]] {
            let mut k = 0;
            for x in -1i64..=1 {
                for y in -1i64..=1 {
                    k += ((x * r[0] + y * r[1]) % 2 == 0) as u64;
                }
            }
            oracle.push(k);
        }
        assert_eq!(h, oracle);
    }

    #[test]
    fn inverse_full_torus() {
        let f = inverse_experiment(1, 13, &full_torus(1), &full_torus(1), &[3]).unwrap();
        assert_eq!((f.hits, f.total), (12, 12));
        let half = boxr(&[0.0], &[0.5]);
        let a = inverse_experiment(1, 31, &full_torus(1), &half, &[1]).unwrap();
        let b = inverse_experiment(1, 31, &full_torus(1), &half, &[7]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn limit_tiny_box() {
        let tiny = boxr(&[-1e-3, -1e-3], &[1e-3, 1e-3]);
        let l = limit_constant_mc(&tiny, 0, 3, 2000, 5).unwrap();
        assert_eq!(l.constant(1).0, 1.0);
    }
}
