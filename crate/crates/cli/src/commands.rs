//! Subcommand runners. Each turns its parameters into result records.

use crate::config::{parse_boxes, Params};
use crate::error::{invalid, Result};
use crate::record::ResultRecord;
use horo_core::arith;
use horo_core::ExpSum;
use horo_core::geomnum::{self, BoxRegion, Density, LatticeBasis};
use horo_core::horosphere::{self, DecayMode, TrigPoly};
use horo_core::kloosterman::{verify_kloos_bounds, BoundKind, BoundScan};
use horo_core::kloosterman::{self, LiftConvention};
use horo_core::modring::{self, ModMatrix};
use horo_core::primitive::{self, Parametrization};
use horo_core::rankcount;
use horo_core::rng;
use horo_core::smallsol::{self, Ensemble, HistMode, SolutionGrid};
use rand::Rng;
use rayon::prelude::*;

/// Shared inputs of every runner.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub params: Params,
    pub seed: Option<u64>,
    pub cap: u128,
}

impl Ctx {
    pub fn new(params: Params, seed: Option<u64>, cap: u128) -> Self {
        Ctx { params, seed, cap }
    }

    /// The run seed, required by stochastic checks.
    pub fn seed(&self, what: &str) -> Result<u64> {
        self.seed.ok_or_else(|| invalid(format!("{what} is stochastic and needs --seed")))
    }
}

const REL_TOL: f64 = 1e-9;

fn rel_err(a: num_complex::Complex64, b: num_complex::Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

fn bound_kind(name: &str) -> Result<BoundKind> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| invalid(format!("unknown check {name:?}")))
}

/// `kloos`: bound suites (`check = weil`, `prime_general`, ..., or `all`) and the oracle checks
/// `crt`, `primepower` and `ramanujan`.
pub fn kloos(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let n: usize = p.get("n", 1)?;
    let moduli = p.range("q", "2..30")?;
    let mut out = Vec::new();
    for check in p.list("check", "weil") {
        match check.as_str() {
            "crt" => out.extend(kloos_crt_check(ctx, n, &moduli)?),
            "primepower" => out.extend(kloos_primepower_check(ctx, n, &moduli)?),
            "ramanujan" => out.extend(kloos_ramanujan_check(n, &moduli)?),
            other => {
                let kinds = if other == "all" { BoundKind::all() } else { vec![bound_kind(other)?] };
                let samples: Option<usize> = p.get_opt("samples")?;
                let seed = if samples.is_some() { ctx.seed("sampled bound scan")? } else { ctx.seed.unwrap_or(0) };
                let scan = BoundScan { kinds, n, moduli: moduli.clone(), samples, seed, eps: p.get("eps", 0.0)? };
                for rep in verify_kloos_bounds(&scan)? {
                    let mut r = ResultRecord::new("kloos.bound").param("bound", serde_json::to_value(rep.bound).unwrap());
                    for (k, v) in &rep.params {
                        r = r.param(k, *v);
                    }
                    out.push(
                        r.real("measured", rep.measured)
                            .real("bound_value", rep.bound_value)
                            .real("ratio", rep.ratio)
                            .value("cases", rep.cases)
                            .value("explicit", rep.bound.explicit())
                            .with_pass(rep.pass),
                    );
                }
            }
        }
    }
    Ok(out)
}

fn kloos_crt_check(ctx: &Ctx, n: usize, moduli: &[u64]) -> Result<Vec<ResultRecord>> {
    let samples: u64 = ctx.params.get("samples", 100)?;
    let seed = ctx.seed("crt oracle check")?;
    moduli
        .iter()
        .filter(|&&q| q >= 2)
        .map(|&q| {
            let mut g = rng::stream(seed, q);
            let pairs: Vec<(ModMatrix, ModMatrix)> = (0..samples)
                .map(|_| (rng::random_matrix(&mut g, n, n, q), rng::random_matrix(&mut g, n, n, q)))
                .collect();
            let errs: Vec<f64> = pairs
                .par_iter()
                .map(|(a, b)| Ok(rel_err(kloosterman::kloos_crt(a, b)?.value(), kloosterman::kloos_brute(a, b)?.value())))
                .collect::<Result<_>>()?;
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            Ok(ResultRecord::new("kloos.crt")
                .param("n", n)
                .param("q", q)
                .value("cases", samples)
                .real("max_rel_err", worst)
                .with_pass(worst <= REL_TOL))
        })
        .collect()
}

fn kloos_primepower_check(ctx: &Ctx, n: usize, moduli: &[u64]) -> Result<Vec<ResultRecord>> {
    let samples: Option<u64> = ctx.params.get_opt("samples")?;
    let mut out = Vec::new();
    for &q in moduli {
        let (pr, beta) = match arith::factorize(q).as_slice() {
            [(pr, e)] if *e >= 2 => (*pr, *e),
            _ => continue,
        };
        let keep = |m: &ModMatrix| !m.divisible_by(pr);
        let pairs: Vec<(ModMatrix, ModMatrix)> = match samples {
            None => {
                let all: Vec<ModMatrix> = all_matrices(n, q, ctx.cap)?.into_iter().filter(keep).collect();
                let total = (all.len() as u128).pow(2);
                if total > ctx.cap {
                    return Err(horo_core::Error::EnumerationTooLarge { count: total, cap: ctx.cap }.into());
                }
                all.iter().flat_map(|a| all.iter().map(move |b| (a.clone(), b.clone()))).collect()
            }
            Some(k) => {
                let mut g = rng::stream(ctx.seed("sampled prime-power check")?, q);
                let mut v = Vec::new();
                while (v.len() as u64) < k {
                    let a = rng::random_matrix(&mut g, n, n, q);
                    let b = rng::random_matrix(&mut g, n, n, q);
                    if keep(&a) && keep(&b) {
                        v.push((a, b));
                    }
                }
                v
            }
        };
        let bad: u64 = pairs
            .par_iter()
            .map(|(a, b)| -> Result<u64> {
                let brute = kloosterman::kloos_brute(a, b)?;
                let m = kloosterman::kloos_primepower(a, b, LiftConvention::Minimal)?;
                let s = kloosterman::kloos_primepower(a, b, LiftConvention::Shifted)?;
                Ok((!(m.exact_eq(&brute) && s.exact_eq(&brute))) as u64)
            })
            .try_reduce(|| 0, |x, y| Ok(x + y))?;
        out.push(
            ResultRecord::new("kloos.primepower")
                .param("n", n)
                .param("p", pr)
                .param("beta", beta)
                .value("cases", pairs.len() as u64)
                .value("mismatches", bad)
                .value("exhaustive", samples.is_none())
                .with_pass(bad == 0),
        );
    }
    Ok(out)
}

fn all_matrices(n: usize, q: u64, cap: u128) -> Result<Vec<ModMatrix>> {
    let total = modring::candidate_count(n, n, q);
    if total > cap {
        return Err(horo_core::Error::EnumerationTooLarge { count: total, cap }.into());
    }
    let mut buf = vec![0u64; n * n];
    Ok((0..total as u64)
        .map(|i| {
            modring::decode_index(i, n * n, q, &mut buf);
            ModMatrix::from_residues(n, n, q, buf.clone())
        })
        .collect())
}

/// Largest number of `(A, X)` terms spent on direct `K_n(0, A; q)` sums per modulus.
const DIRECT_BUDGET: u128 = 100_000_000;
/// Number of evenly spaced `A` summed directly when every `A` would exceed the budget.
const DIRECT_STRIDE_COUNT: u64 = 200;

/// `ramanujan_eval` against the Fourier table of `K_n(0, A; q)` for every `A`, and against the
/// defining sum for every `A` (or `DIRECT_STRIDE_COUNT` evenly spaced `A` beyond the budget).
fn kloos_ramanujan_check(n: usize, moduli: &[u64]) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for &q in moduli {
        let (pr, m) = match arith::factorize(q).as_slice() {
            [(pr, e)] => (*pr, *e),
            _ => continue,
        };
        let table = kloosterman::kloos_zero_all(n, q)?;
        let len = n * n;
        let total = table.len() as u64;
        let step = if total as u128 * modring::count_gl(n, q) <= DIRECT_BUDGET {
            1
        } else {
            total.div_ceil(DIRECT_STRIDE_COUNT)
        };
        let matrix = |i: u64| {
            let mut buf = vec![0u64; len];
            modring::decode_index(i, len, q, &mut buf);
            ModMatrix::from_residues(n, n, q, buf)
        };
        let bad: u64 = (0..total)
            .into_par_iter()
            .map(|i| -> Result<u64> {
                Ok((kloosterman::ramanujan_eval(&matrix(i), pr, m)? != table[i as usize]) as u64)
            })
            .try_reduce(|| 0, |x, y| Ok(x + y))?;
        let direct: Vec<u64> = (0..total).step_by(step as usize).collect();
        let zero = ModMatrix::zeros(n, n, q);
        let bad_direct: u64 = direct
            .par_iter()
            .map(|&i| -> Result<u64> {
                let a = matrix(i);
                let brute = kloosterman::kloos_brute(&zero, &a)?;
                let v = kloosterman::ramanujan_eval(&a, pr, m)?;
                Ok((!brute.exact_eq(&ExpSum::constant(q, v as i64))) as u64)
            })
            .try_reduce(|| 0, |x, y| Ok(x + y))?;
        out.push(
            ResultRecord::new("kloos.ramanujan")
                .param("n", n)
                .param("q", q)
                .value("cases", total)
                .value("mismatches", bad)
                .value("direct_cases", direct.len() as u64)
                .value("direct_mismatches", bad_direct)
                .with_pass(bad == 0 && bad_direct == 0),
        );
    }
    Ok(out)
}

/// `prim`: counting formulas (`count`, `gl`) and the parametrization (`bijection`).
pub fn prim(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let d: usize = p.get("d", 2)?;
    let n: usize = p.get("n", 1)?;
    let moduli = p.range("q", "1..12")?;
    let mut out = Vec::new();
    for check in p.list("check", "count") {
        for &q in &moduli {
            let rec = match check.as_str() {
                "count" => prim_count(d, n, q, ctx.cap)?,
                "gl" => {
                    let formula = modring::count_gl(n, q);
                    let enumerated = modring::enumerate_gl(n, q, ctx.cap)?.count() as u128;
                    ResultRecord::new("prim.gl")
                        .param("n", n)
                        .param("q", q)
                        .count("formula", formula)
                        .count("enumerated", enumerated)
                        .with_pass(formula == enumerated)
                }
                "bijection" => prim_bijection(d, n, q, ctx.cap)?,
                other => return Err(invalid(format!("unknown prim check {other:?}"))),
            };
            out.push(rec);
        }
    }
    Ok(out)
}

/// Formula against enumeration; the `3 x 3` case uses the column-wise scan.
pub fn prim_count(d: usize, n: usize, q: u64, cap: u128) -> Result<ResultRecord> {
    let formula = primitive::primitive_count(d, n, q);
    let enumerated = if (d, n) == (3, 3) && (2..=64).contains(&q) {
        primitive::square3_scan(q, false)?.units
    } else {
        primitive::primitive_count_enum(d, n, q, cap)?
    };
    Ok(ResultRecord::new("prim.count")
        .param("d", d)
        .param("n", n)
        .param("q", q)
        .count("formula", formula)
        .count("enumerated", enumerated)
        .with_pass(formula == enumerated))
}

/// Exhaustive check of the parametrization of primitive matrices; for `d = n = 3` the coset set is
/// a single point and the work is the relation check on every element of `GL_3(Z/q)`.
pub fn prim_bijection(d: usize, n: usize, q: u64, cap: u128) -> Result<ResultRecord> {
    let rec = ResultRecord::new("prim.bijection").param("d", d).param("n", n).param("q", q);
    if (d, n) == (3, 3) && (2..=64).contains(&q) {
        let s = primitive::square3_scan(q, true)?;
        let total = primitive::primitive_count(3, 3, q);
        return Ok(rec
            .value("reps", 1u64)
            .count("pairs", s.units)
            .count("primitive_total", total)
            .count("hit", s.units)
            .count("collisions", 0)
            .count("non_primitive_images", 0)
            .count("relation_checked", s.relation_checked)
            .count("relation_failures", s.relation_failures)
            .with_pass(s.units == total && s.relation_checked == s.units && s.relation_failures == 0));
    }
    let param = Parametrization::new(d, n, q)?;
    let r = param.verify_exhaustive(cap)?;
    Ok(rec
        .value("reps", r.reps as u64)
        .count("pairs", r.pairs)
        .count("primitive_total", r.primitive_total)
        .count("hit", r.hit)
        .count("collisions", r.collisions)
        .count("non_primitive_images", r.non_primitive_images)
        .count("relation_checked", r.pairs)
        .count("relation_failures", r.relation_failures)
        .with_pass(r.ok()))
}

fn decay_mode(s: &str) -> Result<DecayMode> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| invalid(format!("unknown equi mode {s:?}")))
}

fn primes_in(v: &[u64]) -> Vec<u64> {
    v.iter().copied().filter(|&x| arith::is_prime(x)).collect()
}

/// `equi`: decay scans (`check = decay`), the Hecke small/large ratio (`hecke_ratio`) and the
/// `A_q` oracle (`aq_oracle`).
pub fn equi(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let mut out = Vec::new();
    for check in p.list("check", "decay") {
        match check.as_str() {
            "decay" => {
                let mode = decay_mode(p.str_or("mode", "weyl"))?;
                let mut params = p.range("q", "3..500")?;
                if p.get("primes", true)? {
                    params = primes_in(&params);
                }
                if params.is_empty() {
                    continue;
                }
                let t = horosphere::decay_scan(mode, &params)?;
                let mode_name = p.str_or("mode", "weyl").to_string();
                for pt in &t.points {
                    let mut r = ResultRecord::new("equi.point").param("mode", mode_name.clone()).param("q", pt.param);
                    r = r.real("value", pt.value);
                    if let Some(b) = pt.bound {
                        r = r.real("bound", b).with_pass(pt.value <= b * (1.0 + 1e-9));
                    }
                    out.push(r);
                }
                let mut r = ResultRecord::new("equi.decay")
                    .param("mode", mode_name)
                    .value("points", t.points.len() as u64)
                    .real("theta", t.theta)
                    .real("eps", t.eps)
                    .real("slack", t.slack)
                    .real("fitted_constant", t.fitted_constant)
                    .real("fitted_slope", t.fitted_slope)
                    .real("residual", t.residual)
                    .value("excluded", t.excluded);
                if let Some(e) = t.envelope_ok {
                    r = r.value("envelope_ok", e);
                }
                out.push(if t.excluded { r } else { r.with_pass(t.pass) });
            }
            "hecke_ratio" => out.push(hecke_ratio(&primes_in(&p.range("small", "2..20")?), &primes_in(&p.range("large", "200..500")?), p.get("factor", 3.0)?)?),
            "aq_oracle" => out.extend(aq_oracle(ctx)?),
            other => return Err(invalid(format!("unknown equi check {other:?}"))),
        }
    }
    Ok(out)
}

/// Average Hecke deviation over two sets of `m`, and whether it drops by `factor`.
pub fn hecke_ratio(small: &[u64], large: &[u64], factor: f64) -> Result<ResultRecord> {
    let avg = |ms: &[u64]| -> Result<f64> {
        let v: Vec<f64> =
            ms.par_iter().map(|&m| Ok(horosphere::decay_value(DecayMode::Hecke, m)?.value)).collect::<Result<_>>()?;
        Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
    };
    let (a, b) = (avg(small)?, avg(large)?);
    Ok(ResultRecord::new("equi.hecke_ratio")
        .value("small", small.len() as u64)
        .value("large", large.len() as u64)
        .real("avg_small", a)
        .real("avg_large", b)
        .real("ratio", a / b)
        .real("factor", factor)
        .with_pass(!small.is_empty() && !large.is_empty() && a >= factor * b))
}

fn aq_oracle(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let n: usize = p.get("n", 1)?;
    let polys: u64 = p.get("polys", 50)?;
    let terms: usize = p.get("terms", 5)?;
    let max_freq: i64 = p.get("max_freq", 3)?;
    let seed = ctx.seed("aq oracle")?;
    p.range("q", "2..12")?
        .iter()
        .map(|&q| {
            let mut g = rng::stream(seed, q);
            let fs: Vec<TrigPoly> = (0..polys).map(|_| TrigPoly::random(&mut g, n, terms, max_freq)).collect();
            let errs: Vec<f64> = fs
                .par_iter()
                .map(|f| Ok(rel_err(horosphere::aq_expand(f, q)?, horosphere::aq_direct(f, q)?)))
                .collect::<Result<_>>()?;
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            Ok(ResultRecord::new("equi.aq_oracle")
                .param("n", n)
                .param("q", q)
                .value("cases", polys)
                .real("max_rel_err", worst)
                .with_pass(worst <= REL_TOL))
        })
        .collect()
}

/// Largest `max_i |b_i| * |B^{-1}|_F` accepted by [`random_lattice`].
const MAX_CONDITION: f64 = 8.0;

/// Random unimodular lattice `I + E` with entries of `E` in `(-0.6, 0.6)`, normalized and redrawn
/// until `max_i |b_i| * |B^{-1}|_F <= MAX_CONDITION` so the enumeration oracle stays small.
pub fn random_lattice<G: Rng>(g: &mut G, d: usize) -> Result<LatticeBasis> {
    loop {
        let rows: Vec<f64> = (0..d * d).map(|k| (k / d == k % d) as u8 as f64 + g.gen_range(-0.6..0.6)).collect();
        let Ok(l) = LatticeBasis::normalized(d, rows) else { continue };
        let Some(inv) = horo_core::real::inverse(l.rows(), d) else { continue };
        let longest = (0..d).map(|i| horo_core::real::norm2(l.row(i))).fold(0.0, f64::max);
        if longest * horo_core::real::norm2(&inv) <= MAX_CONDITION {
            return Ok(l);
        }
    }
}

/// `gon`: successive minima battery (`minima`), `Phi` scaling and oracle (`phi`), Siegel means
/// (`siegel`) and the Minkowski ratio band (`minkowski`).
pub fn gon(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let mut out = Vec::new();
    for check in p.list("check", "minima") {
        match check.as_str() {
            "minima" => out.extend(gon_minima(ctx)?),
            "phi" => out.extend(gon_phi(ctx)?),
            "siegel" => {
                let samples: u64 = p.get("samples", 100_000)?;
                let seed = ctx.seed("siegel check")?;
                for name in p.list("density", "ball,box,rational") {
                    let rho = match name.as_str() {
                        "ball" => Density::Ball { r: p.get("radius", 2.0)? },
                        "box" => Density::Box { lo: [0.0, 0.0], hi: [1.0, 3.0] },
                        "rational" => Density::Rational { a: 1.0, b: 1.0, kappa: p.get("kappa", 4.0)? },
                        other => return Err(invalid(format!("unknown density {other:?}"))),
                    };
                    let r = geomnum::siegel_check_d2(&rho, samples, seed)?;
                    out.push(
                        ResultRecord::new("gon.siegel")
                            .param("density", name)
                            .value("check", r.check)
                            .value("samples", r.samples)
                            .real("mean", r.mean)
                            .real("target", r.target)
                            .real("stderr", r.stderr)
                            .with_pass(r.pass),
                    );
                }
            }
            "minkowski" => {
                let samples: u64 = p.get("samples", 100)?;
                let seed = ctx.seed("minkowski scan")?;
                let mut g = rng::stream(seed, 0);
                let lats: Vec<LatticeBasis> = (0..samples).map(|_| geomnum::haar_sample_sl2(&mut g)).collect();
                for r in p.range("radius_tenths", "1,10,100")? {
                    let rr = r as f64 / 10.0;
                    let ratios: Vec<f64> =
                        lats.par_iter().map(|l| Ok(geomnum::minkowski_ratio(l, rr)?)).collect::<Result<_>>()?;
                    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = ratios.iter().cloned().fold(0.0, f64::max);
                    out.push(
                        ResultRecord::new("gon.minkowski")
                            .param("radius", rr)
                            .value("samples", samples)
                            .real("min_ratio", lo)
                            .real("max_ratio", hi)
                            .with_pass(lo >= 0.1 && hi <= 10.0),
                    );
                }
            }
            other => return Err(invalid(format!("unknown gon check {other:?}"))),
        }
    }
    Ok(out)
}

fn gon_minima(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let cases: u64 = ctx.params.get("cases", 20)?;
    let seed = ctx.seed("minima battery")?;
    let mut g = rng::stream(seed, 1);
    let mut out = Vec::new();
    for k in 0..cases {
        let d = 2 + (k % 3) as usize;
        let l = random_lattice(&mut g, d)?;
        let fast = geomnum::successive_minima(&l)?;
        let slow = geomnum::successive_minima_bruteforce(&l, 50_000_000)?;
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let rot = geomnum::random_rotation(&mut g, d);
        let turned = geomnum::successive_minima(&l.transformed(&rot)?)?;
        let rot_err = fast.iter().zip(&turned).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        out.push(
            ResultRecord::new("gon.minima")
                .param("case", k)
                .param("d", d)
                .value("minima", fast.clone())
                .real("oracle_err", err)
                .real("rotation_err", rot_err)
                .with_pass(fast.len() == d && slow.len() == d && err <= 1e-9 && rot_err <= 1e-9),
        );
    }
    Ok(out)
}

fn gon_phi(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let seed = ctx.seed("phi scaling")?;
    let mut g = rng::stream(seed, 2);
    let mut out = Vec::new();
    let z2 = LatticeBasis::standard(2);
    let (v, _) = geomnum::phi_truncated(&z2, 1, 1.0, 1.0, 3.0, 1000.0)?;
    let oracle: f64 = (1..=1000u32).map(|k| 8.0 * k as f64 / (1.0 + (k as f64).powi(3))).sum();
    let err = (v - oracle).abs() / oracle;
    out.push(ResultRecord::new("gon.phi_oracle").real("value", v).real("oracle", oracle).real("rel_err", err).with_pass(err <= REL_TOL));
    for k in 0..p.get::<u64>("cases", 5)? {
        let l = geomnum::haar_sample_sl2(&mut g);
        let n = 1 + (k % 2) as usize;
        let (kappa, tol) = (2.0 * n as f64 + 4.0, 1e-4);
        let r = g.gen_range(0.5..4.0);
        let base = geomnum::phi_eval(&l, n, 1.0, 2.0, kappa, tol)?;
        let (plain, _) = geomnum::phi_truncated(&l, n, 1.0, 2.0, kappa, base.r_cut)?;
        let (scaled, _) = geomnum::phi_truncated(&l, n, r, 2.0 * r, kappa, base.r_cut)?;
        let err = (scaled * r - plain).abs() / plain;
        out.push(
            ResultRecord::new("gon.phi_scaling")
                .param("case", k)
                .param("n", n)
                .real("r", r)
                .real("value", base.value)
                .real("tail_bound", base.tail_bound)
                .real("pointwise_ratio", base.pointwise_ratio)
                .real("rel_err", err)
                .with_pass(err <= REL_TOL),
        );
    }
    Ok(out)
}

/// `rank`: exact `N_{p,b}` with both lower bounds for every legal `b`, and the naive recount.
pub fn rank(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let (d, n, r): (usize, usize, usize) = (p.get("d", 3)?, p.get("n", 2)?, p.get("r", 1)?);
    let primes = p.range("p", "3,5,7,11")?;
    let naive = p.get("naive", true)?;
    let scan = rankcount::ratio_scan(d, n, r, &primes, ctx.cap)?;
    let mut out = Vec::new();
    for row in &scan.rows {
        let mut rec = ResultRecord::new("rank.count")
            .param("d", d)
            .param("n", n)
            .param("r", r)
            .param("p", row.p)
            .param("b", row.b)
            .count("count", row.count)
            .real("envelope", row.envelope)
            .real("ratio", row.ratio)
            .value("lower_ok", row.lower_ok);
        let mut pass = row.lower_ok;
        if naive {
            let hist = rankcount::count_by_rank_naive(d, n, row.p, row.b, ctx.cap)?;
            rec = rec.count("naive", hist[r]);
            pass &= hist[r] == row.count;
        }
        out.push(rec.with_pass(pass));
    }
    if !scan.rows.is_empty() {
        out.push(
            ResultRecord::new("rank.scan")
                .param("d", d)
                .param("n", n)
                .param("r", r)
                .real("min_ratio", scan.min_ratio)
                .real("max_ratio", scan.max_ratio)
                .real("floor", 2f64.powi(-((d * (n - r)) as i32)))
                .with_pass(scan.min_ok),
        );
    }
    Ok(out)
}

fn random_box<G: Rng>(g: &mut G, d: usize, around_origin: bool) -> (Vec<f64>, Vec<f64>) {
    let lo: Vec<f64> = (0..d)
        .map(|_| if around_origin { -g.gen_range(0.05..1.2) } else { g.gen_range(-1.5..1.0) })
        .collect();
    let hi = lo.iter().map(|l| if around_origin { g.gen_range(0.05..1.2) } else { l + g.gen_range(0.1..2.0) }).collect();
    (lo, hi)
}

/// One case of the grid identity battery: a random primitive `R`, a random `b` and `boxes` random
/// boxes, each counted directly and through the grid.
pub fn grid_case(seed: u64, case: u64, boxes: usize) -> Result<ResultRecord> {
    let mut g = rng::stream(seed, 1_000 + case);
    let d = g.gen_range(1..=3usize);
    let n = g.gen_range(1..=d);
    let q = g.gen_range(2..=20u64);
    let primes: Vec<u64> = arith::factorize(q).into_iter().map(|(p, _)| p).collect();
    let r = loop {
        let m = rng::random_matrix(&mut g, d, n, q);
        if primitive::primitive_residues(m.entries(), d, n, &primes) {
            break m;
        }
    };
    let b: Vec<i64> = (0..n).map(|_| g.gen_range(0..q as i64)).collect();
    let zero = b.iter().all(|&x| x == 0);
    let grid: SolutionGrid = smallsol::grid_construct(&r, &b)?;
    let mut direct = Vec::new();
    let mut via_grid = Vec::new();
    for _ in 0..boxes {
        let (lo, hi) = random_box(&mut g, d, zero);
        let omega = BoxRegion::single(lo, hi)?;
        let inst = smallsol::CongruenceInstance::new(r.clone(), b.clone(), omega.clone())?;
        direct.push(smallsol::count_solutions(&inst)?);
        via_grid.push(grid.count_in(&omega)?);
    }
    Ok(ResultRecord::new("small.grid")
        .param("case", case)
        .param("d", d)
        .param("n", n)
        .param("q", q)
        .value("r", r.entries().to_vec())
        .value("b", b)
        .value("direct", direct.clone())
        .value("grid", via_grid.clone())
        .with_pass(direct == via_grid))
}

/// `small`: grid identity battery (`grid`), solution histograms (`hist`), limit-law comparison
/// (`limit`) and the square inverse experiment (`inverse`).
pub fn small(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let mut out = Vec::new();
    for check in p.list("check", "grid") {
        match check.as_str() {
            "grid" => {
                let seed = ctx.seed("grid battery")?;
                let cases: u64 = p.get("cases", 100)?;
                let boxes: usize = p.get("boxes", 5)?;
                let recs: Vec<ResultRecord> =
                    (0..cases).into_par_iter().map(|c| grid_case(seed, c, boxes)).collect::<Result<_>>()?;
                out.extend(recs);
            }
            "hist" => {
                let (d, n): (usize, usize) = (p.get("d", 2)?, p.get("n", 1)?);
                let omega = parse_boxes(p.str_or("omega", "-1,-1:1,1"))?;
                let b = int_list(p.str_or("b", "1"))?;
                let r_max: usize = p.get("r_max", 6)?;
                let mode = match p.str_or("mode", "exhaustive") {
                    "exhaustive" => HistMode::Exhaustive,
                    "sample" => HistMode::Sample { samples: p.get("samples", 10_000)?, seed: ctx.seed("sampled histogram")? },
                    other => return Err(invalid(format!("unknown histogram mode {other:?}"))),
                };
                for q in p.range("q", "25,50,100")? {
                    let ens = Ensemble::new(d, n, q, torus_region(p, d * n)?)?;
                    let h = smallsol::hist_distribution(&ens, &omega, &b, r_max, mode)?;
                    for (r, &c) in h.counts.iter().enumerate() {
                        out.push(
                            ResultRecord::new("small.hist")
                                .param("q", q)
                                .param("r", if r > r_max { "overflow".to_string() } else { r.to_string() })
                                .value("count", c)
                                .real("prob", h.prob(r)),
                        );
                    }
                    out.push(
                        ResultRecord::new("small.mean")
                            .param("q", q)
                            .value("total", h.total)
                            .real("mean", h.mean())
                            .real("volume", omega.volume()),
                    );
                }
            }
            "limit" => out.extend(small_limit(ctx)?),
            "inverse" => {
                let n: usize = p.get("n", 1)?;
                let omega = parse_boxes(p.str_or("omega", "0:0.5"))?;
                let b = int_list(p.str_or("b", "1"))?;
                for q in p.range("q", "2..50")? {
                    let f = smallsol::inverse_experiment(n, q, &torus_region(p, n * n)?, &omega, &b)?;
                    out.push(
                        ResultRecord::new("small.inverse")
                            .param("n", n)
                            .param("q", q)
                            .value("hits", f.hits)
                            .value("total", f.total)
                            .real("fraction", f.fraction)
                            .real("volume", omega.volume()),
                    );
                }
            }
            other => return Err(invalid(format!("unknown small check {other:?}"))),
        }
    }
    Ok(out)
}

fn torus_region(p: &Params, dim: usize) -> Result<BoxRegion> {
    match p.raw("u") {
        None => Ok(smallsol::full_torus(dim)),
        Some(s) => parse_boxes(s),
    }
}

fn int_list(s: &str) -> Result<Vec<i64>> {
    s.split(',').map(|t| t.trim().parse().map_err(|_| invalid(format!("bad integer {t:?}")))).collect()
}

/// Exhaustive `P_q(r)` at `d = 2`, `n = 1` against the Monte-Carlo limit, and the mean count at
/// the moduli `mean_q`.
pub fn small_limit(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let p = &ctx.params;
    let omega = parse_boxes(p.str_or("omega", "-1,-1:1,1"))?;
    let beta: i64 = p.get("b", 1)?;
    let r_max: usize = p.get("r_max", 6)?;
    let samples: u64 = p.get("samples", 200_000)?;
    let mean_tol: f64 = p.get("mean_tol", 0.05)?;
    let mc = smallsol::limit_constant_mc(&omega, beta, r_max, samples, ctx.seed("limit law")?)?;
    let vol = omega.volume();
    let mut out = vec![ResultRecord::new("small.limit_mc")
        .value("samples", samples)
        .value("probs", mc.hist.probs())
        .real("mean", mc.mean)
        .real("mean_stderr", mc.mean_stderr)
        .real("volume", vol)];
    for q in p.range("q", "101,211")? {
        let ens = Ensemble::new(2, 1, q, smallsol::full_torus(2))?;
        let h = smallsol::hist_distribution(&ens, &omega, &[beta], r_max, HistMode::Exhaustive)?;
        for r in 0..=r_max {
            let (c, se) = mc.constant(r);
            let combined = se + h.binomial_stderr(r);
            let diff = (h.prob(r) - c).abs();
            out.push(
                ResultRecord::new("small.limit")
                    .param("q", q)
                    .param("r", r)
                    .real("p_q", h.prob(r))
                    .real("c_mc", c)
                    .real("combined_stderr", combined)
                    .real("z", diff / combined)
                    .with_pass(diff <= 3.0 * combined),
            );
        }
    }
    for q in p.range("mean_q", "50,101,211")? {
        let ens = Ensemble::new(2, 1, q, smallsol::full_torus(2))?;
        let h = smallsol::hist_distribution(&ens, &omega, &[beta], r_max, HistMode::Exhaustive)?;
        let rel = (h.mean() - vol).abs() / vol;
        out.push(
            ResultRecord::new("small.limit_mean")
                .param("q", q)
                .real("mean", h.mean())
                .real("volume", vol)
                .real("rel_dev", rel)
                .with_pass(q < 50 || rel <= mean_tol),
        );
    }
    Ok(out)
}

/// `selftest`: small instances of every subcommand.
pub fn selftest(ctx: &Ctx) -> Result<Vec<ResultRecord>> {
    let seed = ctx.seed.unwrap_or(1);
    let mut out = Vec::new();
    for (d, n) in [(2, 1), (3, 1), (2, 2), (3, 2), (3, 3)] {
        out.push(prim_count(d, n, 6, ctx.cap)?);
        out.push(prim_bijection(d, n, 4, ctx.cap)?);
    }
    let mut kp = Params::default();
    kp.set("q", "6,8");
    kp.set("samples", "5");
    kp.set("check", "crt");
    out.extend(kloos(&Ctx::new(kp, Some(seed), ctx.cap))?);
    let mut rp = Params::default();
    rp.set("p", "3,5");
    out.extend(rank(&Ctx::new(rp, None, ctx.cap))?);
    let mut gp = Params::default();
    gp.set("cases", "6");
    out.extend(gon(&Ctx::new(gp, Some(seed), ctx.cap))?);
    for c in 0..10 {
        out.push(grid_case(seed, c, 3)?);
    }
    Ok(out)
}
