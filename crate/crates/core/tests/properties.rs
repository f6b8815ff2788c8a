use horo_core::arith;
use horo_core::geomnum::{self, BoxRegion, LatticeBasis, Region};
use horo_core::horosphere::{self, TestFunction};
use horo_core::kloosterman;
use horo_core::modring::{self, IntMatrix, ModMatrix};
use horo_core::primitive;
use horo_core::rankcount;
use horo_core::rng;
use horo_core::smallsol::{self, Ensemble, HistMode};
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn small_modulus() -> impl Strategy<Value = u64> {
    2u64..=12
}

fn gl_pair(n: usize, q: u64, seed: u64) -> (ModMatrix, ModMatrix) {
    let mut g = rng::stream(seed, q);
    (rng::random_gl(&mut g, n, q), rng::random_gl(&mut g, n, q))
}

fn close(a: num_complex::Complex64, b: num_complex::Complex64) -> bool {
    (a - b).norm() <= 1e-9 * b.norm().max(1.0)
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn inverse_is_an_involution(q in small_modulus(), n in 1usize..=3, seed in any::<u64>()) {
        let (m, _) = gl_pair(n, q, seed);
        let inv = modring::mat_inv_mod(&m).unwrap();
        prop_assert_eq!(modring::mat_inv_mod(&inv).unwrap(), m.clone());
        prop_assert_eq!(m.mul(&inv), ModMatrix::identity(n, q));
    }

    #[test]
    fn count_gl_is_multiplicative(n in 1usize..=3, q1 in 2u64..=30, q2 in 2u64..=30) {
        prop_assume!(arith::gcd(q1, q2) == 1);
        prop_assert_eq!(modring::count_gl(n, q1 * q2), modring::count_gl(n, q1) * modring::count_gl(n, q2));
    }

    #[test]
    fn smith_form_reconstructs(rows in 1usize..=3, cols in 1usize..=3, data in prop::collection::vec(-20i64..=20, 9)) {
        let a = IntMatrix::new(rows, cols, data[..rows * cols].to_vec());
        let s = modring::smith_normal_form(&a).unwrap();
        prop_assert_eq!(s.u.mul(&a).unwrap().mul(&s.v).unwrap(), s.d.clone());
        prop_assert_eq!(s.u.det().unwrap().abs(), 1);
        prop_assert_eq!(s.v.det().unwrap().abs(), 1);
        let diag = s.diagonal();
        for w in diag.windows(2) {
            prop_assert!(w[0] >= 0 && (w[0] == 0 && w[1] == 0 || w[0] != 0 && w[1] % w[0] == 0));
        }
        for p in [2u64, 3, 5, 7] {
            let nz = diag.iter().filter(|&&x| x.rem_euclid(p as i64) != 0).count();
            prop_assert_eq!(a.rank_mod_p(p), nz);
        }
    }

    #[test]
    fn lift_sl_is_exact(q in 2u64..=40, n in 1usize..=3, seed in any::<u64>()) {
        let mut g = rng::stream(seed, 3);
        let m = loop {
            let c = rng::random_gl(&mut g, n, q);
            if c.det() == 1 { break c; }
        };
        let lift = modring::lift_sl(&m).unwrap();
        prop_assert_eq!(lift.det().unwrap(), 1);
        prop_assert_eq!(lift.to_mod(q), m);
    }

    #[test]
    fn kloosterman_symmetries(q in 2u64..=9, n in 1usize..=2, seed in any::<u64>()) {
        let mut g = rng::stream(seed, 5);
        let a = rng::random_matrix(&mut g, n, n, q);
        let b = rng::random_matrix(&mut g, n, n, q);
        let (u, v) = gl_pair(n, q, seed ^ 1);
        let k = kloosterman::kloos_brute(&a, &b).unwrap();
        prop_assert!(k.exact_eq(&kloosterman::kloos_brute(&b, &a).unwrap()));
        prop_assert!(k.exact_eq(&kloosterman::kloos_brute(&a.transpose(), &b.transpose()).unwrap()));
        let (ui, vi) = (modring::mat_inv_mod(&u).unwrap(), modring::mat_inv_mod(&v).unwrap());
        let a2 = u.mul(&a).mul(&v);
        let b2 = vi.mul(&b).mul(&ui);
        prop_assert!(k.exact_eq(&kloosterman::kloos_brute(&a2, &b2).unwrap()));
        prop_assert_eq!(kloosterman::count_c(&a, &b).unwrap(), kloosterman::count_c(&a2, &b2).unwrap());
        prop_assert!(close(kloosterman::kloos_crt(&a, &b).unwrap().value(), k.value()));
    }

    #[test]
    fn anticommutant_dimension_is_a_conjugacy_invariant(p in prop::sample::select(vec![2u64, 3, 5]), n in 1usize..=3, seed in any::<u64>()) {
        let mut g = rng::stream(seed, 7);
        let c = rng::random_matrix(&mut g, n, n, p);
        let t = rng::random_gl(&mut g, n, p);
        let conj = t.mul(&c).mul(&modring::mat_inv_mod(&t).unwrap());
        prop_assert_eq!(kloosterman::dim_anticommutant(&c, false).unwrap(), kloosterman::dim_anticommutant(&conj, false).unwrap());
    }

    #[test]
    fn primitive_count_is_multiplicative(d in 1usize..=3, n in 1usize..=3, q1 in 2u64..=20, q2 in 2u64..=20) {
        prop_assume!(n <= d && arith::gcd(q1, q2) == 1);
        prop_assert_eq!(
            primitive::primitive_count(d, n, q1 * q2),
            primitive::primitive_count(d, n, q1) * primitive::primitive_count(d, n, q2)
        );
    }

    #[test]
    fn completion_satisfies_both_conditions(q in 2u64..=30, d in 2usize..=4, seed in any::<u64>()) {
        let mut g = rng::stream(seed, 9);
        let n = 1 + (seed as usize % (d - 1));
        let primes: Vec<u64> = arith::factorize(q).into_iter().map(|(p, _)| p).collect();
        let r = loop {
            let m = rng::random_matrix(&mut g, d, n, q);
            if primitive::primitive_residues(m.entries(), d, n, &primes) { break m; }
        };
        let eta = primitive::complete_to_sl(&r).unwrap();
        prop_assert!(primitive::verify_completion(&eta, &r).unwrap());
    }

    #[test]
    fn weyl_sums_are_periodic(q in 2u64..=15, k in prop::collection::vec(-30i64..=30, 2), shift in prop::collection::vec(-3i64..=3, 2)) {
        let a = IntMatrix::new(2, 1, k.clone());
        let b = IntMatrix::new(2, 1, k.iter().zip(&shift).map(|(x, s)| x + s * q as i64).collect());
        let s = horosphere::weyl_sum(2, 1, q, &a).unwrap();
        prop_assert!(close(s, horosphere::weyl_sum(2, 1, q, &b).unwrap()));
        prop_assert!(close(horosphere::weyl_joint(2, 1, q, &a, &IntMatrix::zeros(1, 2)).unwrap(), s));
        let one = horosphere::weyl_joint(2, 1, q, &IntMatrix::zeros(2, 1), &IntMatrix::zeros(1, 2)).unwrap();
        prop_assert!(close(one, num_complex::Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn hecke_orbits_reduce_into_the_domain(m in 1u64..=40, x in -2.0f64..2.0, y in 0.05f64..3.0) {
        let orbit = horosphere::hecke_points(m, (x, y)).unwrap();
        prop_assert_eq!(orbit.points.len() as u64, arith::sigma1(m));
        for &(px, py) in &orbit.points {
            prop_assert!(px.abs() <= 0.5 + 1e-12 && px * px + py * py >= 1.0 - 1e-12);
        }
        prop_assert_eq!(horosphere::hecke_average(&TestFunction::Constant { c: 1.0 }, m, (x, y)).unwrap(), 1.0);
    }
}

fn lattice(d: usize, seed: u64) -> LatticeBasis {
    let mut g = rng::stream(seed, 11);
    loop {
        let rows: Vec<f64> = (0..d * d)
            .map(|k| (k / d == k % d) as u8 as f64 + rand::Rng::gen_range(&mut g, -0.6..0.6))
            .collect();
        if let Ok(l) = LatticeBasis::normalized(d, rows) {
            return l;
        }
    }
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn minima_sorted_and_rotation_invariant(d in 2usize..=4, seed in any::<u64>()) {
        let l = lattice(d, seed);
        let m = geomnum::successive_minima(&l).unwrap();
        prop_assert_eq!(m.len(), d);
        prop_assert!(m.windows(2).all(|w| w[0] <= w[1]));
        let rot = geomnum::random_rotation(&mut rng::stream(seed, 12), d);
        let m2 = geomnum::successive_minima(&l.transformed(&rot).unwrap()).unwrap();
        for (a, b) in m.iter().zip(&m2) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let prod: f64 = m.iter().product();
        prop_assert!(m[0].powi(d as i32) <= prod * (1.0 + 1e-12));
    }

    #[test]
    fn counts_grow_with_radius(d in 2usize..=3, seed in any::<u64>(), r in 0.1f64..4.0, dr in 0.0f64..2.0) {
        let l = lattice(d, seed);
        let a = geomnum::count_points(&l, None, &Region::Ball(r)).unwrap();
        let b = geomnum::count_points(&l, None, &Region::Ball(r + dr)).unwrap();
        prop_assert!(a <= b);
    }

    #[test]
    fn phi_scales_inversely(seed in any::<u64>(), r in 0.2f64..5.0, n in 1usize..=2) {
        let l = geomnum::haar_sample_sl2(&mut rng::stream(seed, 13));
        let kappa = 2.0 * n as f64 + 3.0;
        let (a, _) = geomnum::phi_truncated(&l, n, 1.0, 3.0, kappa, 6.0).unwrap();
        let (b, _) = geomnum::phi_truncated(&l, n, r, 3.0 * r, kappa, 6.0).unwrap();
        prop_assert!((b * r - a).abs() <= 1e-9 * a);
    }

    #[test]
    fn rank_counts(d in 2usize..=3, n in 1usize..=2, p in prop::sample::select(vec![3u64, 5, 7]), b in 1u64..=3) {
        prop_assume!(n < d && b <= (p - 1) / 2);
        let hist = rankcount::count_by_rank_naive(d, n, p, b, 1 << 30).unwrap();
        let total: u128 = hist.iter().sum();
        prop_assert_eq!(total, ((2 * b + 1) as u128).pow((d * n) as u32));
        for (r, &naive) in hist.iter().enumerate().take(n).skip(1) {
            let pruned = rankcount::count_rank_general(d, n, r, p, b, 1 << 30).unwrap();
            prop_assert_eq!(pruned, naive);
            if b > 1 {
                prop_assert!(rankcount::count_rank_general(d, n, r, p, b - 1, 1 << 30).unwrap() <= pruned);
            }
            let rep = rankcount::bound_report(&rankcount::RankCountQuery::new(d, n, r, p, b).unwrap(), pruned).unwrap();
            prop_assert!(rep.ok());
        }
    }

    #[test]
    fn grid_identity(seed in any::<u64>()) {
        let mut g = rng::stream(seed, 17);
        let d = rand::Rng::gen_range(&mut g, 1..=3usize);
        let n = rand::Rng::gen_range(&mut g, 1..=d);
        let q = rand::Rng::gen_range(&mut g, 2..=15u64);
        let primes: Vec<u64> = arith::factorize(q).into_iter().map(|(p, _)| p).collect();
        let r = loop {
            let m = rng::random_matrix(&mut g, d, n, q);
            if primitive::primitive_residues(m.entries(), d, n, &primes) { break m; }
        };
        let b: Vec<i64> = (0..n).map(|_| rand::Rng::gen_range(&mut g, 0..q as i64)).collect();
        let lo: Vec<f64> = (0..d).map(|_| -rand::Rng::gen_range(&mut g, 0.1..1.5)).collect();
        let hi: Vec<f64> = (0..d).map(|_| rand::Rng::gen_range(&mut g, 0.1..1.5)).collect();
        let omega = BoxRegion::single(lo, hi).unwrap();
        let inst = smallsol::CongruenceInstance::new(r.clone(), b.clone(), omega.clone()).unwrap();
        let direct = smallsol::count_solutions(&inst).unwrap();
        prop_assert_eq!(direct, smallsol::grid_construct(&r, &b).unwrap().count_in(&omega).unwrap());
        if b.iter().all(|&x| x == 0) {
            prop_assert!(direct >= 1);
        }
    }

    #[test]
    fn histograms_are_probability_vectors(q in 3u64..=30, s in 0.2f64..1.0, grow in 0.0f64..0.5) {
        let ens = Ensemble::new(2, 1, q, smallsol::full_torus(2)).unwrap();
        let small = BoxRegion::single(vec![-s, -s], vec![s, s]).unwrap();
        let big = BoxRegion::single(vec![-s - grow, -s - grow], vec![s + grow, s + grow]).unwrap();
        let h = smallsol::hist_distribution(&ens, &small, &[1], 6, HistMode::Exhaustive).unwrap();
        let total: f64 = h.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(h.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
        let h2 = smallsol::hist_distribution(&ens, &big, &[1], 6, HistMode::Exhaustive).unwrap();
        prop_assert!(h.mean() <= h2.mean());
    }
}

#[test]
fn gl_enumeration_lengths() {
    for n in 1..=2 {
        for q in 1..=16 {
            assert_eq!(modring::enumerate_gl(n, q, 1 << 30).unwrap().count() as u128, modring::count_gl(n, q), "n={n} q={q}");
        }
    }
    for q in [2, 3] {
        assert_eq!(modring::enumerate_gl(3, q, 1 << 30).unwrap().count() as u128, modring::count_gl(3, q));
    }
}

#[test]
fn parametrization_round_trips() {
    for (d, n, q) in [(2, 1, 6), (3, 1, 4), (3, 2, 3), (2, 2, 5)] {
        let param = primitive::param_bij(d, n, q).unwrap();
        let gl = modring::count_gl(n, q);
        assert_eq!(param.reps().len() as u128 * gl, primitive::primitive_count(d, n, q));
        for c in 0..param.reps().len() {
            for u in modring::enumerate_gl(n, q, 1 << 20).unwrap() {
                let r = param.forward(c, &u).unwrap();
                assert!(primitive::is_primitive(&r));
                assert_eq!(param.inverse(&r).unwrap(), (c, u));
            }
        }
    }
}

#[test]
fn sampled_and_exhaustive_histograms_agree() {
    let ens = Ensemble::new(2, 1, 29, smallsol::full_torus(2)).unwrap();
    let omega = BoxRegion::single(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let exact = smallsol::hist_distribution(&ens, &omega, &[1], 6, HistMode::Exhaustive).unwrap();
    let sampled =
        smallsol::hist_distribution(&ens, &omega, &[1], 6, HistMode::Sample { samples: 20_000, seed: 3 }).unwrap();
    for r in 0..=7 {
        let se = sampled.binomial_stderr(r).max(1e-3);
        assert!((exact.prob(r) - sampled.prob(r)).abs() <= 3.0 * se, "r={r}");
    }
}
