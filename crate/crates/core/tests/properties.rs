use equilab::config::Config;
use equilab::covering::{covering_number, PointCloud};
use equilab::flow::{self, Mat2};
use equilab::localfield::{LocalField, Padic, Reals, Scale};
use equilab::rep::{self, RepSpace};
use equilab::sumproduct;
use proptest::prelude::*;

fn padic() -> impl Strategy<Value = Padic> {
    (prop::sample::select(vec![2u64, 3, 5, 7]), 2u32..10).prop_map(|(p, k)| Padic::new(p, k).unwrap())
}

fn sl2() -> impl Strategy<Value = Mat2> {
    // products of elementary matrices stay exactly unimodular up to rounding
    (-3.0f64..3.0, -3.0f64..3.0, -2.0f64..2.0).prop_map(|(x, y, t)| Mat2::u(x).mul(&Mat2::a(t)).mul(&Mat2::new(1.0, 0.0, y, 1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn padic_ring_laws(f in padic(), a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let m = f.modulus();
        let (a, b, c) = (a % m, b % m, c % m);
        prop_assert_eq!(f.add(a, b), f.add(b, a));
        prop_assert_eq!(f.mul(a, b), f.mul(b, a));
        prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        prop_assert_eq!(f.add(a, f.neg(a)), 0);
        prop_assert_eq!(f.sub(f.add(a, b), b), a);
    }

    #[test]
    fn padic_abs_multiplicative_below_precision(f in padic(), a in any::<u64>(), b in any::<u64>()) {
        let m = f.modulus();
        let (a, b) = (a % m, b % m);
        prop_assume!(a != 0 && b != 0 && f.valuation(a) + f.valuation(b) < f.precision());
        prop_assert_eq!(f.valuation(f.mul(a, b)), f.valuation(a) + f.valuation(b));
        prop_assert!((f.abs(f.mul(a, b)) - f.abs(a) * f.abs(b)).abs() <= 1e-15);
        // ultrametric inequality
        prop_assert!(f.abs(f.add(a, b)) <= f.abs(a).max(f.abs(b)));
    }

    #[test]
    fn format_parse_round_trip(f in padic(), a in any::<u64>(), x in -1e6f64..1e6) {
        let a = a % f.modulus();
        prop_assert_eq!(f.parse(&f.format(a)).unwrap(), a);
        prop_assert_eq!(Reals.parse(&Reals.format(x)).unwrap(), x);
    }

    #[test]
    fn padic_unipotent_homomorphism(f in padic(), r in any::<u64>(), s in any::<u64>(), d in 1usize..4) {
        let (r, s) = (r % f.modulus(), s % f.modulus());
        let lhs = rep::mat_mul(&f, &rep::u_matrix(&f, r, d), &rep::u_matrix(&f, s, d));
        prop_assert_eq!(lhs, rep::u_matrix(&f, f.add(r, s), d));
        prop_assert_eq!(rep::det(&f, &rep::u_matrix(&f, r, d)), 1);
    }

    #[test]
    fn covering_number_monotone_and_subadditive(
        f in padic(),
        pts in prop::collection::vec((any::<u64>(), any::<u64>()), 1..200),
        split in any::<prop::sample::Index>(),
    ) {
        let m = f.modulus();
        let pts: Vec<Vec<u64>> = pts.into_iter().map(|(a, b)| vec![a % m, b % m]).collect();
        let cut = split.index(pts.len());
        let all = PointCloud::from_points(f, 2, pts.clone());
        let a = PointCloud::from_points(f, 2, pts[..cut].to_vec());
        let b = PointCloud::from_points(f, 2, pts[cut..].to_vec());
        let mut prev = 0;
        for k in 0..=f.precision() {
            let s = Scale::ladder(k);
            let n = covering_number(&all, s);
            prop_assert!(n >= prev && n <= pts.len());
            prop_assert!(n <= covering_number(&a, s) + covering_number(&b, s));
            prev = n;
        }
    }

    #[test]
    fn real_covering_is_translation_stable(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..300),
        k in 0u32..6,
    ) {
        // integer multiples of delta shift every cell index by the same amount
        let delta = (-(k as f64)).exp();
        let c = PointCloud::from_points(Reals, 2, pts.iter().map(|&(x, y)| vec![x, y]));
        let shifted = PointCloud::from_points(Reals, 2, pts.iter().map(|&(x, y)| vec![x + 7.0 * delta, y - 3.0 * delta]));
        let n = covering_number(&c, Scale::ladder(k));
        let ns = covering_number(&shifted, Scale::ladder(k));
        // floating-point shifts may move a point across a cell wall
        prop_assert!(n.abs_diff(ns) <= pts.len() / 10 + 2);
    }

    #[test]
    fn sum_cover_at_least_each_summand(
        f in padic(),
        p1 in prop::collection::vec(any::<u64>(), 1..60),
        p2 in prop::collection::vec(any::<u64>(), 1..60),
        r in any::<u64>(),
        k in 0u32..4,
    ) {
        let m = f.modulus();
        let k = k.min(f.precision());
        let t1 = PointCloud::from_points(f, 1, p1.iter().map(|&a| vec![a % m]));
        let t2 = PointCloud::from_points(f, 1, p2.iter().map(|&a| vec![a % m]));
        let s = Scale::ladder(k);
        let n = sumproduct::sum_covering(&t1, &t2, r % m, s, u64::MAX, true, 0).unwrap().count;
        // x + r y with y fixed is a translate of t1
        prop_assert!(n >= covering_number(&t1, s));
        prop_assert!(n <= covering_number(&t1, s) * covering_number(&t2, s));
    }

    #[test]
    fn reduction_lands_in_fundamental_domain(g in sl2()) {
        let (h, gamma) = flow::reduce(&g).unwrap();
        prop_assert!(flow::in_fundamental_domain(flow::base_point(&h), flow::FD_TOL));
        prop_assert_eq!(gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0], 1);
        prop_assert!(g.mul(&Mat2::from_int(gamma)).max_abs_diff(&h) <= 1e-6 * (1.0 + g.frobenius()).powi(4));
    }

    #[test]
    fn phi_action_preserves_shape(n in 1usize..50, r in -1.0f64..1.0, seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = rep::PhiCloud::sample_uniform(Reals, RepSpace::new(2, 2), n, &mut rng);
        let moved = rep::apply_group(&rep::u_matrix(&Reals, r, 2), &c).unwrap();
        let back = rep::apply_group(&rep::u_matrix(&Reals, -r, 2), &moved).unwrap();
        prop_assert_eq!(back.len(), n);
        for i in 0..n {
            for (a, b) in back.point(i).iter().zip(c.point(i)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn config_values_round_trip(keys in prop::collection::btree_map("[a-z][a-z_]{0,8}", -1000i64..1000, 1..8)) {
        let text: String = keys.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let c = Config::parse(&text).unwrap();
        for (k, v) in &keys {
            prop_assert_eq!(c.req::<i64>(k).unwrap(), *v);
        }
        prop_assert!(c.unused().is_empty());
    }
}
