use proptest::prelude::*;

use henren::certify::{apriori_distortion, theorem_b_check, TheoremBConstants};
use henren::maps::NormalizationAffine;
use henren::regularity::{backward_regular, forward_regular, horizontal_forward_regular};
use henren::renorm2d::{renorm_sequence, RenormSequence, SequenceOptions};
use henren::search::{cascade_points, realize_combinatorics, FamilySlice, SearchOptions};
use henren::unimodal::{ren_type, renormalizable};
use henren::{Direction, Interval, MapSpec, Point2, RenType, UnimodalMap};

fn quiet() -> SequenceOptions {
    SequenceOptions { certify: false, ..Default::default() }
}

/// `log L` for the quotient `exp(k q)` at steps `1..=m`.
fn closed_form(qs: &[f64], m: usize, eps: f64, lambda: f64) -> f64 {
    let ll = lambda.ln();
    let mut best: f64 = 0.0;
    for &q in qs {
        for k in 1..=m {
            let k = k as f64;
            best = best.max((1.0 + eps) * k * ll - k * q).max(k * q - (1.0 - eps) * k * ll);
        }
    }
    best.exp()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn central_jacobian(m: &MapSpec, p: Point2, h: f64) -> [[f64; 2]; 2] {
    let d = |dx: f64, dy: f64| m.eval(Point2::new(p.x + dx, p.y + dy)).unwrap();
    let (xp, xm, yp, ym) = (d(h, 0.0), d(-h, 0.0), d(0.0, h), d(0.0, -h));
    [[(xp.x - xm.x) / (2.0 * h), (yp.x - ym.x) / (2.0 * h)], [(xp.y - xm.y) / (2.0 * h), (yp.y - ym.y) / (2.0 * h)]]
}

fn seq_at(a: f64, b: f64, depth: usize) -> RenormSequence {
    renorm_sequence(&MapSpec::henon(a, b), depth, None, &quiet())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diagonal_forward_closed_form(d0 in 0.3f64..3.0, d1 in 0.02f64..1.5, eps in 0.01f64..0.6, lambda in 0.05f64..0.95, m in 1usize..24) {
        let l = forward_regular(&MapSpec::diagonal(d0, d1), Point2::new(0.0, 0.0), Direction::vertical(), m, eps, lambda).unwrap();
        let want = closed_form(&[d1.ln(), d1.ln() - d0.ln()], m, eps, lambda);
        prop_assert!(rel(l, want) < 1e-12, "{} vs {}", l, want);
    }

    #[test]
    fn diagonal_backward_closed_form(d0 in 0.3f64..3.0, d1 in 0.02f64..1.5, eps in 0.01f64..0.6, lambda in 0.05f64..0.95, m in 1usize..24) {
        let l = backward_regular(&MapSpec::diagonal(d0, d1), Point2::new(0.0, 0.0), Direction::horizontal(), m, eps, lambda).unwrap();
        // ‖DF^{-k} e_h‖ = d0^{-k} and Jac F^{-k} = (d0 d1)^{-k}
        let want = closed_form(&[d0.ln(), d0.ln() - d1.ln()], m, eps, lambda);
        prop_assert!(rel(l, want) < 1e-12, "{} vs {}", l, want);
    }

    #[test]
    fn diagonal_horizontal_closed_form(d0 in 0.3f64..3.0, d1 in 0.02f64..1.5, eps in 0.01f64..0.6, lambda in 0.05f64..0.95, m in 1usize..24) {
        let l = horizontal_forward_regular(&MapSpec::diagonal(d0, d1), Point2::new(0.0, 0.0), Direction::horizontal(), m, eps, lambda).unwrap();
        let want = closed_form(&[d1.ln(), d1.ln() - d0.ln()], m, eps, lambda);
        prop_assert!(rel(l, want) < 1e-12, "{} vs {}", l, want);
    }

    #[test]
    fn regularity_is_monotone(a in -1.5f64..-1.1, b in 0.05f64..0.3, x in -0.5f64..0.5, eps in 0.05f64..0.4, m in 1usize..8) {
        let map = MapSpec::henon(a, b);
        let p = Point2::new(x, 0.0);
        let e = Direction::vertical();
        let l = forward_regular(&map, p, e, m, eps, 0.5).unwrap();
        prop_assert!(l >= 1.0);
        prop_assert!(forward_regular(&map, p, e, m, eps + 0.1, 0.5).unwrap() <= l * (1.0 + 1e-12));
        prop_assert!(forward_regular(&map, p, e, m + 1, eps, 0.5).unwrap() >= l * (1.0 - 1e-12));
    }

    #[test]
    fn henon_jacobian_matches_finite_differences(a in -1.8f64..-0.8, b in 0.01f64..0.4, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let m = MapSpec::henon(a, b);
        let p = Point2::new(x, y);
        let j = m.jacobian(p).unwrap();
        let fd = central_jacobian(&m, p, 1e-6);
        for r in 0..2 {
            for c in 0..2 {
                prop_assert!((j[(r, c)] - fd[r][c]).abs() < 1e-7);
            }
        }
        prop_assert!((j.determinant() - b).abs() < 1e-14);
    }

    #[test]
    fn henon_inverse_round_trip(a in -1.8f64..-0.8, b in 0.01f64..0.4, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let m = MapSpec::henon(a, b);
        let p = Point2::new(x, y);
        let q = m.inverse(m.eval(p).unwrap()).unwrap();
        prop_assert!(q.dist(&p) < 1e-12);
    }

    #[test]
    fn normalization_round_trip(scale in 0.1f64..10.0, c in -2.0f64..2.0, x in -3.0f64..3.0) {
        let t = NormalizationAffine::centered(scale, c);
        prop_assert!((t.invert(t.apply(x)) - x).abs() < 1e-12 * (1.0 + x.abs() * scale.max(1.0 / scale)));
    }

    #[test]
    fn doubling_type_in_window(a in -1.54f64..-1.05) {
        let f = UnimodalMap::quadratic(a);
        let ren = renormalizable(&f, 9).unwrap();
        prop_assert_eq!(ren.r, 2);
        prop_assert_eq!(ren_type(&f, 2).unwrap(), RenType::doubling());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn level_map_jacobian_matches_finite_differences(a in -1.5f64..-1.3, b in 0.02f64..0.15) {
        let s = seq_at(a, b, 1);
        prop_assume!(s.depth() == 1);
        let m = s.map_at(1).unwrap();
        for p in m.domain().padded(-0.2).grid(3, 3) {
            let j = m.jacobian(p).unwrap();
            let fd = central_jacobian(m, p, 1e-5);
            for r in 0..2 {
                for c in 0..2 {
                    prop_assert!((j[(r, c)] - fd[r][c]).abs() < 1e-5 * (1.0 + j[(r, c)].abs()), "{:?} {:?}", j, fd);
                }
            }
        }
    }

    #[test]
    fn distortion_is_at_least_one(a in -1.45f64..-1.3, b in 0.0f64..0.15) {
        let s = seq_at(a, b, 2);
        for n in 0..=s.depth() {
            let d = apriori_distortion(&s, n).unwrap();
            prop_assert!(d.distortion >= 1.0);
        }
    }

    #[test]
    fn theorem_b_is_bit_identical(a in -1.45f64..-1.38, b in 0.0f64..0.1, eps0 in 0.05f64..0.5) {
        let s = seq_at(a, b, 2);
        prop_assume!(s.depth() >= 1);
        let c = TheoremBConstants::default();
        let r1 = serde_json::to_string(&theorem_b_check(&s, &c, eps0)).unwrap();
        let r2 = serde_json::to_string(&theorem_b_check(&s, &c, eps0)).unwrap();
        prop_assert_eq!(r1, r2);
    }
}

#[test]
fn search_is_nested_and_reproducible() {
    let word = vec![RenType::doubling(); 2];
    let opts = SearchOptions { certify: false, ..Default::default() };
    let run = || realize_combinatorics(&FamilySlice::henon(0.0), &word, 2, &opts).unwrap();
    let (r1, r2) = (run(), run());
    assert!(r1.complete());
    assert_eq!(r1.intervals, r2.intervals);
    assert_eq!(r1.parameter.map(f64::to_bits), r2.parameter.map(f64::to_bits));
    let [outer, inner]: [Interval; 2] = r1.intervals.clone().try_into().unwrap();
    assert!(outer.lo <= inner.lo && inner.hi <= outer.hi && inner.width() < outer.width());
    // the b = 0 doubling windows end at the band-merging points
    assert!((outer.lo + 1.543_689).abs() < 1e-5 && (outer.hi + 1.0).abs() < 1e-6);
}

#[test]
fn cascade_converges_to_feigenbaum_constant() {
    let c = cascade_points(9).unwrap();
    let last = *c.ratios.last().unwrap();
    assert!((last - 4.669_201_609).abs() < 1e-3, "{last}");
    // superstable parameters solve f^{2^k}(0) = 0 by Newton to near machine precision
    for (k, &a) in c.params.iter().enumerate() {
        let mut x = 0.0f64;
        for _ in 0..(1usize << k) {
            x = x * x + a;
        }
        assert!(x.abs() < 1e-9, "k={k}: {x}");
    }
}
