use std::f64::consts::PI;

use geocensus::census::{build_census, closure_witness, CensusOptions, RecordClass, TorusCase, Verdict};
use geocensus::clairaut::{self, compute_u, DEFAULT_QUAD_TOL};
use geocensus::farey::{count_rationals_in_interval, Interval};
use geocensus::{Profile, Surface, SurfaceKind};

const BUMPY: &str = "sin(s)*(1 + 0.3*sin(s)^2)";
/// h′ = cos⁹ s, so h is flat to within 1e-10 on a band around the equator
const FLAT_WAIST: &str = "sin(s) - 4/3*sin(s)^3 + 6/5*sin(s)^5 - 4/7*sin(s)^7 + 1/9*sin(s)^9";

fn surface(kind: SurfaceKind, f: &str) -> Surface {
    Surface::new(Profile::parse(kind, f).unwrap())
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

#[test]
fn round_sphere_counts_one() {
    let c = build_census(&surface(SurfaceKind::Sphere, "sin(s)"), &CensusOptions { lmax: 100.0, ..Default::default() }).unwrap();
    assert_eq!(c.verdict, Verdict::RoundLike);
    for ell in [2.0 * PI, 10.0, 50.0, 100.0] {
        assert_eq!(c.n_at(ell), Some(1));
    }
}

#[test]
fn rational_records_close_up() {
    let s = surface(SurfaceKind::Sphere, BUMPY);
    let c = build_census(&s, &CensusOptions { lmax: 80.0, ..Default::default() }).unwrap();
    assert_eq!(c.verdict, Verdict::Quadratic);
    assert!(c.rational_count() > 10);
    for r in c.records.iter().filter(|r| matches!(r.class, RecordClass::Rational { .. })) {
        let w = closure_witness(&s, r, 1e-10).unwrap();
        assert!(w.within(1e-4), "{r:?}: {w:?}");
        let RecordClass::Rational { p, .. } = r.class else { unreachable!() };
        assert!((w.theta_advance - 2.0 * PI * p as f64).abs() < 1e-4);
    }
}

#[test]
fn census_is_deterministic_and_monotone() {
    let s = surface(SurfaceKind::Sphere, BUMPY);
    let opts = CensusOptions { lmax: 60.0, ..Default::default() };
    let first = build_census(&s, &opts).unwrap();
    let second = build_census(&s, &opts).unwrap();
    assert_eq!(first.records, second.records);
    let mut keys: Vec<_> = first.records.iter().map(|r| r.key).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), first.records.len());
    assert!(first.n_table.windows(2).all(|w| w[0].length < w[1].length && w[0].count < w[1].count));
    assert_eq!(first.n_table.last().unwrap().count as usize, first.records.len());
}

#[test]
fn rational_records_match_sign_changes_on_a_fine_grid() {
    // independent count: sign changes of R − 2πp/q on a grid four times finer
    let s = surface(SurfaceKind::Sphere, BUMPY);
    let opts = CensusOptions { lmax: 50.0, ..Default::default() };
    let census = build_census(&s, &opts).unwrap();

    let (lo, hi) = compute_u(&s, 512).intervals[0];
    let margin = opts.scan_margin * (hi - lo);
    let n = 4 * opts.grid_n;
    let grid: Vec<(f64, f64)> = (0..n)
        .map(|i| lo + margin + (hi - lo - 2.0 * margin) * i as f64 / (n - 1) as f64)
        .map(|a| {
            let t = clairaut::trip_quadrature(&s, a, DEFAULT_QUAD_TOL).unwrap();
            (t.rotation, t.length)
        })
        .collect();
    let mut expected = Vec::new();
    for q in 1..=40i64 {
        for p in 0..=2 * q {
            if gcd(p, q) != 1 {
                continue;
            }
            let goal = 2.0 * PI * p as f64 / q as f64;
            for w in grid.windows(2) {
                if (w[0].0 - goal) * (w[1].0 - goal) <= 0.0 && w[0].0 != w[1].0 {
                    let t = (goal - w[0].0) / (w[1].0 - w[0].0);
                    let length = q as f64 * (w[0].1 + t * (w[1].1 - w[0].1));
                    if (length - opts.lmax).abs() > 1e-3 {
                        expected.push((p, q as u64, length <= opts.lmax));
                    }
                }
            }
        }
    }
    let mut want: Vec<(i64, u64)> = expected.iter().filter(|e| e.2).map(|e| (e.0, e.1)).collect();
    let mut got: Vec<(i64, u64)> = census
        .records
        .iter()
        .filter_map(|r| match r.class {
            RecordClass::Rational { p, q, .. } if (r.length - opts.lmax).abs() > 1e-3 => Some((p, q)),
            _ => None,
        })
        .collect();
    want.sort();
    got.sort();
    assert_eq!(got, want);
}

#[test]
fn farey_prediction_is_a_lower_bound() {
    let s = surface(SurfaceKind::Sphere, BUMPY);
    let c = build_census(&s, &CensusOptions { lmax: 120.0, ..Default::default() }).unwrap();
    let probe = c.probe.unwrap();
    let check = c.farey_check.unwrap();
    let iv = Interval::closed(probe.image_lo, probe.image_hi).unwrap();
    let n = (120.0 / probe.l0).floor() as u64;
    assert_eq!(check.n, n);
    assert_eq!(check.predicted, count_rationals_in_interval(&iv, n).unwrap());
    assert!(c.rational_count() >= check.predicted);
    assert!(check.holds);
    assert!(c.growth_constant.unwrap() > 0.0);
}

#[test]
fn flat_torus_is_infinite() {
    let c = build_census(&surface(SurfaceKind::Torus, "1"), &CensusOptions::default()).unwrap();
    assert!(matches!(c.torus_case, Some(TorusCase::NonIsolated { .. })));
    assert_eq!(c.verdict, Verdict::Infinite);
    assert!((c.infinite_at.unwrap() - 2.0 * PI).abs() < 1e-12);
}

#[test]
fn waisted_torus_grows_quadratically() {
    let c = build_census(&surface(SurfaceKind::Torus, "2 + cos(2*s)"), &CensusOptions { lmax: 120.0, ..Default::default() }).unwrap();
    match c.torus_case {
        Some(TorusCase::AsymptoticCase { s0 }) => assert!((s0 - PI / 2.0).abs() < 1e-12),
        other => panic!("{other:?}"),
    }
    assert_eq!(c.verdict, Verdict::Quadratic);
    assert!(c.growth_constant.unwrap() > 0.0);
}

#[test]
fn flat_equatorial_band_is_infinite() {
    let c = build_census(&surface(SurfaceKind::Sphere, FLAT_WAIST), &CensusOptions::default()).unwrap();
    assert_eq!(c.verdict, Verdict::Infinite);
    let h_max = 1.0 - 4.0 / 3.0 + 6.0 / 5.0 - 4.0 / 7.0 + 1.0 / 9.0;
    assert!((c.infinite_at.unwrap() - 2.0 * PI * h_max).abs() < 1e-8);
    assert_eq!(c.n_at(c.infinite_at.unwrap()), None);
}
