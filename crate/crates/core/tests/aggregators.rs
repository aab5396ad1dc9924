use meshfl::aggregate::*;
use meshfl::flcore::ParamVector;
use meshfl::seed;
use meshfl::Error;
use proptest::prelude::*;
use rand::Rng;

fn set_of(vecs: &[Vec<f64>]) -> UpdateSet {
    vecs.iter()
        .enumerate()
        .map(|(i, v)| (i, ParamVector::new(v.clone()).unwrap(), 1.0))
        .collect()
}

/// Krum scores by definition, written independently of the library.
fn krum_scores_oracle(vecs: &[Vec<f64>], f: usize) -> Vec<f64> {
    let n = vecs.len();
    let k = n - f - 2;
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| vecs[i].iter().zip(&vecs[j]).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d.iter().take(k).sum()
        })
        .collect()
}

fn krum_oracle(vecs: &[Vec<f64>], f: usize, m: usize) -> Vec<f64> {
    let mut scored: Vec<(f64, usize)> = krum_scores_oracle(vecs, f).into_iter().zip(0..).collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = scored[..m].iter().map(|s| s.1).collect();
    chosen.sort_unstable();
    if m == 1 {
        return vecs[chosen[0]].clone();
    }
    let mut out = vec![0.0; vecs[0].len()];
    for &i in &chosen {
        for (o, v) in out.iter_mut().zip(&vecs[i]) {
            *o += (1.0 / m as f64) * v;
        }
    }
    out
}

fn median_oracle(vecs: &[Vec<f64>]) -> Vec<f64> {
    let n = vecs.len();
    (0..vecs[0].len())
        .map(|c| {
            let mut col: Vec<f64> = vecs.iter().map(|v| v[c]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if n % 2 == 1 {
                col[n / 2]
            } else {
                (col[n / 2 - 1] + col[n / 2]) / 2.0
            }
        })
        .collect()
}

#[test]
fn krum_matches_brute_force_on_random_instances() {
    let mut rng = seed::stream(42, &[1]);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(3..=10);
        let d = rng.random_range(1..=8);
        let f = rng.random_range(0..=n - 3);
        let m = rng.random_range(1..=n);
        // small integers keep every distance exact, so ties are real ties
        let vecs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-6i32..=6) as f64).collect())
            .collect();
        assert_eq!(krum_scores(&set_of(&vecs), f).unwrap(), krum_scores_oracle(&vecs, f));
        let got = krum(&set_of(&vecs), f, m).unwrap();
        assert_eq!(got.as_slice(), krum_oracle(&vecs, f, m).as_slice(), "n={n} f={f} m={m}");
        checked += 1;
    }
}

#[test]
fn median_matches_sort_oracle_on_random_instances() {
    let mut rng = seed::stream(43, &[1]);
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let d = rng.random_range(1..=8);
        let vecs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1e3..1e3)).collect())
            .collect();
        assert_eq!(median(&set_of(&vecs)).unwrap().as_slice(), median_oracle(&vecs).as_slice());
    }
}

#[test]
fn far_outliers_never_win() {
    let mut rng = seed::stream(44, &[1]);
    for n in 3..=12usize {
        for f in 0..=n - 3 {
            let honest = n - f;
            let mut vecs: Vec<Vec<f64>> = (0..honest)
                .map(|_| (0..4).map(|_| 1.0 + rng.random_range(-0.1..0.1)).collect())
                .collect();
            vecs.extend((0..f).map(|i| vec![1e6 * (i as f64 + 1.0); 4]));
            let set = set_of(&vecs);
            let k = krum(&set, f, 1).unwrap();
            assert!(vecs[..honest].iter().any(|h| h.as_slice() == k.as_slice()), "krum n={n} f={f}");
            if 2 * f < n {
                let med = median(&set).unwrap();
                assert!(med.as_slice().iter().all(|v| (v - 1.0).abs() <= 0.1), "median n={n} f={f}");
            }
        }
    }
}

#[test]
fn krum_needs_f_plus_three() {
    let vecs = vec![vec![0.0], vec![1.0], vec![2.0]];
    assert!(matches!(
        krum(&set_of(&vecs), 1, 1),
        Err(Error::InsufficientClients { required: 4, got: 3 })
    ));
    let rule = AggregationRule::krum(Some(1), None);
    assert!(rule.apply(&set_of(&vecs)).is_err());
    assert_eq!(rule.apply_lenient(&set_of(&vecs)).unwrap().as_slice(), &[1.0]);
}

#[test]
fn fedavg_examples() {
    let set: UpdateSet = [
        (0, ParamVector::new(vec![0.0, 2.0]).unwrap(), 1.0),
        (1, ParamVector::new(vec![4.0, 6.0]).unwrap(), 3.0),
    ]
    .into_iter()
    .collect();
    assert_eq!(fedavg(&set, false).unwrap().as_slice(), &[2.0, 4.0]);
    assert_eq!(fedavg(&set, true).unwrap().as_slice(), &[3.0, 5.0]);
    let zero: UpdateSet = [(0, ParamVector::new(vec![1.0]).unwrap(), 0.0)].into_iter().collect();
    assert!(matches!(fedavg(&zero, true), Err(Error::DegenerateDenominator)));
    assert!(fedavg(&UpdateSet::new(), false).is_err());
    let ragged: UpdateSet = [
        (0, ParamVector::new(vec![1.0]).unwrap(), 1.0),
        (1, ParamVector::new(vec![1.0, 2.0]).unwrap(), 1.0),
    ]
    .into_iter()
    .collect();
    assert!(matches!(median(&ragged), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn default_krum_parameters() {
    let rule = AggregationRule::krum(None, None);
    assert_eq!(rule.krum_params(10), (3, 5));
    assert_eq!(rule.krum_params(3), (0, 1));
    assert_eq!(AggregationRule::fedavg(true).name(), "fedavg-weighted");
    assert_eq!(AggregationRule::median().name(), "median");
}

fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..8, 1usize..6).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-1e3..1e3f64, d), n))
}

proptest! {
    #[test]
    fn aggregates_stay_in_the_coordinate_hull(vecs in vectors()) {
        let set = set_of(&vecs);
        let rules = [AggregationRule::fedavg(false), AggregationRule::median(), AggregationRule::krum(None, None)];
        for rule in rules {
            let out = rule.apply_lenient(&set).unwrap();
            for (c, v) in out.as_slice().iter().enumerate() {
                let lo = vecs.iter().map(|x| x[c]).fold(f64::INFINITY, f64::min);
                let hi = vecs.iter().map(|x| x[c]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn median_and_mean_ignore_order(vecs in vectors(), rot in 0usize..8) {
        let mut shuffled = vecs.clone();
        let len = shuffled.len();
        shuffled.rotate_left(rot % len);
        prop_assert_eq!(median(&set_of(&vecs)).unwrap(), median(&set_of(&shuffled)).unwrap());
        let a = fedavg(&set_of(&vecs), false).unwrap();
        let b = fedavg(&set_of(&shuffled), false).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn identical_updates_are_fixed_points(v in prop::collection::vec(-1e3..1e3f64, 1..6), n in 1usize..8) {
        let vecs = vec![v.clone(); n];
        let set = set_of(&vecs);
        let med = median(&set).unwrap();
        prop_assert_eq!(med.as_slice(), v.as_slice());
        for out in [AggregationRule::krum(None, None).apply_lenient(&set).unwrap(), fedavg(&set, true).unwrap()] {
            for (x, y) in out.as_slice().iter().zip(&v) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
