use std::path::Path;

use meshfl::flcore::*;
use meshfl::geometry::*;
use meshfl::seed;
use meshfl::topology::*;
use proptest::prelude::*;

proptest! {
    #[test]
    fn ppp_points_stay_in_the_disk(seed in any::<u64>(), radius in 1.0..500.0f64, intensity in 0.0..1e-2f64) {
        let region = DiskRegion::new(radius).unwrap();
        let d = sample_ppp(intensity, region, &mut seed::stream(seed, &[0])).unwrap();
        prop_assert!(d.nodes().iter().all(|&p| region.contains(p)));
    }

    #[test]
    fn aloha_partitions_the_nodes(seed in any::<u64>(), p in 0.0..=1.0f64) {
        let region = DiskRegion::new(100.0).unwrap();
        let d = sample_ppp(5e-3, region, &mut seed::stream(seed, &[0])).unwrap();
        let roles = aloha_thin(&d, p, &mut seed::stream(seed, &[1])).unwrap();
        let mut all: Vec<usize> = roles.transmitters.iter().chain(&roles.receivers).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
    }

    #[test]
    fn connectivity_is_symmetric_and_local(seed in any::<u64>(), r_oh in 1.0..150.0f64) {
        let region = DiskRegion::new(100.0).unwrap();
        let d = sample_ppp(2e-3, region, &mut seed::stream(seed, &[0])).unwrap();
        let g = connectivity_graph(&d, r_oh);
        for i in 0..g.len() {
            prop_assert!(!g.neighbors(i).contains(&i));
            for &j in g.neighbors(i) {
                prop_assert!(g.neighbors(j).contains(&i));
                prop_assert!(distance(d.nodes()[i], d.nodes()[j]) < r_oh);
            }
        }
    }

    #[test]
    fn partitions_cover_the_data_once(seed in any::<u64>(), n in 1usize..12, random in any::<bool>()) {
        let data = synth_blobs(3, 20, 2, 1.0, &mut seed::stream(seed, &[0])).unwrap();
        let scheme = if random { PartitionScheme::RandomSized } else { PartitionScheme::Uniform };
        let parts = partition(&data, n, scheme, &mut seed::stream(seed, &[1])).unwrap();
        prop_assert_eq!(parts.len(), n);
        prop_assert!(parts.iter().all(|p| !p.is_empty()));
        prop_assert_eq!(parts.iter().map(LabeledDataset::len).sum::<usize>(), data.len());
        if !random {
            let sizes: Vec<usize> = parts.iter().map(LabeledDataset::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        let w = data_weights(&parts.iter().map(LabeledDataset::len).collect::<Vec<_>>());
        prop_assert!((w.iter().sum::<f64>() / n as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derived_streams_are_stable_and_distinct(master in any::<u64>(), a in 0u64..100, b in 0u64..100) {
        prop_assert_eq!(seed::derive(master, &[a, b]), seed::derive(master, &[a, b]));
        if a != b {
            prop_assert_ne!(seed::derive(master, &[a]), seed::derive(master, &[b]));
        }
    }
}

#[test]
fn ppp_count_has_poisson_mean() {
    let region = DiskRegion::new(100.0).unwrap();
    let mut rng = seed::stream(1, &[0]);
    let trials = 2000;
    let total: usize = (0..trials)
        .map(|_| sample_ppp(1e-3, region, &mut rng).unwrap().len())
        .sum();
    let mean = total as f64 / trials as f64;
    let want = 1e-3 * region.area();
    // standard error is sqrt(31.4 / 2000) ~ 0.13
    assert!((mean - want).abs() < 0.6, "{mean} vs {want}");
}

#[test]
fn bundled_digits_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let data = load_idx(
        &dir.join("digits10k-images-idx3-ubyte.gz"),
        &dir.join("digits10k-labels-idx1-ubyte.gz"),
    )
    .unwrap();
    assert_eq!((data.len(), data.n_features(), data.num_classes()), (10_000, 784, Some(10)));
    assert!(data.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn idx_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("images.idx");
    std::fs::write(&bogus, b"not idx at all").unwrap();
    let err = load_idx(&bogus, &bogus).unwrap_err().to_string();
    assert!(err.contains("images.idx"), "{err}");
}
