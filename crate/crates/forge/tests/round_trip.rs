use nyonscope::artifacts::{assemble_bundle, BundleOptions};
use nyonscope::canonical::to_canonical_json;
use nyonscope::Generation;
use nyonscope_forge::{emit_tree, forge_case, ForgeOptions};

fn round_trip(seed: u64, generation: Generation, options: &ForgeOptions) {
    let dir = tempfile::tempdir().unwrap();
    let case = forge_case(seed, generation, options);
    let (tree, manifest) = emit_tree(&case, dir.path()).unwrap();
    let bundle = assemble_bundle(&tree, &BundleOptions::default());
    let got = to_canonical_json(&bundle).unwrap();
    let want = to_canonical_json(&manifest.expected_bundle).unwrap();
    if got != want {
        let (g, w): (Vec<_>, Vec<_>) = (got.lines().collect(), want.lines().collect());
        let at = g.iter().zip(&w).position(|(a, b)| a != b).unwrap_or(g.len().min(w.len()));
        let lo = at.saturating_sub(8);
        panic!(
            "seed {seed} {generation:?}: first difference at line {at}\n--- got\n{}\n--- want\n{}",
            g[lo..(at + 8).min(g.len())].join("\n"),
            w[lo..(at + 8).min(w.len())].join("\n")
        );
    }
    for (rel, digest) in &manifest.digests {
        assert_eq!(&tree.sha256(rel).unwrap(), digest, "{rel}");
    }
}

#[test]
fn gen1_round_trip_few_seeds() {
    for seed in 0..5 {
        round_trip(seed, Generation::Gen1, &ForgeOptions::default());
    }
}

#[test]
fn gen2_round_trip_few_seeds() {
    for seed in 0..5 {
        round_trip(seed, Generation::Gen2, &ForgeOptions::default());
    }
}

#[test]
fn empty_cases_round_trip() {
    let options = ForgeOptions { trips: 0, wifi_networks: 0, bluetooth_devices: 0, ..Default::default() };
    round_trip(9, Generation::Gen1, &options);
    round_trip(9, Generation::Gen2, &options);
}

#[test]
fn same_seed_same_tree_bytes() {
    for generation in [Generation::Gen1, Generation::Gen2] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let case = forge_case(21, generation, &ForgeOptions::default());
        let (ta, ma) = emit_tree(&case, a.path()).unwrap();
        let (tb, mb) = emit_tree(&case, b.path()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ta.files(), tb.files());
        for rel in ta.files() {
            assert_eq!(ta.read(&rel).unwrap(), tb.read(&rel).unwrap(), "{rel}");
        }
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_holds_for_any_options(
        seed in proptest::prelude::any::<u64>(),
        gen2 in proptest::prelude::any::<bool>(),
        trips in 0usize..6,
        min_points in 2usize..10,
        extra_points in 0usize..30,
        wifi in 0usize..5,
        bluetooth in 0usize..5,
    ) {
        let options = ForgeOptions {
            trips,
            min_points,
            max_points: min_points + extra_points,
            wifi_networks: wifi,
            bluetooth_devices: bluetooth,
            ..Default::default()
        };
        round_trip(seed, if gen2 { Generation::Gen2 } else { Generation::Gen1 }, &options);
    }
}
