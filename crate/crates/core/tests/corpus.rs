use std::collections::BTreeSet;

use maskgen_core::dataset::{Manifest, Split, SplitRatios, SplitSpec};
use maskgen_core::label::lesion_flag;
use maskgen_core::phantom::{generate_corpus, PhantomConfig};
use maskgen_core::store;

fn corpus(dir: &std::path::Path, cfg: &PhantomConfig, patients: usize) -> Manifest {
    let split = SplitSpec {
        ratios: SplitRatios::default(),
        seed: 3,
    };
    generate_corpus(cfg, patients, dir, &split).unwrap()
}

#[test]
fn prevalence_tracks_lesion_probability() {
    let dir = tempfile::tempdir().unwrap();
    for p in [0.1, 0.3, 0.6] {
        let cfg = PhantomConfig {
            lesion_probability: p,
            seed: 12,
            ..Default::default()
        };
        let m = corpus(&dir.path().join(format!("p{p}")), &cfg, 20);
        assert!(
            (m.lesion_prevalence() - p).abs() <= 0.05,
            "p={p}: {}",
            m.lesion_prevalence()
        );
    }
}

#[test]
fn manifest_flags_match_masks_and_splits_are_patient_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PhantomConfig {
        seed: 4,
        slices_per_volume: 12,
        ..Default::default()
    };
    let m = corpus(dir.path(), &cfg, 10);
    assert_eq!(m.records.len(), 120);
    let all: Vec<usize> = (0..m.records.len()).collect();
    let maps = maskgen_core::dataset::load_batch::<f32>(&m, &all, (64, 64))
        .unwrap()
        .maps;
    for (r, map) in m.records.iter().zip(&maps) {
        assert_eq!(r.lesion, lesion_flag(map, &m.catalog));
    }
    let owners: Vec<BTreeSet<&str>> = [Split::Train, Split::Val, Split::Test]
        .iter()
        .map(|&s| {
            m.records
                .iter()
                .filter(|r| r.split == s)
                .map(|r| r.patient_id.as_str())
                .collect()
        })
        .collect();
    for a in 0..3 {
        assert!(!owners[a].is_empty());
        for b in a + 1..3 {
            assert!(owners[a].is_disjoint(&owners[b]));
        }
    }
    let reread = Manifest::read(&dir.path().join("manifest.jsonl")).unwrap();
    assert_eq!(reread.digest().unwrap(), m.digest().unwrap());
}

#[test]
fn same_seed_same_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PhantomConfig {
        seed: 9,
        slices_per_volume: 6,
        ..Default::default()
    };
    let a = corpus(&dir.path().join("a"), &cfg, 4);
    let b = corpus(&dir.path().join("b"), &cfg, 4);
    assert_eq!(a.digest().unwrap(), b.digest().unwrap());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(
            std::fs::read(a.resolve(ra)).unwrap(),
            std::fs::read(b.resolve(rb)).unwrap()
        );
    }
    let other = corpus(&dir.path().join("c"), &PhantomConfig { seed: 10, ..cfg }, 4);
    assert_ne!(a.digest().unwrap(), other.digest().unwrap());
}

#[test]
fn export_then_list_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PhantomConfig {
        seed: 2,
        slices_per_volume: 5,
        ..Default::default()
    };
    let m = corpus(&dir.path().join("src"), &cfg, 3);
    let all: Vec<usize> = (0..m.records.len()).collect();
    let maps = maskgen_core::dataset::load_batch::<f32>(&m, &all, (64, 64))
        .unwrap()
        .maps;
    let out = store::export_corpus(&maps, &dir.path().join("out"), &m.catalog).unwrap();
    assert_eq!(out.records.len(), maps.len());
    let back = maskgen_core::dataset::load_batch::<f32>(&out, &all, (64, 64))
        .unwrap()
        .maps;
    assert_eq!(back, maps);
}
