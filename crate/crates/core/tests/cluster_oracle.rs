mod common;

use common::{oracle_cut, random_set, rng, upgma_oracle};
use topo_proto::cluster::{cluster_centers, cut_to_k, upgma_cosine_linkage};
use topo_proto::synth::sample_vmf;
use topo_proto::UnitVector;

fn assert_matches_oracle(z: &topo_proto::FeatureSet) {
    let tree = upgma_cosine_linkage(z).unwrap();
    let oracle = upgma_oracle(z);
    assert_eq!(tree.merges.len(), oracle.len());
    for (m, (lo, hi, d)) in tree.merges.iter().zip(&oracle) {
        assert_eq!((m.left, m.right), (*lo, *hi));
        assert!((m.distance - d).abs() < 1e-12);
        assert!((0.0..=2.0).contains(&m.distance));
    }
    for k in 1..=z.len() {
        let mut got = cut_to_k(&tree, k).unwrap().members();
        got.iter_mut().for_each(|g| g.sort_unstable());
        got.sort();
        assert_eq!(got, oracle_cut(z, k), "cut k={k}");
    }
}

#[test]
fn vmf_sample_of_five_matches_oracle() {
    let mu = UnitVector::from_raw(&[1.0, 0.5, -0.2, 0.3]).unwrap();
    let z = sample_vmf(&mu, 5.0, 5, 42).unwrap();
    assert_matches_oracle(&z);
    let mut got = cut_to_k(&upgma_cosine_linkage(&z).unwrap(), 2).unwrap().members();
    got.sort();
    assert_eq!(got, oracle_cut(&z, 2));
}

#[test]
fn random_small_sets_match_oracle() {
    let mut r = rng(17);
    for trial in 0..60 {
        let n = 2 + trial % 7;
        let d = 2 + trial % 5;
        assert_matches_oracle(&random_set(&mut r, n, d));
    }
}

#[test]
fn cut_labels_cover_every_sample() {
    let mut r = rng(3);
    let z = random_set(&mut r, 30, 6);
    let tree = upgma_cosine_linkage(&z).unwrap();
    for k in [1, 4, 30, 50] {
        let a = cut_to_k(&tree, k).unwrap();
        assert_eq!(a.labels.len(), 30);
        assert_eq!(a.k, k.min(30));
        assert!(a.members().iter().all(|m| !m.is_empty()));
        let centers = cluster_centers(&a, &z).unwrap();
        assert_eq!(centers.len(), a.k);
    }
}
