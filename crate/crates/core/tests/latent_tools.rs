use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use screwdesign::latent_tools::{
    cluster_color, export_map, interpolate_strip, kmeans, strip_csv, LatentError, LatentMap,
};
use screwdesign::manifold::AeModel;
use screwdesign::screw_model::{activate_decoded, FEATURE_DIM};
use std::collections::BTreeSet;

fn points(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), n)
}

fn inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<_> = points.iter().zip(labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..dim)
            .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>();
    }
    total
}

/// Smallest within-cluster sum of squares over every labelling.
fn brute_force_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        best = best.min(inertia(points, &labels, k));
    }
    best
}

proptest! {
    #[test]
    fn inertia_never_increases(ps in points(25, 2), k in 1usize..6, seed in any::<u64>()) {
        let km = kmeans(&ps, k, seed, 100).unwrap();
        for w in km.inertia.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        for (p, l) in ps.iter().zip(&km.labels) {
            prop_assert!(*l < k);
            let d = |c: &Vec<f64>| p.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let mine = d(&km.centroids[*l]);
            prop_assert!(km.centroids.iter().all(|c| mine <= d(c) + 1e-9));
        }
    }

    #[test]
    fn same_seed_same_clusters(ps in points(12, 3), seed in any::<u64>()) {
        prop_assert_eq!(kmeans(&ps, 3, seed, 50).unwrap(), kmeans(&ps, 3, seed, 50).unwrap());
    }
}

#[test]
fn separated_blobs_reach_the_brute_force_optimum() {
    let centres = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let offsets = [[0.3, -0.2], [-0.4, 0.1], [0.1, 0.5]];
    let pts: Vec<Vec<f64>> = centres
        .iter()
        .flat_map(|c| offsets.iter().map(move |o| vec![c[0] + o[0], c[1] + o[1]]))
        .collect();
    let oracle = brute_force_inertia(&pts, 3);
    for seed in 0..5 {
        let km = kmeans(&pts, 3, seed, 100).unwrap();
        let got = *km.inertia.last().unwrap();
        assert!((got - oracle).abs() < 1e-9, "seed {seed}: {got} vs {oracle}");
        for blob in km.labels.chunks(3) {
            assert!(blob.iter().all(|l| *l == blob[0]));
        }
    }
}

#[test]
fn bad_arguments_are_rejected() {
    let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
    assert!(matches!(kmeans(&pts, 0, 0, 10), Err(LatentError::ZeroK)));
    assert!(matches!(kmeans(&pts, 3, 0, 10), Err(LatentError::KTooLarge { k: 3, n: 2 })));
    assert!(matches!(kmeans(&[vec![0.0], vec![1.0, 2.0]], 1, 0, 10), Err(LatentError::Ragged)));
}

fn model() -> AeModel<f64> {
    AeModel::new(FEATURE_DIM, 2, &mut ChaCha8Rng::seed_from_u64(5))
}

#[test]
fn strip_endpoints_decode_the_given_latents() {
    let m = model();
    let za = DVector::from_vec(vec![-1.0, 0.5]);
    let zb = DVector::from_vec(vec![2.0, -0.25]);
    let strip = interpolate_strip(&m, &za, &zb, 8, 0.5).unwrap();
    assert_eq!(strip.len(), 8);
    assert_eq!(strip[0].z, za);
    assert_eq!(strip[7].z, zb);
    for (p, z) in [(&strip[0], &za), (&strip[7], &zb)] {
        let body = activate_decoded(m.decode(z).unwrap().as_slice(), 0.5).unwrap();
        assert_eq!(p.mask, body.active_mask());
    }
    let csv = strip_csv(&strip);
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("step,z1,z2,n_tot,active_s00,"));
    assert!(matches!(interpolate_strip(&m, &za, &zb, 1, 0.5), Err(LatentError::ShortStrip(1))));
}

#[test]
fn thirty_robots_in_five_clusters_use_five_colours() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data: Vec<DVector<f64>> = (0..30)
        .map(|_| DVector::from_fn(FEATURE_DIM, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0)))
        .collect();
    let names: Vec<String> = (0..30).map(|i| format!("robot_{i:02}")).collect();
    let map = LatentMap::build(&m, &names, &data, 5, 0).unwrap();
    assert_eq!(map.labels.iter().collect::<BTreeSet<_>>().len(), 5);
    let svg = map.to_svg().unwrap();
    let colours: BTreeSet<&str> = (0..5).map(cluster_color).filter(|c| svg.contains(c)).collect();
    assert_eq!(colours.len(), 5);
    assert_eq!(svg.matches("<circle").count(), 30);
    let back = LatentMap::from_csv(&map.to_csv()).unwrap();
    assert_eq!((&back.names, &back.coords, &back.labels), (&map.names, &map.coords, &map.labels));

    let dir = tempfile::tempdir().unwrap();
    let files = export_map(&map, &dir.path().join("latent_map")).unwrap();
    assert_eq!(files.len(), 2);
    assert!(files.iter().all(|f| f.exists()));
}
