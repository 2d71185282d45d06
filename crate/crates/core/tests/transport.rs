use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wass_dro::measures::{sample, ParticleCloud, ReferenceMeasure};
use wass_dro::transport::{
    exact_w2_empirical, map_l2_distance, min_cost_assignment, pairwise_sq_costs, param_gradient,
    pushforward, w2_monge, ORACLE_LIMIT,
};
use wass_dro::{Error, TransportMap};

fn cloud(points: Vec<f64>, dim: usize) -> ParticleCloud {
    ParticleCloud::uniform(points, dim, None, 0).unwrap()
}

fn random_cloud(rng: &mut ChaCha20Rng, n: usize, dim: usize) -> ParticleCloud {
    cloud(
        (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
        dim,
    )
}

/// Minimum over all permutations, enumerated by Heap's algorithm.
fn brute_force_assignment(cost: &[f64], n: usize) -> f64 {
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| {
        p.iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .sum::<f64>()
    };
    let mut best = eval(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn random_map(rng: &mut ChaCha20Rng, family: usize, base: &ParticleCloud) -> TransportMap {
    let d = base.dim();
    match family {
        0 => TransportMap::identity(d),
        1 => {
            let matrix = (0..d * d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let shift = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            TransportMap::affine(d, matrix, shift).unwrap()
        }
        _ => {
            let m = 5;
            let centers: Vec<f64> = (0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let template = TransportMap::residual(d, centers, 0.7).unwrap();
            let theta: Vec<f64> = (0..template.n_params())
                .map(|_| rng.random_range(-0.5..0.5))
                .collect();
            template.with_params(&theta).unwrap()
        }
    }
}

#[test]
fn one_dimensional_pair_has_unit_cost() {
    let a = cloud(vec![0.0, 2.0], 1);
    let b = cloud(vec![1.0, 3.0], 1);
    assert_eq!(exact_w2_empirical(&a, &b).unwrap(), 1.0);
    // Crossed matching costs (9 + 1)/2 = 5, sorted matching (1 + 1)/2 = 1.
    let cost = pairwise_sq_costs(&a, &b);
    assert_eq!(brute_force_assignment(&cost, 2) / 2.0, 1.0);
}

#[test]
fn identical_clouds_have_zero_distance() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let a = random_cloud(&mut rng, 10, 2);
    assert_eq!(exact_w2_empirical(&a, &a).unwrap(), 0.0);
}

#[test]
fn hungarian_matches_brute_force_in_two_dimensions() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for trial in 0..40 {
        let n = 1 + trial % 6;
        let a = random_cloud(&mut rng, n, 2);
        let b = random_cloud(&mut rng, n, 2);
        let cost = pairwise_sq_costs(&a, &b);
        let assign = min_cost_assignment(&cost, n);
        let hung: f64 = assign
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .sum();
        assert_eq!(hung, brute_force_assignment(&cost, n), "trial {trial}");
    }
}

#[test]
fn sorted_coupling_matches_hungarian_in_one_dimension() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for trial in 0..20 {
        let n = 2 + trial % 31;
        let a = random_cloud(&mut rng, n, 1);
        let b = random_cloud(&mut rng, n, 1);
        let cost = pairwise_sq_costs(&a, &b);
        let assign = min_cost_assignment(&cost, n);
        let hung = assign
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .sum::<f64>()
            / n as f64;
        let sorted = exact_w2_empirical(&a, &b).unwrap();
        assert!(
            (hung - sorted).abs() <= 1e-12,
            "trial {trial}: {hung} vs {sorted}"
        );
    }
}

#[test]
fn exact_w2_beats_random_couplings() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let n = 12;
    let a = random_cloud(&mut rng, n, 3);
    let b = random_cloud(&mut rng, n, 3);
    let w2 = exact_w2_empirical(&a, &b).unwrap();
    let cost = pairwise_sq_costs(&a, &b);
    for _ in 0..200 {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let c = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .sum::<f64>()
            / n as f64;
        assert!(w2 <= c + 1e-12);
    }
}

#[test]
fn oracle_limit_is_enforced() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let a = random_cloud(&mut rng, ORACLE_LIMIT + 6, 2);
    let b = random_cloud(&mut rng, ORACLE_LIMIT + 6, 2);
    assert!(matches!(
        exact_w2_empirical(&a, &b),
        Err(Error::OracleLimit { .. })
    ));
}

#[test]
fn one_dimensional_weighted_clouds_use_quantile_coupling() {
    // Mass 1/2 at 0 and 1/2 at 1 against a single atom at 0.5.
    let a = ParticleCloud::new(vec![0.0, 1.0], 1, vec![0.5, 0.5], None, 0).unwrap();
    let b = cloud(vec![0.5], 1);
    assert!((exact_w2_empirical(&a, &b).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn map_evaluation_examples() {
    let id = TransportMap::identity(2);
    let a = TransportMap::affine_identity(2);
    let p = [0.3, -1.7];
    assert_eq!(id.apply(&p).unwrap(), a.apply(&p).unwrap());
    let double = TransportMap::affine(2, vec![2.0, 0.0, 0.0, 2.0], vec![0.0, 0.0]).unwrap();
    assert_eq!(double.apply(&[1.0, -1.0]).unwrap(), vec![2.0, -2.0]);
    let residual = TransportMap::residual(2, vec![0.0, 0.0, 1.0, 1.0], 0.5).unwrap();
    assert_eq!(residual.apply(&p).unwrap(), p.to_vec());
}

#[test]
fn pushforward_keeps_weights_and_labels() {
    let base = ParticleCloud::new(
        vec![0.0, 1.0, 2.0],
        1,
        vec![0.2, 0.3, 0.5],
        Some(vec![1, -1, 1]),
        9,
    )
    .unwrap();
    let shift = TransportMap::affine(1, vec![1.0], vec![4.0]).unwrap();
    let pushed = pushforward(&shift, &base).unwrap();
    assert_eq!(pushed.points(), &[4.0, 5.0, 6.0]);
    assert_eq!(pushed.weights(), base.weights());
    assert_eq!(pushed.labels(), base.labels());
}

#[test]
fn distance_examples() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let base = random_cloud(&mut rng, 50, 2);
    let shift = TransportMap::affine(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.3, 0.4]).unwrap();
    let id = TransportMap::identity(2);
    assert!((map_l2_distance(&id, &shift, &base).unwrap() - 0.5).abs() < 1e-15);
    assert!((w2_monge(&shift, &base).unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(w2_monge(&id, &base).unwrap(), 0.0);

    let collapse = TransportMap::affine(1, vec![0.0], vec![0.0]).unwrap();
    assert_eq!(
        w2_monge(&collapse, &cloud(vec![-1.0, 1.0], 1)).unwrap(),
        1.0
    );

    // E‖2ξ − ξ‖² = E ξ² = 1 for ξ ~ N(0, 1).
    let g = sample(&ReferenceMeasure::standard_gaussian(1), 10_000, 3).unwrap();
    let double = TransportMap::affine(1, vec![2.0], vec![0.0]).unwrap();
    let d = map_l2_distance(&double, &TransportMap::identity(1), &g).unwrap();
    assert!((d * d - 1.0).abs() < 0.05, "{d}");
}

#[test]
fn param_gradient_of_affine_map_at_one_point() {
    let base = cloud(vec![1.5, -2.0], 2);
    let map = TransportMap::affine_identity(2);
    let c = [0.7, -0.1];
    let g = param_gradient(&map, &base, &c).unwrap();
    // ∂/∂A = c xᵀ, ∂/∂b = c.
    assert_eq!(
        g,
        vec![0.7 * 1.5, 0.7 * -2.0, -0.1 * 1.5, -0.1 * -2.0, 0.7, -0.1]
    );
    let zero = param_gradient(&map, &base, &[0.0, 0.0]).unwrap();
    assert!(zero.iter().all(|v| *v == 0.0));
}

#[test]
fn param_gradient_matches_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for trial in 0..30 {
        let base = random_cloud(&mut rng, 8, 2);
        let map = random_map(&mut rng, 1 + trial % 2, &base);
        let cot: Vec<f64> = (0..base.points().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let scalar = |m: &TransportMap| -> f64 {
            let pushed = pushforward(m, &base).unwrap();
            pushed
                .points()
                .chunks(2)
                .zip(cot.chunks(2))
                .zip(base.weights())
                .map(|((y, c), w)| w * (y[0] * c[0] + y[1] * c[1]))
                .sum()
        };
        let g = param_gradient(&map, &base, &cot).unwrap();
        let theta = map.params();
        let h = 1e-6;
        for j in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (scalar(&map.with_params(&tp).unwrap())
                - scalar(&map.with_params(&tm).unwrap()))
                / (2.0 * h);
            let scale = g[j].abs().max(fd.abs()).max(1e-3);
            assert!(
                (g[j] - fd).abs() / scale <= 1e-5,
                "trial {trial} param {j}: {} vs {fd}",
                g[j]
            );
        }
    }
}

#[test]
fn identity_family_has_no_parameters() {
    let base = cloud(vec![0.0, 1.0], 1);
    assert!(
        param_gradient(&TransportMap::identity(1), &base, &[1.0, 1.0])
            .unwrap()
            .is_empty()
    );
}

#[test]
fn map_json_roundtrip() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let base = random_cloud(&mut rng, 4, 2);
    for family in 0..3 {
        let map = random_map(&mut rng, family, &base);
        let text = serde_json::to_string(&map).unwrap();
        let back: TransportMap = serde_json::from_str(&text).unwrap();
        assert_eq!(map, back);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn map_distance_is_a_metric(seed in any::<u64>(), fams in (0usize..3, 0usize..3, 0usize..3)) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let base = random_cloud(&mut rng, 10, 2);
        let t1 = random_map(&mut rng, fams.0, &base);
        let t2 = random_map(&mut rng, fams.1, &base);
        let t3 = random_map(&mut rng, fams.2, &base);
        let d12 = map_l2_distance(&t1, &t2, &base).unwrap();
        let d21 = map_l2_distance(&t2, &t1, &base).unwrap();
        let d13 = map_l2_distance(&t1, &t3, &base).unwrap();
        let d23 = map_l2_distance(&t2, &t3, &base).unwrap();
        prop_assert_eq!(map_l2_distance(&t1, &t1, &base).unwrap(), 0.0);
        prop_assert!((d12 - d21).abs() <= 1e-12);
        prop_assert!(d13 <= d12 + d23 + 1e-10);
    }

    #[test]
    fn monge_cost_bounds_exact_w2(seed in any::<u64>(), family in 0usize..3, n in 1usize..24) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let base = random_cloud(&mut rng, n, 2);
        let map = random_map(&mut rng, family, &base);
        let pushed = pushforward(&map, &base).unwrap();
        let exact = exact_w2_empirical(&pushed, &base).unwrap();
        prop_assert!(exact <= w2_monge(&map, &base).unwrap() + 1e-9);
    }

    #[test]
    fn exact_w2_is_symmetric(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = random_cloud(&mut rng, n, 2);
        let b = random_cloud(&mut rng, n, 2);
        let ab = exact_w2_empirical(&a, &b).unwrap();
        let ba = exact_w2_empirical(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
    }
}
