use dispersion::process::{Configuration, GridSite, LineSite, Site};
use dispersion::rng::StepRng;
use dispersion::stats::{chi_square, mean, std_err};
use dispersion::{run_trial, Topology, TrialSpec};
use proptest::prelude::*;

fn line(counts: &[(i64, u64)]) -> Configuration<LineSite> {
    Configuration::from_counts(counts.iter().copied()).unwrap()
}

fn binomial_pmf(k: u64) -> Vec<f64> {
    // Pascal's row divided by 2^k
    let mut row = vec![1.0f64];
    for _ in 0..k {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let scale = 2f64.powi(k as i32);
    row.into_iter().map(|c| c / scale).collect()
}

fn split_counts(config: &Configuration<LineSite>, site: i64, samples: u64, seed: u64) -> Vec<u64> {
    let k = config.count(site);
    let mut hist = vec![0u64; k as usize + 1];
    for step in 0..samples {
        let draw = config.sample_moves(&mut StepRng::new(seed, step));
        hist[draw.get(site).unwrap().right() as usize] += 1;
    }
    hist
}

#[test]
fn pair_split_matches_binomial_two() {
    let c = line(&[(0, 2)]);
    let hist = split_counts(&c, 0, 100_000, 11);
    let (_, p) = chi_square(&hist, &[0.25, 0.5, 0.25]);
    assert!(p > 1e-3, "hist {hist:?} p {p}");
}

#[test]
fn pair_outcomes_within_three_standard_errors() {
    let samples = 100_000u64;
    let mut outcomes = [0u64; 3]; // both left, both right, split
    for step in 0..samples {
        let mut c = line(&[(0, 2)]);
        c.step(&mut StepRng::new(5, step)).unwrap();
        match (c.count(-1), c.count(1)) {
            (2, 0) => outcomes[0] += 1,
            (0, 2) => outcomes[1] += 1,
            (1, 1) => outcomes[2] += 1,
            other => panic!("impossible outcome {other:?}"),
        }
    }
    for (obs, p) in outcomes.iter().zip([0.25, 0.25, 0.5]) {
        let f = *obs as f64 / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        assert!((f - p).abs() <= 3.0 * se, "{f} vs {p}");
    }
}

#[test]
fn stack_of_four_split_law() {
    let c = line(&[(0, 4)]);
    let hist = split_counts(&c, 0, 100_000, 3);
    let pmf = binomial_pmf(4);
    assert_eq!(pmf[0], 1.0 / 16.0);
    let (_, p) = chi_square(&hist, &pmf);
    assert!(p > 1e-3, "hist {hist:?} p {p}");
}

#[test]
fn large_stack_split_mean_and_variance() {
    // Binomial(1000, 1/2): mean 500, variance 250
    let c = line(&[(0, 1000)]);
    let draws: Vec<f64> = (0..20_000)
        .map(|s| c.sample_moves(&mut StepRng::new(9, s)).entries[0].right() as f64)
        .collect();
    let m = mean(&draws);
    assert!((m - 500.0).abs() <= 4.0 * std_err(&draws), "mean {m}");
    let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((var - 250.0).abs() < 15.0, "variance {var}");
}

#[test]
fn grid_split_is_uniform_multinomial() {
    let c = Configuration::<GridSite>::point_mass(1).unwrap();
    let pair = Configuration::from_counts([(GridSite::origin(), 2)]).unwrap();
    assert!(c.sample_moves(&mut StepRng::new(0, 0)).is_empty());
    let samples = 80_000u64;
    let mut first_particle = [0u64; 4];
    let mut same_direction = 0u64;
    for step in 0..samples {
        let draw = pair.sample_moves(&mut StepRng::new(21, step));
        let split = draw.entries[0].split;
        assert_eq!(split.iter().sum::<u64>(), 2);
        if let Some(d) = split.iter().position(|&k| k == 2) {
            same_direction += 1;
            first_particle[d] += 1;
        }
    }
    // Both particles pick the same neighbour with probability 1/4, each direction 1/16.
    let (_, p) = chi_square(&first_particle, &[0.25; 4]);
    assert!(p > 1e-3, "{first_particle:?}");
    let f = same_direction as f64 / samples as f64;
    assert!((f - 0.25).abs() < 3.0 * (0.25 * 0.75 / samples as f64).sqrt(), "{f}");
}

#[test]
fn hand_applied_moves() {
    let mut c = line(&[(0, 3), (1, 1)]);
    let mut draw = c.sample_moves(&mut StepRng::new(0, 0));
    draw.entries[0].split = 2;
    c.apply_moves(&draw).unwrap();
    assert_eq!(c.occupancy().iter().map(|(&s, &k)| (s, k)).collect::<Vec<_>>(), vec![(-1, 1), (1, 3)]);
    assert_eq!(c.unstable_sites(), &[1]);
}

#[test]
fn mismatched_draw_is_rejected() {
    let a = line(&[(0, 3)]);
    let mut b = line(&[(0, 4)]);
    let draw = a.sample_moves(&mut StepRng::new(1, 0));
    assert!(b.apply_moves(&draw).is_err());
    assert_eq!(b.count(0), 4);
}

#[test]
fn pair_stopping_time_mean_is_two() {
    let times: Vec<f64> = (0..20_000u64)
        .map(|seed| run_trial(&TrialSpec::new(2, Topology::Line, seed)).unwrap().record.stopping_time as f64)
        .collect();
    // Geometric(1/2) on {1, 2, ...}: mean 2, variance 2
    let m = mean(&times);
    assert!((m - 2.0).abs() < 4.0 * (2.0f64 / times.len() as f64).sqrt(), "{m}");
    assert!(times.iter().all(|&t| t >= 1.0));
}

#[test]
fn reflection_symmetry() {
    let mut right = Vec::new();
    let mut left = Vec::new();
    for seed in 0..400u64 {
        let r = run_trial(&TrialSpec::new(40, Topology::Line, seed)).unwrap().record;
        right.push(r.max_pos as f64);
        left.push(-r.min_pos as f64);
    }
    let diff = mean(&right) - mean(&left);
    let se = (std_err(&right).powi(2) + std_err(&left).powi(2)).sqrt();
    assert!(diff.abs() <= 4.0 * se, "diff {diff} se {se}");
}

#[test]
fn trials_are_reproducible() {
    for topology in [Topology::Line, Topology::Grid2D] {
        let spec = TrialSpec::new(60, topology, 1234);
        assert_eq!(run_trial(&spec).unwrap().record, run_trial(&spec).unwrap().record);
    }
}

fn arb_line() -> impl Strategy<Value = Configuration<LineSite>> {
    prop::collection::btree_map(-20i64..20, 1u64..6, 1..8).prop_map(|m| Configuration::from_counts(m).unwrap())
}

fn sorted_positions(c: &Configuration<LineSite>) -> Vec<i64> {
    c.occupancy()
        .iter()
        .flat_map(|(&s, &k)| std::iter::repeat_n(s, k as usize))
        .collect()
}

proptest! {
    #[test]
    fn steps_conserve_mass(c in arb_line(), seed in any::<u64>(), step in 0u64..1000) {
        let mut next = c.clone();
        next.step(&mut StepRng::new(seed, step)).unwrap();
        prop_assert_eq!(next.total(), c.total());
        prop_assert_eq!(next.n(), c.n());
    }

    #[test]
    fn order_statistics_are_lipschitz(c in arb_line(), seed in any::<u64>()) {
        let mut next = c.clone();
        next.step(&mut StepRng::new(seed, 0)).unwrap();
        let before = sorted_positions(&c);
        let after = sorted_positions(&next);
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() <= 1);
        }
        let gaps = |p: &[i64]| p.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
        for (g, h) in gaps(&before).iter().zip(gaps(&after)) {
            prop_assert!((g - h).abs() <= 2);
        }
    }

    #[test]
    fn settled_configurations_are_fixed(sites in prop::collection::btree_set(-50i64..50, 1..20), seed in any::<u64>()) {
        let mut c = Configuration::from_counts(sites.into_iter().map(|s| (s, 1))).unwrap();
        let before = c.clone();
        let draw = c.step(&mut StepRng::new(seed, 0)).unwrap();
        prop_assert!(draw.is_empty());
        prop_assert_eq!(c, before);
    }

    #[test]
    fn settled_span_covers_all_particles(n in 1u64..40, seed in any::<u64>()) {
        let r = run_trial(&TrialSpec::new(n, Topology::Line, seed)).unwrap().record;
        prop_assert!(!r.capped && r.conserved);
        prop_assert!(r.span + 1 >= n);
    }
}
