use dispersion::concentration::{
    certify, chernoff_bound, choose_params, convolution_power, exact_tail, mgf_chain_check, mu, TailSpec,
};
use dispersion::Error;

const EPS_GRID: [f64; 3] = [0.25, 0.5, 1.0];

fn moments(pmf: &[f64]) -> (f64, f64) {
    let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let second: f64 = pmf.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
    (mean, second - mean * mean)
}

fn test_specs() -> Vec<TailSpec> {
    vec![
        TailSpec::extremal(1.0, 0.5).unwrap(),
        TailSpec::geometric(0.5, 60).unwrap(),
        TailSpec::extremal(2.0, 0.6).unwrap(),
        TailSpec::new(1.0, 0.5, vec![0.5, 0.3, 0.2]).unwrap(),
    ]
}

#[test]
fn mu_values() {
    assert_eq!(mu(1.0, 0.5).unwrap(), 2.0);
    assert!((mu(2.0, 0.9).unwrap() - 20.0).abs() < 1e-12);
    assert!(matches!(mu(1.0, 1.0), Err(Error::InvalidArgument(_))));
    assert!(mu(0.0, 0.5).is_err());
}

#[test]
fn parameters_for_half() {
    let p = choose_params(1.0, 0.5, 0.5).unwrap();
    assert_eq!(p.eta, 0.25);
    assert_eq!(p.lambda, 0.00390625);
    assert_eq!(p.b, 1.0 / 256.0);
    assert!(p.star_holds());
    for m in [1u64, 7, 30] {
        assert!((p.bound(2 * m) - p.bound(m).powi(2)).abs() < 1e-15);
        assert!(p.bound(m + 1) < p.bound(m));
    }
    let flat = choose_params(1.0, 0.5, 0.0).unwrap();
    assert_eq!(flat.bound(1000), 1.0);
}

#[test]
fn hand_convolutions() {
    let uniform = TailSpec::new(1.0, 0.5, vec![0.5, 0.5]).unwrap();
    assert_eq!(exact_tail(&uniform, 2, 2).unwrap(), 0.25);
    assert_eq!(exact_tail(&uniform, 1, 0).unwrap(), 1.0);
    assert_eq!(convolution_power(&[0.5, 0.5], 3).unwrap(), vec![0.125, 0.375, 0.375, 0.125]);
}

#[test]
fn convolution_moments_scale_with_m() {
    for spec in test_specs() {
        let (m1, v1) = moments(spec.pmf());
        assert!((m1 - spec.mean()).abs() < 1e-12);
        for m in [1u64, 2, 10, 50] {
            let conv = convolution_power(spec.pmf(), m).unwrap();
            let (mm, vm) = moments(&conv);
            let scale = m as f64;
            assert!((mm - scale * m1).abs() <= 1e-9 * scale * m1, "mean {mm} vs {}", scale * m1);
            assert!((vm - scale * v1).abs() <= 1e-9 * scale * v1, "var {vm} vs {}", scale * v1);
        }
    }
}

#[test]
fn tail_is_monotone_in_threshold() {
    let spec = TailSpec::extremal(1.0, 0.5).unwrap();
    let mut last = 1.0;
    for threshold in 0..200 {
        let t = exact_tail(&spec, 20, threshold).unwrap();
        assert!(t <= last + 1e-15);
        last = t;
    }
}

#[test]
fn lemma_holds_on_every_instance() {
    for spec in test_specs() {
        for eps in EPS_GRID {
            for m in 1..=50u64 {
                let cert = certify(&spec, m, eps).unwrap();
                assert!(
                    cert.exact_tail <= cert.bound,
                    "C={} rho={} m={m} eps={eps}: {} > {}",
                    spec.c(),
                    spec.rho(),
                    cert.exact_tail,
                    cert.bound
                );
                assert!(cert.exact_tail <= cert.chernoff * (1.0 + 1e-12));
                assert!(cert.slack.second_moment_slack() >= 0.0 && cert.slack.mgf_slack() >= 0.0);
            }
        }
    }
}

#[test]
fn chernoff_bound_at_other_lambdas() {
    let spec = TailSpec::geometric(0.5, 60).unwrap();
    for lambda in [0.01, 0.1, 0.3, 0.6] {
        for threshold in [60u64, 90, 120] {
            let exact = exact_tail(&spec, 30, threshold).unwrap();
            assert!(exact <= chernoff_bound(&spec, 30, threshold, lambda) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn mgf_chain_edges() {
    let geometric = TailSpec::geometric(0.5, 200).unwrap();
    let lambda = choose_params(1.0, 0.5, 0.5).unwrap().lambda;
    assert!(mgf_chain_check(&geometric, lambda).unwrap().holds());

    let point = TailSpec::new(1.0, 0.5, vec![1.0]).unwrap();
    let s = mgf_chain_check(&point, 0.1).unwrap();
    assert_eq!(s.second_moment, 0.0);
    assert!(s.holds());

    let tiny = mgf_chain_check(&geometric, 1e-9).unwrap();
    assert!((tiny.mgf - 1.0).abs() < 1e-8 && tiny.mgf_slack() >= 0.0);

    // rho e^lambda >= 1
    assert!(mgf_chain_check(&geometric, 0.7).is_err());
}

#[test]
fn invalid_laws_are_rejected() {
    assert!(TailSpec::new(1.0, 0.5, vec![0.4, 0.4, 0.2]).is_err());
    assert!(TailSpec::new(1.0, 0.5, vec![0.5, 0.4]).is_err());
    assert!(TailSpec::new(1.0, 1.0, vec![1.0]).is_err());
}

#[test]
fn huge_supports_are_refused() {
    let spec = TailSpec::extremal(1.0, 0.5).unwrap();
    assert!(matches!(exact_tail(&spec, 100_000, 10), Err(Error::TooLarge { .. })));
}
