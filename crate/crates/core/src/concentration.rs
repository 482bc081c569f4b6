//! Tail bound for sums of independent geometric-tailed integer variables,
//! with an exact convolution oracle.
//!
//! For independent non-negative integer `Y_1..Y_m` with
//! `Pr(Y_r >= k) <= C ρ^k` and `μ = C / (1 - ρ)`:
//!
//! ```text
//! Pr(Y_1 + ... + Y_m >= (1 + ε) μ m) <= exp(-B ε² m),   B = η³ / 4
//! ```
//!
//! where `η` satisfies `e^λ <= (1 - η) / ρ` for `λ = ε η³ / (2C)`. The
//! functions here pick `(η, λ, B)`, evaluate the intermediate moment
//! generating function inequalities exactly on a finite distribution, and
//! compute the true tail by dense convolution.

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest support (in points) [`exact_tail`] will convolve.
pub const MAX_SUPPORT: usize = 1_000_000;

/// Discarded tail mass when truncating an infinite law.
pub const TRUNCATION_TAIL: f64 = 1e-15;

/// A finite law on `{0..=K}` together with the constants of its tail bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailSpec {
    c: f64,
    rho: f64,
    pmf: Vec<f64>,
}

impl TailSpec {
    /// Checks that `pmf` sums to 1 within `1e-12` and that
    /// `Pr(Y >= k) <= C ρ^k` for every `k` in `1..=K`.
    pub fn new(c: f64, rho: f64, pmf: Vec<f64>) -> Result<Self> {
        check_constants(c, rho)?;
        if pmf.is_empty() || pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("pmf entries must lie in [0, 1]"));
        }
        let total: f64 = pmf.iter().rev().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("pmf sums to {total}")));
        }
        let spec = TailSpec { c, rho, pmf };
        let survival = spec.survival();
        for (k, &s) in survival.iter().enumerate().skip(1) {
            let bound = c * rho.powi(k as i32);
            if s > bound * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "Pr(Y >= {k}) = {s:e} exceeds C rho^k = {bound:e}"
                )));
            }
        }
        Ok(spec)
    }

    /// The law whose survival is exactly `min(1, C ρ^k)`, truncated where the
    /// remaining mass drops below [`TRUNCATION_TAIL`] and renormalized. For
    /// `C = 1` this is the geometric law `Pr(Y = k) = (1 - ρ) ρ^k`.
    pub fn extremal(c: f64, rho: f64) -> Result<Self> {
        check_constants(c, rho)?;
        let survival = |k: usize| (c * rho.powi(k as i32)).min(1.0);
        let mut k_max = 0usize;
        while survival(k_max + 1) >= TRUNCATION_TAIL {
            k_max += 1;
        }
        Self::truncated(c, rho, k_max, survival)
    }

    /// Geometric law with `Pr(Y >= k) = ρ^k`, cut at `k_max` and renormalized.
    pub fn geometric(rho: f64, k_max: usize) -> Result<Self> {
        check_constants(1.0, rho)?;
        Self::truncated(1.0, rho, k_max, |k| rho.powi(k as i32))
    }

    fn truncated(c: f64, rho: f64, k_max: usize, survival: impl Fn(usize) -> f64) -> Result<Self> {
        let kept = 1.0 - survival(k_max + 1);
        let pmf = (0..=k_max).map(|k| (survival(k) - survival(k + 1)) / kept).collect();
        Self::new(c, rho, pmf)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Truncation point `K`.
    pub fn support_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn mu(&self) -> f64 {
        self.c / (1.0 - self.rho)
    }

    /// `Pr(Y >= k)` for `k = 0..=K`, summed from the far tail inwards.
    pub fn survival(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.pmf.len()];
        let mut acc = 0.0;
        for k in (0..self.pmf.len()).rev() {
            acc += self.pmf[k];
            out[k] = acc;
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pmf.iter().enumerate().map(|(k, p)| (k as f64 - m).powi(2) * p).sum()
    }
}

fn check_constants(c: f64, rho: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

/// `μ = C / (1 - ρ)`.
pub fn mu(c: f64, rho: f64) -> Result<f64> {
    check_constants(c, rho)?;
    Ok(c / (1.0 - rho))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LemmaParams {
    pub c: f64,
    pub rho: f64,
    pub eps: f64,
    pub mu: f64,
    pub eta: f64,
    pub lambda: f64,
    /// `B = η³ / 4`.
    pub b: f64,
}

impl LemmaParams {
    /// `exp(-B ε² m)`.
    pub fn bound(&self, m: u64) -> f64 {
        (-self.b * self.eps * self.eps * m as f64).exp()
    }

    /// `⌈(1 + ε) μ m⌉`.
    pub fn threshold(&self, m: u64) -> u64 {
        ((1.0 + self.eps) * self.mu * m as f64 - 1e-9).ceil() as u64
    }

    /// Whether `e^λ <= (1 - η) / ρ`.
    pub fn star_holds(&self) -> bool {
        self.lambda.exp() <= (1.0 - self.eta) / self.rho
    }
}

/// Halves `η` from `(1 - ρ) / 2` until `exp(ε η³ / (2C)) <= (1 - η) / ρ`.
pub fn choose_params(c: f64, rho: f64, eps: f64) -> Result<LemmaParams> {
    check_constants(c, rho)?;
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("eps must lie in [0, 1], got {eps}")));
    }
    let mut eta = (1.0 - rho) / 2.0;
    for _ in 0..64 {
        let lambda = eps * eta.powi(3) / (2.0 * c);
        if lambda.exp() <= (1.0 - eta) / rho {
            return Ok(LemmaParams {
                c,
                rho,
                eps,
                mu: c / (1.0 - rho),
                eta,
                lambda,
                b: eta.powi(3) / 4.0,
            });
        }
        eta /= 2.0;
    }
    Err(Error::Infeasible(format!("no eta for C={c}, rho={rho}, eps={eps}")))
}

/// Exact values and slacks of the two moment inequalities for `Z = Y / μ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MgfSlack {
    pub lambda: f64,
    /// `E[Z² e^{λZ}]`.
    pub second_moment: f64,
    /// `2C / (1 - ρ e^λ)³`.
    pub second_moment_bound: f64,
    /// `E[e^{λZ}]`.
    pub mgf: f64,
    /// `1 + λ + 2 λ² C / (1 - ρ e^λ)³`.
    pub mgf_bound: f64,
}

impl MgfSlack {
    pub fn second_moment_slack(&self) -> f64 {
        self.second_moment_bound - self.second_moment
    }

    pub fn mgf_slack(&self) -> f64 {
        self.mgf_bound - self.mgf
    }

    pub fn holds(&self) -> bool {
        self.second_moment_slack() >= 0.0 && self.mgf_slack() >= 0.0
    }
}

pub fn mgf_chain_check(spec: &TailSpec, lambda: f64) -> Result<MgfSlack> {
    let x = spec.rho * lambda.exp();
    if x >= 1.0 {
        return Err(Error::invalid(format!("rho e^lambda = {x} must be below 1")));
    }
    if lambda < 0.0 {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let mu = spec.mu();
    let mut second_moment = 0.0;
    let mut mgf = 0.0;
    for (k, &p) in spec.pmf.iter().enumerate().rev() {
        let z = k as f64 / mu;
        let e = (lambda * z).exp();
        second_moment += z * z * e * p;
        mgf += e * p;
    }
    let cube = (1.0 - x).powi(3);
    Ok(MgfSlack {
        lambda,
        second_moment,
        second_moment_bound: 2.0 * spec.c / cube,
        mgf,
        mgf_bound: 1.0 + lambda + 2.0 * lambda * lambda * spec.c / cube,
    })
}

/// The `m`-fold convolution power of `pmf`.
pub fn convolution_power(pmf: &[f64], m: u64) -> Result<Vec<f64>> {
    let k = pmf.len().saturating_sub(1);
    let points = (m as usize).saturating_mul(k).saturating_add(1);
    if points > MAX_SUPPORT {
        return Err(Error::TooLarge { points, limit: MAX_SUPPORT });
    }
    let mut acc = vec![1.0];
    for _ in 0..m {
        let mut next = vec![0.0; acc.len() + k];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &p) in pmf.iter().enumerate() {
                next[i + j] += a * p;
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// `Pr(Y_1 + ... + Y_m >= threshold)` by dense convolution.
pub fn exact_tail(spec: &TailSpec, m: u64, threshold: u64) -> Result<f64> {
    let dist = convolution_power(&spec.pmf, m)?;
    let start = threshold.min(dist.len() as u64) as usize;
    Ok(dist[start..].iter().rev().sum())
}

/// `e^{-λ threshold} (E e^{λY})^m`, the Markov bound on the same tail.
pub fn chernoff_bound(spec: &TailSpec, m: u64, threshold: u64, lambda: f64) -> f64 {
    let mgf: f64 = spec
        .pmf
        .iter()
        .enumerate()
        .rev()
        .map(|(k, p)| (lambda * k as f64).exp() * p)
        .sum();
    (-lambda * threshold as f64 + m as f64 * mgf.ln()).exp()
}

/// One certified instance of the inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub params: LemmaParams,
    pub m: u64,
    pub threshold: u64,
    pub exact_tail: f64,
    pub bound: f64,
    /// Markov bound at the chosen `λ` applied to `Y` directly.
    pub chernoff: f64,
    pub slack: MgfSlack,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.exact_tail <= self.bound && self.exact_tail <= self.chernoff && self.slack.holds()
    }
}

pub fn certify(spec: &TailSpec, m: u64, eps: f64) -> Result<Certificate> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let params = choose_params(spec.c, spec.rho, eps)?;
    let threshold = params.threshold(m);
    let exact_tail = exact_tail(spec, m, threshold)?;
    Ok(Certificate {
        params,
        m,
        threshold,
        exact_tail,
        bound: params.bound(m),
        chernoff: chernoff_bound(spec, m, threshold, params.lambda),
        slack: mgf_chain_check(spec, params.lambda)?,
    })
}
