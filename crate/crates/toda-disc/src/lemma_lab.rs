//! Finite-dimensional oracles for the pointwise inequalities that drive the
//! PDE estimates, exercised by randomized and local search — no PDE involved.
//!
//! Existential constants (δ̂, Ĉ₁) are *estimated* by search and reported as
//! empirical values, never asserted as proven bounds.
//!
//! ```
//! use toda_disc::lemma_lab::{lemma1_margin, LemmaSample};
//!
//! let sample = LemmaSample::new(3, vec![2.0, 0.5], 0.3).unwrap();
//! assert!(lemma1_margin(&sample) >= 0.0);
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, TodaError};

/// A pointwise sample: positive H_1..H_{r-1}, a weight value φ (may be -∞),
/// and optionally a perturbation ratio vector s_1..s_r with Πs_j = 1.
#[derive(Clone, Debug)]
pub struct LemmaSample {
    pub r: usize,
    /// H_1..H_{r-1}
    pub h: Vec<f64>,
    /// φ; f64::NEG_INFINITY marks the degenerate branch
    pub phi: f64,
    pub s: Option<Vec<f64>>,
}

impl LemmaSample {
    pub fn new(r: usize, h: Vec<f64>, phi: f64) -> Result<LemmaSample> {
        if r < 2 {
            return Err(TodaError::InvalidRank(r));
        }
        if h.len() != r - 1 || h.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(TodaError::InvalidArgument(format!(
                "need {} positive finite H values, got {:?}",
                r - 1,
                h
            )));
        }
        if phi.is_nan() || phi == f64::INFINITY {
            return Err(TodaError::InvalidArgument("phi must be real or -inf".into()));
        }
        Ok(LemmaSample { r, h, phi, s: None })
    }

    pub fn with_s(mut self, s: Vec<f64>) -> Result<LemmaSample> {
        if s.len() != self.r || s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(TodaError::InvalidArgument(format!(
                "need {} positive finite s values",
                self.r
            )));
        }
        let log_sum: f64 = s.iter().map(|v| v.ln()).sum();
        if log_sum.abs() > 1e-12 {
            return Err(TodaError::InvalidArgument(format!(
                "s must have unit product, log-defect {log_sum:.3e}"
            )));
        }
        self.s = Some(s);
        Ok(self)
    }

    /// Derived H_r = H_0 = e^{rφ}/Π H_j (0 on the φ = -∞ branch).
    pub fn h0(&self) -> f64 {
        if self.phi == f64::NEG_INFINITY {
            return 0.0;
        }
        let log_prod: f64 = self.h.iter().map(|v| v.ln()).sum();
        (self.r as f64 * self.phi - log_prod).exp()
    }

    /// The cyclic vector H_0, H_1, .., H_{r-1}.
    fn cycle(&self) -> Vec<f64> {
        let mut v = vec![self.h0()];
        v.extend_from_slice(&self.h);
        v
    }
}

/// Σ_{j=1}^r (H_{j-1} - H_j)² over the cycle (H_r = H_0).
fn quadratic_gap(cycle: &[f64]) -> f64 {
    let r = cycle.len();
    (0..r).map(|j| (cycle[j] - cycle[(j + 1) % r]).powi(2)).sum()
}

/// Margin of the quadratic-gap inequality:
/// Σ(H_{j-1}-H_j)² - C·(ΣH_j - r·e^φ)² with C = 1/(r²(r-1)); on the
/// φ = -∞ branch the right side is replaced by (2/(r²(r-1)))·ΣH_j².
pub fn lemma1_margin(sample: &LemmaSample) -> f64 {
    let r = sample.r;
    let c = 1.0 / (r * r * (r - 1)) as f64;
    let cycle = sample.cycle();
    let lhs = quadratic_gap(&cycle);
    if sample.phi == f64::NEG_INFINITY {
        let sq: f64 = sample.h.iter().map(|v| v * v).sum();
        lhs - 2.0 * c * sq
    } else {
        let sum: f64 = cycle.iter().sum();
        lhs - c * (sum - r as f64 * sample.phi.exp()).powi(2)
    }
}

/// Conditional bound: when e^φ ≤ Hbar and ΣH_j ≥ 2r·Hbar, verify
/// Σ(H_{j-1}-H_j)² ≥ (C/4)(ΣH_j)². Returns true when the hypothesis fails
/// (vacuous) or the bound holds.
pub fn lemma2_check(sample: &LemmaSample, hbar: f64) -> bool {
    let r = sample.r;
    let cycle = sample.cycle();
    let sum: f64 = cycle.iter().sum();
    if !(sample.phi.exp() <= hbar && sum >= 2.0 * r as f64 * hbar) {
        return true;
    }
    let c = 1.0 / (r * r * (r - 1)) as f64;
    quadratic_gap(&cycle) >= c / 4.0 * sum * sum
}

/// Empirical δ̂ = inf Σ(H_{j-1}-H_j)²/(ΣH_j)² over samples with some
/// H_j ≤ ε·e^φ (j = 1..r-1), by randomized search with local refinement.
/// The objective is scale-invariant, so samples are drawn on the simplex.
pub fn lemma3_delta_search(r: usize, epsilon: f64, budget: usize, seed: u64) -> Result<f64> {
    if r < 2 {
        return Err(TodaError::InvalidRank(r));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(TodaError::InvalidArgument(format!("epsilon {epsilon} not in (0,1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objective = |cycle: &[f64]| -> Option<f64> {
        let sum: f64 = cycle.iter().sum();
        // e^φ from e^{rφ} = Π cycle values
        let log_prod: f64 = cycle.iter().map(|v| v.ln()).sum();
        let ephi = (log_prod / r as f64).exp();
        if !cycle[1..].iter().any(|&hj| hj <= epsilon * ephi) {
            return None;
        }
        Some(quadratic_gap(cycle) / (sum * sum))
    };
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        // cycle = (H_0, H_1..H_{r-1}) on the simplex, with one coordinate
        // forced under the constraint so most draws are feasible
        let mut v: Vec<f64> = (0..r).map(|_| rng.gen_range(1e-6..1.0f64)).collect();
        let small = rng.gen_range(1..r);
        v[small] *= 1e-4;
        let sum: f64 = v.iter().sum();
        v.iter().map(|x| x / sum).collect()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let explore = budget / 2;
    for _ in 0..explore {
        let v = draw(&mut rng);
        if let Some(q) = objective(&v) {
            if best.as_ref().map_or(true, |(b, _)| q < *b) {
                best = Some((q, v));
            }
        }
    }
    let (mut best_q, mut best_v) =
        best.ok_or_else(|| TodaError::InvalidArgument("no feasible sample found".into()))?;
    // local refinement: multiplicative jitter with shrinking scale
    let mut scale = 0.5;
    for it in 0..budget - explore {
        let mut v: Vec<f64> = best_v
            .iter()
            .map(|&x| x * (scale * rng.gen_range(-1.0..1.0f64)).exp())
            .collect();
        let sum: f64 = v.iter().sum();
        for x in &mut v {
            *x /= sum;
        }
        if let Some(q) = objective(&v) {
            if q < best_q {
                best_q = q;
                best_v = v;
            }
        }
        if it % 64 == 63 {
            scale *= 0.9;
        }
    }
    Ok(best_q)
}

/// Q = Σ_{j=1}^r s_j^{-1}(s_{j+1}-s_j)²·H_j (s_{r+1} = s_1, H_r = H_0) and
/// deviation = Σ|s_j - 1|, under the caps H_j ≤ B and Σs_j ≤ Cbound.
pub fn lemma4_probe(sample: &LemmaSample, b: f64, cbound: f64) -> Result<(f64, f64)> {
    let s = sample
        .s
        .as_ref()
        .ok_or_else(|| TodaError::InvalidArgument("sample carries no s vector".into()))?;
    if sample.h.iter().any(|&v| v > b) {
        return Err(TodaError::InvalidArgument(format!("some H_j exceeds the cap B = {b}")));
    }
    let s_sum: f64 = s.iter().sum();
    if s_sum > cbound {
        return Err(TodaError::InvalidArgument(format!(
            "Σs = {s_sum} exceeds the cap {cbound}"
        )));
    }
    let r = sample.r;
    let mut q = 0.0;
    for j in 1..=r {
        let sj = s[j - 1];
        let sj1 = s[j % r];
        let hj = if j == r { sample.h0() } else { sample.h[j - 1] };
        q += (sj1 - sj) * (sj1 - sj) / sj * hj;
    }
    let deviation = s.iter().map(|&v| (v - 1.0).abs()).sum();
    Ok((q, deviation))
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaRankSummary {
    pub r: usize,
    pub lemma1_min_margin: f64,
    pub lemma1_min_margin_deg: f64,
    /// curiosity metric: min of LHS/RHS of the quadratic-gap bound (the
    /// optimal constant is unknown; this only witnesses the empirical gap)
    pub lemma1_min_ratio: f64,
    pub lemma2_conforming: usize,
    pub lemma2_violations: usize,
    pub delta_hat: Vec<(f64, f64)>,
    pub lemma4_zero_violations: usize,
    /// fitted empirical modulus: max deviation/√Q over conforming samples
    pub lemma4_c1_hat: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaSuiteSummary {
    pub seed: u64,
    pub samples: usize,
    pub per_rank: Vec<LemmaRankSummary>,
}

fn draw_sample(rng: &mut ChaCha8Rng, r: usize) -> LemmaSample {
    let h: Vec<f64> =
        (0..r - 1).map(|_| 10f64.powf(rng.gen_range(-3.0..3.0f64))).collect();
    let phi = if rng.gen_bool(0.2) { f64::NEG_INFINITY } else { rng.gen_range(-5.0..5.0f64) };
    LemmaSample { r, h, phi, s: None }
}

fn draw_s(rng: &mut ChaCha8Rng, r: usize, cbound: f64) -> Vec<f64> {
    loop {
        let mut logs: Vec<f64> = (0..r).map(|_| rng.gen_range(-0.8..0.8f64)).collect();
        let mean = logs.iter().sum::<f64>() / r as f64;
        for l in &mut logs {
            *l -= mean;
        }
        let s: Vec<f64> = logs.iter().map(|&l| l.exp()).collect();
        if s.iter().sum::<f64>() <= cbound {
            return s;
        }
    }
}

/// Run the randomized suite for ranks 2..=6 with `samples` draws per rank.
pub fn run_suite(samples: usize, seed: u64) -> LemmaSuiteSummary {
    let mut per_rank = Vec::new();
    for r in 2..=6usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (r as u64) << 32);
        let mut min_margin = f64::INFINITY;
        let mut min_margin_deg = f64::INFINITY;
        let mut min_ratio = f64::INFINITY;
        let mut conforming = 0usize;
        let mut violations = 0usize;
        for _ in 0..samples {
            let s = draw_sample(&mut rng, r);
            let m = lemma1_margin(&s);
            if s.phi == f64::NEG_INFINITY {
                min_margin_deg = min_margin_deg.min(m);
            } else {
                min_margin = min_margin.min(m);
            }
            let cycle = s.cycle();
            let c = 1.0 / (r * r * (r - 1)) as f64;
            let rhs = if s.phi == f64::NEG_INFINITY {
                2.0 * c * s.h.iter().map(|v| v * v).sum::<f64>()
            } else {
                let sum: f64 = cycle.iter().sum();
                c * (sum - r as f64 * s.phi.exp()).powi(2)
            };
            if rhs > 0.0 {
                min_ratio = min_ratio.min(quadratic_gap(&cycle) / rhs);
            }
            // lemma2 with a Hbar drawn around the hypothesis boundary
            let hbar = 10f64.powf(rng.gen_range(-2.0..2.0f64));
            let sum: f64 = cycle.iter().sum();
            if s.phi.exp() <= hbar && sum >= 2.0 * r as f64 * hbar {
                conforming += 1;
                if !lemma2_check(&s, hbar) {
                    violations += 1;
                }
            }
        }
        let delta_hat = [0.25, 0.5, 0.75]
            .iter()
            .map(|&eps| {
                (eps, lemma3_delta_search(r, eps, 20_000, seed ^ 0xd1f).unwrap())
            })
            .collect();
        // exact-zero property on constructed Q = 0 samples (s ≡ 1)
        let (b, cbound) = (10.0, 10.0);
        let mut zero_violations = 0usize;
        for _ in 0..samples.min(10_000) {
            let mut s = draw_sample(&mut rng, r);
            s.h = s.h.iter().map(|&v| v.min(b)).collect();
            let s = s.with_s(vec![1.0; r]).unwrap();
            let (q, dev) = lemma4_probe(&s, b, cbound).unwrap();
            if q != 0.0 || dev != 0.0 {
                zero_violations += 1;
            }
        }
        let mut c1_hat = 0.0f64;
        for _ in 0..samples.min(10_000) {
            let mut smp = draw_sample(&mut rng, r);
            smp.h = smp.h.iter().map(|&v| v.min(b)).collect();
            let smp = smp.with_s(draw_s(&mut rng, r, cbound)).unwrap();
            let (q, dev) = lemma4_probe(&smp, b, cbound).unwrap();
            if q > 0.0 {
                c1_hat = c1_hat.max(dev / q.sqrt());
            }
        }
        per_rank.push(LemmaRankSummary {
            r,
            lemma1_min_margin: min_margin,
            lemma1_min_margin_deg: min_margin_deg,
            lemma1_min_ratio: min_ratio,
            lemma2_conforming: conforming,
            lemma2_violations: violations,
            delta_hat,
            lemma4_zero_violations: zero_violations,
            lemma4_c1_hat: c1_hat,
        });
    }
    LemmaSuiteSummary { seed, samples, per_rank }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_arithmetic() {
        // flat point: every gap zero, sum matches r·e^φ
        let s = LemmaSample::new(2, vec![1.0], 0.0).unwrap();
        assert_eq!(lemma1_margin(&s), 0.0);
        // r = 2, H_1 = 2, φ = 0: H_0 = ½, LHS = 4.5, RHS = ¼·0.25
        let s = LemmaSample::new(2, vec![2.0], 0.0).unwrap();
        assert!((s.h0() - 0.5).abs() < 1e-15);
        assert!((lemma1_margin(&s) - 4.4375).abs() < 1e-12);
        // degenerate branch, r = 2: 2H² - ½H²
        let s = LemmaSample::new(2, vec![3.0], f64::NEG_INFINITY).unwrap();
        assert_eq!(s.h0(), 0.0);
        assert!((lemma1_margin(&s) - (18.0 - 4.5)).abs() < 1e-12);
    }

    #[test]
    fn conditional_bound_arithmetic() {
        // hypothesis not met → vacuous pass
        let s = LemmaSample::new(2, vec![1.0], 0.0).unwrap();
        assert!(lemma2_check(&s, 1.0));
        // r = 2, H_1 = 4, φ = 0: sum = 4.25 ≥ 4, 28.125 ≥ 1.129
        let s = LemmaSample::new(2, vec![4.0], 0.0).unwrap();
        let cycle_sum = 4.0 + 0.25;
        assert!(cycle_sum >= 4.0);
        assert!(lemma2_check(&s, 1.0));
    }

    #[test]
    fn delta_search_basics() {
        assert!(lemma3_delta_search(2, 0.0, 100, 1).is_err());
        assert!(lemma3_delta_search(2, 1.0, 100, 1).is_err());
        let d = lemma3_delta_search(2, 0.5, 8_000, 42).unwrap();
        assert!(d > 0.0);
        // stable within ±10% under a doubled budget
        let d2 = lemma3_delta_search(2, 0.5, 16_000, 43).unwrap();
        assert!((d - d2).abs() <= 0.1 * d.max(d2), "{d} vs {d2}");
        // δ̂ decreasing in ε
        let lo = lemma3_delta_search(3, 0.25, 8_000, 7).unwrap();
        let mid = lemma3_delta_search(3, 0.5, 8_000, 7).unwrap();
        let hi = lemma3_delta_search(3, 0.75, 8_000, 7).unwrap();
        assert!(lo >= mid && mid >= hi, "{lo} {mid} {hi}");
    }

    #[test]
    fn probe_arithmetic() {
        let s = LemmaSample::new(2, vec![1.0], -2.0).unwrap().with_s(vec![1.0, 1.0]).unwrap();
        assert_eq!(lemma4_probe(&s, 10.0, 10.0).unwrap(), (0.0, 0.0));
        let s = LemmaSample::new(2, vec![1.0], -2.0).unwrap().with_s(vec![2.0, 0.5]).unwrap();
        let (q, dev) = lemma4_probe(&s, 10.0, 10.0).unwrap();
        assert!(q >= 1.125);
        assert!((dev - 1.5).abs() < 1e-15);
        // cap enforcement
        let s = LemmaSample::new(2, vec![20.0], 0.0).unwrap().with_s(vec![1.0, 1.0]).unwrap();
        assert!(lemma4_probe(&s, 10.0, 10.0).is_err());
    }

    #[test]
    fn product_constraint_enforced() {
        assert!(LemmaSample::new(2, vec![1.0], 0.0).unwrap().with_s(vec![2.0, 1.0]).is_err());
        assert!(LemmaSample::new(1, vec![], 0.0).is_err());
        assert!(LemmaSample::new(3, vec![1.0, -2.0], 0.0).is_err());
    }

    #[test]
    fn randomized_suite_small() {
        let summary = run_suite(2_000, 12345);
        assert_eq!(summary.per_rank.len(), 5);
        for rank in &summary.per_rank {
            assert!(rank.lemma1_min_margin >= -1e-12, "r={}: {}", rank.r, rank.lemma1_min_margin);
            assert!(rank.lemma1_min_margin_deg >= -1e-12);
            assert!(rank.lemma2_violations == 0);
            assert!(rank.delta_hat.iter().all(|&(_, d)| d > 0.0));
            assert_eq!(rank.lemma4_zero_violations, 0);
            assert!(rank.lemma1_min_ratio >= 1.0);
        }
        // deterministic rerun
        let again = run_suite(2_000, 12345);
        assert_eq!(
            serde_json::to_string(&summary).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }
}
