//! Coherent-state gate and target ensembles: sequential scattering
//! probabilities, Monte Carlo retrieval efficiency and the exponential law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateEnsembleParams {
    /// Mean target photon number α².
    pub alpha_sq: f64,
    /// Mean gate excitation number α_g².
    pub alpha_g_sq: f64,
    pub p_sc: f64,
    pub eta0: f64,
}

impl GateEnsembleParams {
    pub fn new(alpha_sq: f64, alpha_g_sq: f64, p_sc: f64, eta0: f64) -> Result<Self> {
        let p = Self {
            alpha_sq,
            alpha_g_sq,
            p_sc,
            eta0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_sq >= 0.0
            && self.alpha_sq.is_finite()
            && self.alpha_g_sq > 0.0
            && self.alpha_g_sq.is_finite()
            && (0.0..=1.0).contains(&self.p_sc)
            && (0.0..=1.0).contains(&self.eta0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid ensemble parameters {self:?}")))
        }
    }
}

/// What a photon does when it reaches an excitation that has already been
/// decohered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScatterModel {
    /// It still blocks and can scatter the photon again. Reproduces the
    /// cumulative-k probabilities below.
    #[default]
    StillBlocks,
    /// It is transparent; photons only interact with intact excitations.
    Transparent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// η₀·mean(n_g′)/α_g².
    #[default]
    SurvivorMean,
    /// η₀·(1 − mean(n_g − n_g′)/α_g²), using E[n_g] = α_g² exactly.
    LossControlVariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub eta: f64,
    pub stderr: f64,
    pub trials: u64,
}

/// (1 − p)^{n_g·n}.
pub fn prob_preserve_all(n: u32, n_g: u32, p_sc: f64) -> f64 {
    (1.0 - p_sc).powf(n_g as f64 * n as f64)
}

/// Probability that n photons decohere exactly one of n_g excitations:
/// Σ_k [(1−p)^{k−1}p + (1−p)^{n_g}]ⁿ − n_g(1−p)^{n_g·n}.
///
/// Term k is the chance that every photon either scatters off excitation k or
/// passes all of them; the all-pass event is contained in each of the n_g
/// terms and is removed once per term.
pub fn prob_one_decohered(n: u32, n_g: u32, p_sc: f64) -> Result<f64> {
    if n_g == 0 {
        return Err(Error::Usage("prob_one_decohered needs at least one gate excitation".into()));
    }
    let q = 1.0 - p_sc;
    let pass = q.powi(n_g as i32);
    let sum: f64 = (1..=n_g).map(|k| (q.powi(k as i32 - 1) * p_sc + pass).powi(n as i32)).sum();
    Ok((sum - n_g as f64 * prob_preserve_all(n, n_g, p_sc)).max(0.0))
}

/// Distribution of the number of decohered excitations, by exhaustive
/// enumeration of every photon's outcome. Entry j is P(n_g − n_g′ = j).
pub fn loss_distribution(n: u32, n_g: u32, p_sc: f64, model: ScatterModel) -> Vec<f64> {
    fn recurse(left: u32, lost: &mut Vec<bool>, weight: f64, p: f64, model: ScatterModel, out: &mut [f64]) {
        if left == 0 {
            out[lost.iter().filter(|l| **l).count()] += weight;
            return;
        }
        let mut reach = 1.0;
        for k in 0..lost.len() {
            if model == ScatterModel::Transparent && lost[k] {
                continue;
            }
            let was = lost[k];
            lost[k] = true;
            recurse(left - 1, lost, weight * reach * p, p, model, out);
            lost[k] = was;
            reach *= 1.0 - p;
        }
        recurse(left - 1, lost, weight * reach, p, model, out);
    }
    let mut out = vec![0.0; n_g as usize + 1];
    recurse(n, &mut vec![false; n_g as usize], 1.0, p_sc, model, &mut out);
    out
}

/// Exact model expectation for [`ScatterModel::StillBlocks`]:
/// η₀/α_g² · Σ_k P(N_g ≥ k)·exp(−α²p(1−p)^{k−1}).
pub fn exact_efficiency(params: &GateEnsembleParams) -> Result<f64> {
    params.validate()?;
    let lam = params.alpha_g_sq;
    let (p, q) = (params.p_sc, 1.0 - params.p_sc);
    let mut pmf = (-lam).exp();
    let mut tail = 1.0 - pmf; // P(N_g ≥ 1)
    let mut sum = 0.0;
    for k in 1..10_000 {
        sum += tail * (-params.alpha_sq * p * q.powi(k - 1)).exp();
        pmf *= lam / k as f64;
        tail -= pmf;
        if tail < 1e-17 * lam {
            break;
        }
    }
    Ok(params.eta0 * sum / lam)
}

const BLOCK: u64 = 1 << 14;

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// One trial: returns (n_g, n_g′).
fn trial(rng: &mut ChaCha8Rng, params: &GateEnsembleParams, model: ScatterModel, lost: &mut Vec<bool>) -> (u64, u64) {
    let n_g = poisson(rng, params.alpha_g_sq) as usize;
    let n = poisson(rng, params.alpha_sq);
    lost.clear();
    lost.resize(n_g, false);
    for _ in 0..n {
        for slot in lost.iter_mut() {
            if model == ScatterModel::Transparent && *slot {
                continue;
            }
            if rng.gen::<f64>() < params.p_sc {
                *slot = true;
                break;
            }
        }
    }
    let survivors = lost.iter().filter(|l| !**l).count();
    (n_g as u64, survivors as u64)
}

/// Monte Carlo estimate with the default model and estimator.
pub fn mc_efficiency(params: &GateEnsembleParams, trials: u64, seed: u64) -> Result<McEstimate> {
    mc_efficiency_with(params, trials, seed, ScatterModel::default(), Estimator::default())
}

/// Samples n ~ Poisson(α²) photons and n_g ~ Poisson(α_g²) excitations per
/// trial. Every trial draws from its own ChaCha stream selected by the trial
/// index, so results do not depend on the thread count.
pub fn mc_efficiency_with(
    params: &GateEnsembleParams,
    trials: u64,
    seed: u64,
    model: ScatterModel,
    estimator: Estimator,
) -> Result<McEstimate> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::Usage("at least one trial is required".into()));
    }
    let blocks = trials.div_ceil(BLOCK);
    // exact integer sums make the reduction order irrelevant
    let (s, s2) = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lost = Vec::new();
            let (mut s, mut s2) = (0u128, 0u128);
            for t in b * BLOCK..((b + 1) * BLOCK).min(trials) {
                rng.set_stream(t);
                rng.set_word_pos(0);
                let (n_g, kept) = trial(&mut rng, params, model, &mut lost);
                let x = match estimator {
                    Estimator::SurvivorMean => kept,
                    Estimator::LossControlVariate => n_g - kept,
                } as u128;
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nt = trials as f64;
    let mean = s as f64 / nt;
    let var = if trials > 1 {
        ((s2 as f64 - nt * mean * mean) / (nt - 1.0)).max(0.0)
    } else {
        0.0
    };
    let scale = params.eta0 / params.alpha_g_sq;
    let eta = match estimator {
        Estimator::SurvivorMean => scale * mean,
        Estimator::LossControlVariate => params.eta0 - scale * mean,
    };
    Ok(McEstimate {
        eta,
        stderr: scale * (var / nt).sqrt(),
        trials,
    })
}

/// η₀e^{−α_sc²/α_g²}.
pub fn eta_exponential(alpha_sc_sq: f64, alpha_g_sq: f64, eta0: f64) -> Result<f64> {
    if alpha_g_sq == 0.0 {
        return Err(Error::Domain("α_g² = 0 leaves nothing to retrieve".into()));
    }
    Ok(eta0 * (-alpha_sc_sq / alpha_g_sq).exp())
}

/// η₀e^{−p_sc α²}.
pub fn eta_linear_law(params: &GateEnsembleParams) -> f64 {
    params.eta0 * (-params.p_sc * params.alpha_sq).exp()
}

/// Mean number of scattered photons α²(1 − e^{−p_sc α_g²}).
pub fn alpha_sc_from_alpha(alpha_sq: f64, alpha_g_sq: f64, p_sc: f64) -> f64 {
    alpha_sq * -(-p_sc * alpha_g_sq).exp_m1()
}

/// α²α_g²p_sc.
pub fn alpha_sc_linearized(alpha_sq: f64, alpha_g_sq: f64, p_sc: f64) -> f64 {
    alpha_sq * alpha_g_sq * p_sc
}

/// η₀e^{−α²}: only the vacuum part of the target pulse certainly leaves the gate intact.
pub fn vacuum_floor(alpha_sq: f64, eta0: f64) -> f64 {
    eta0 * (-alpha_sq).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert_eq!(prob_preserve_all(1, 1, 0.5), 0.5);
        assert!((prob_preserve_all(2, 1, 0.1) - 0.81).abs() < 1e-15);
        assert_eq!(prob_preserve_all(0, 4, 0.3), 1.0);
        for n in 0..6 {
            let want = 1.0 - 0.7f64.powi(n as i32);
            assert!((prob_one_decohered(n, 1, 0.3).unwrap() - want).abs() < 1e-15);
        }
        assert!((prob_one_decohered(1, 2, 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(prob_one_decohered(1, 0, 0.5), Err(Error::Usage(_))));
        let p = 1e-6;
        assert!((prob_one_decohered(3, 2, p).unwrap() - 6.0 * p).abs() < 1e-9);
        assert!((eta_exponential(0.5, 0.5, 0.2).unwrap() - 0.2 * (-1.0f64).exp()).abs() < 1e-15);
        assert!(matches!(eta_exponential(0.5, 0.0, 0.2), Err(Error::Domain(_))));
        assert!((alpha_sc_from_alpha(10.0, 0.5, 0.1) - 0.487706).abs() < 1e-6);
        assert_eq!(alpha_sc_from_alpha(3.0, 0.5, 0.0), 0.0);
        assert!((alpha_sc_from_alpha(3.0, 1e4, 0.1) - 3.0).abs() < 1e-12);
        assert_eq!(vacuum_floor(0.0, 0.4), 0.4);
        assert!((vacuum_floor(1.0, 0.4) - 0.4 / std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn enumeration_matches_formulas_and_is_complete() {
        for n in 0..=3 {
            for n_g in 1..=3 {
                for p in [0.1, 0.5, 0.9] {
                    let d = loss_distribution(n, n_g, p, ScatterModel::StillBlocks);
                    assert!((d[0] - prob_preserve_all(n, n_g, p)).abs() < 1e-12);
                    assert!((d[1] - prob_one_decohered(n, n_g, p).unwrap()).abs() < 1e-12, "n={n} n_g={n_g} p={p}");
                    let higher: f64 = d[2..].iter().sum();
                    let total = prob_preserve_all(n, n_g, p) + prob_one_decohered(n, n_g, p).unwrap() + higher;
                    assert!((total - 1.0).abs() < 1e-12);
                    let t: f64 = loss_distribution(n, n_g, p, ScatterModel::Transparent).iter().sum();
                    assert!((t - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trivial_monte_carlo_cases() {
        let base = GateEnsembleParams::new(0.0, 0.5, 0.3, 0.4).unwrap();
        let est = mc_efficiency_with(&base, 5000, 3, ScatterModel::StillBlocks, Estimator::LossControlVariate).unwrap();
        assert_eq!(est.eta, 0.4);
        assert_eq!(est.stderr, 0.0);
        let none = GateEnsembleParams { p_sc: 0.0, alpha_sq: 5.0, ..base };
        let est = mc_efficiency_with(&none, 5000, 3, ScatterModel::StillBlocks, Estimator::LossControlVariate).unwrap();
        assert_eq!(est.eta, 0.4);
        // survivor mean: no scattering leaves the plain sample mean of n_g
        let plain = mc_efficiency(&base, 200_000, 3).unwrap();
        assert!((plain.eta - 0.4).abs() < 4.0 * plain.stderr);
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let p = GateEnsembleParams::new(4.0, 0.5, 0.05, 1.0).unwrap();
        let a = mc_efficiency(&p, 50_000, 11).unwrap();
        let b = mc_efficiency(&p, 50_000, 11).unwrap();
        assert_eq!(a, b);
        let c = mc_efficiency(&p, 50_000, 12).unwrap();
        assert_ne!(a.eta, c.eta);
    }

    #[test]
    fn monte_carlo_matches_exact_model() {
        for (p_sc, a2) in [(0.05, 6.0), (0.3, 5.0)] {
            let p = GateEnsembleParams::new(a2, 0.5, p_sc, 1.0).unwrap();
            let exact = exact_efficiency(&p).unwrap();
            let est = mc_efficiency(&p, 400_000, 5).unwrap();
            assert!((est.eta - exact).abs() < 4.0 * est.stderr, "{est:?} vs {exact}");
        }
    }

    #[test]
    fn protection_effect_at_large_scattering_probability() {
        for a2 in [1.0, 2.0, 5.0, 10.0] {
            let p = GateEnsembleParams::new(a2, 0.5, 0.3, 1.0).unwrap();
            let exact = exact_efficiency(&p).unwrap();
            let law = eta_exponential(alpha_sc_from_alpha(a2, 0.5, 0.3), 0.5, 1.0).unwrap();
            assert!(exact > law && exact > eta_linear_law(&p));
        }
    }

    proptest! {
        #[test]
        fn probabilities_stay_in_range(n in 0u32..12, n_g in 1u32..6, p in 0.0f64..1.0) {
            let a = prob_preserve_all(n, n_g, p);
            let b = prob_one_decohered(n, n_g, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
            prop_assert!(a + b <= 1.0 + 1e-12);
        }

        #[test]
        fn scattered_count_below_linearization(a2 in 0.0f64..20.0, ag in 0.0f64..3.0, p in 0.0f64..1.0) {
            let e = alpha_sc_from_alpha(a2, ag, p);
            prop_assert!(e <= alpha_sc_linearized(a2, ag, p) + 1e-12);
            prop_assert!(e <= a2 + 1e-12);
        }
    }
}
