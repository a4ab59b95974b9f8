//! Thurstonian utility fitting from pairwise choices.
//!
//! Each item carries a latent Gaussian utility N(mu, sigma^2); the
//! probability that A is chosen over B is Phi((mu_A - mu_B) /
//! sqrt(sigma_A^2 + sigma_B^2)). Utilities are fit by full-batch Adam on
//! the negative log-likelihood, with a weak Gaussian prior keeping
//! one-sided sweeps bounded. The gauge is fixed per connected component
//! of the comparison graph: mean mu = 0 and the lexicographically first
//! item's sigma = 1 (predicted probabilities are invariant to both).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FitError {
    #[error("no choice records to fit")]
    NoRecords,
    #[error("invalid choice record: {reason}")]
    InvalidRecord { reason: String },
}

/// Outcome of one pairwise elicitation. `Split` spreads the weight evenly
/// over both options (used for refusals and unparseable answers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceOutcome {
    A,
    B,
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub item_a: String,
    pub item_b: String,
    pub outcome: ChoiceOutcome,
    pub weight: f64,
}

impl ChoiceRecord {
    pub fn new(item_a: &str, item_b: &str, outcome: ChoiceOutcome) -> Result<Self, FitError> {
        Self::weighted(item_a, item_b, outcome, 1.0)
    }

    pub fn weighted(item_a: &str, item_b: &str, outcome: ChoiceOutcome, weight: f64) -> Result<Self, FitError> {
        if item_a == item_b {
            return Err(FitError::InvalidRecord {
                reason: "item compared against itself".to_string(),
            });
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(FitError::InvalidRecord {
                reason: "weight must be a positive finite number".to_string(),
            });
        }
        Ok(Self {
            item_a: item_a.to_string(),
            item_b: item_b.to_string(),
            outcome,
            weight,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Converged once the NLL improvement falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Variance of the zero-mean Gaussian prior on mu, which bounds
    /// utilities under one-sided sweeps.
    pub prior_variance: f64,
    /// Variance of the zero-mean Gaussian prior on log sigma. Item
    /// variances are free parameters but weakly identified from pairwise
    /// data, so they are shrunk toward 1.
    pub sigma_prior_variance: f64,
    /// Recorded in the model metadata; the fit itself is deterministic.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 10_000,
            prior_variance: 100.0,
            sigma_prior_variance: 0.5,
            seed: 0,
        }
    }
}

/// Fitted per-item utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemUtility {
    pub item: String,
    pub mu: f64,
    pub sigma: f64,
}

/// Fitted model with gauge-fixed utilities and fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityModel {
    pub utilities: Vec<ItemUtility>,
    pub iterations: usize,
    pub final_nll: f64,
    pub converged: bool,
    pub seed: u64,
    /// Items that won or lost every comparison; their mu is bounded only
    /// by the prior.
    pub degenerate_items: Vec<String>,
    /// Connected components of the comparison graph (gauge is per
    /// component).
    pub components: usize,
}

impl UtilityModel {
    fn index_of(&self, item: &str) -> Option<usize> {
        self.utilities
            .binary_search_by(|u| u.item.as_str().cmp(item))
            .ok()
    }

    pub fn mu(&self, item: &str) -> Option<f64> {
        self.index_of(item).map(|i| self.utilities[i].mu)
    }

    /// Fitted choice probability. Computed through a canonical ordering so
    /// that `p(a, b) + p(b, a) == 1` exactly.
    pub fn prob_a_beats_b(&self, a: &str, b: &str) -> Option<f64> {
        let ia = self.index_of(a)?;
        let ib = self.index_of(b)?;
        if ia == ib {
            return None;
        }
        let (lo, hi, flipped) = if a < b { (ia, ib, false) } else { (ib, ia, true) };
        let (ulo, uhi) = (&self.utilities[lo], &self.utilities[hi]);
        let s = libm::sqrt(ulo.sigma * ulo.sigma + uhi.sigma * uhi.sigma);
        let p_lo = normal_cdf((ulo.mu - uhi.mu) / s);
        Some(if flipped { 1.0 - p_lo } else { p_lo })
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// log Phi(z), switching to the asymptotic tail expansion where erfc
/// underflows.
fn log_normal_cdf(z: f64) -> f64 {
    if z > -37.0 {
        libm::log(normal_cdf(z).max(f64::MIN_POSITIVE))
    } else {
        // Phi(z) ~ phi(z) / (-z) for z -> -inf.
        -0.5 * z * z - libm::log(-z) - LN_SQRT_2PI
    }
}

/// Inverse Mills ratio phi(z) / Phi(z); the gradient of -log Phi.
fn inverse_mills(z: f64) -> f64 {
    if z > -30.0 {
        let phi = libm::exp(-0.5 * z * z) / libm::exp(LN_SQRT_2PI);
        phi / normal_cdf(z).max(f64::MIN_POSITIVE)
    } else {
        // phi/Phi -> -z + O(1/z) in the far left tail.
        -z - 1.0 / z
    }
}

struct Prepared {
    items: Vec<String>,
    // (index a, index b, effective weight on "a wins", on "b wins")
    terms: Vec<(usize, usize, f64, f64)>,
}

fn prepare(records: &[ChoiceRecord]) -> Result<Prepared, FitError> {
    if records.is_empty() {
        return Err(FitError::NoRecords);
    }
    let mut ids = BTreeSet::new();
    for r in records {
        if r.item_a == r.item_b {
            return Err(FitError::InvalidRecord {
                reason: "item compared against itself".to_string(),
            });
        }
        if !(r.weight > 0.0) || !r.weight.is_finite() {
            return Err(FitError::InvalidRecord {
                reason: "weight must be a positive finite number".to_string(),
            });
        }
        ids.insert(r.item_a.clone());
        ids.insert(r.item_b.clone());
    }
    let items: Vec<String> = ids.into_iter().collect();
    let index: BTreeMap<&str, usize> = items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let terms = records
        .iter()
        .map(|r| {
            let (wa, wb) = match r.outcome {
                ChoiceOutcome::A => (r.weight, 0.0),
                ChoiceOutcome::B => (0.0, r.weight),
                ChoiceOutcome::Split => (r.weight * 0.5, r.weight * 0.5),
            };
            (index[r.item_a.as_str()], index[r.item_b.as_str()], wa, wb)
        })
        .collect();
    Ok(Prepared { items, terms })
}

/// NLL at the packed parameter point `x` = (mu .. , log sigma ..), with
/// the gradient written into `grad` when provided.
fn objective(prepared: &Prepared, options: &FitOptions, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
    let n = x.len() / 2;
    let (mu, log_sigma) = x.split_at(n);
    if let Some(g) = grad.as_deref_mut() {
        for slot in g.iter_mut() {
            *slot = 0.0;
        }
    }
    let mut nll = 0.0;
    for &(ia, ib, wa, wb) in &prepared.terms {
        let sig_a = libm::exp(log_sigma[ia]);
        let sig_b = libm::exp(log_sigma[ib]);
        let s2 = sig_a * sig_a + sig_b * sig_b;
        let s = libm::sqrt(s2);
        let z = ((mu[ia] - mu[ib]) / s).clamp(-1e6, 1e6);

        if wa > 0.0 {
            nll -= wa * log_normal_cdf(z);
        }
        if wb > 0.0 {
            nll -= wb * log_normal_cdf(-z);
        }
        if let Some(g) = grad.as_deref_mut() {
            // d(nll)/dz
            let gz = -wa * inverse_mills(z) + wb * inverse_mills(-z);
            let gmu = gz / s;
            g[ia] += gmu;
            g[ib] -= gmu;
            // dz/d(log sigma_i) = -z * sigma_i^2 / s^2
            g[n + ia] += gz * (-z * sig_a * sig_a / s2);
            g[n + ib] += gz * (-z * sig_b * sig_b / s2);
        }
    }
    for i in 0..n {
        nll += mu[i] * mu[i] / (2.0 * options.prior_variance);
        nll += log_sigma[i] * log_sigma[i] / (2.0 * options.sigma_prior_variance);
        if let Some(g) = grad.as_deref_mut() {
            g[i] += mu[i] / options.prior_variance;
            g[n + i] += log_sigma[i] / options.sigma_prior_variance;
        }
    }
    nll
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximum-likelihood fit of the Thurstonian model.
///
/// L-BFGS with Armijo backtracking: NLL decreases monotonically and the
/// run stops once an accepted step improves it by less than `tolerance`.
/// Deterministic: fixed initialization (mu = 0, sigma = 1), full-batch
/// gradients accumulated in input order.
pub fn fit_thurstonian(records: &[ChoiceRecord], options: &FitOptions) -> Result<UtilityModel, FitError> {
    let prepared = prepare(records)?;
    let n = prepared.items.len();
    let dim = 2 * n;

    let mut x = vec![0.0f64; dim];
    let mut grad = vec![0.0f64; dim];
    let mut nll = objective(&prepared, options, &x, Some(&mut grad));

    const MEMORY: usize = 8;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..options.max_iterations {
        iterations += 1;

        // Two-loop recursion for the quasi-Newton direction.
        let mut q = grad.clone();
        let mut alphas = vec![0.0f64; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            alphas[i] = rho_hist[i] * dot(&s_hist[i], &q);
            for (qk, yk) in q.iter_mut().zip(&y_hist[i]) {
                *qk -= alphas[i] * yk;
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            for qk in q.iter_mut() {
                *qk *= gamma;
            }
        }
        for i in 0..s_hist.len() {
            let beta = rho_hist[i] * dot(&y_hist[i], &q);
            for (qk, sk) in q.iter_mut().zip(&s_hist[i]) {
                *qk += (alphas[i] - beta) * sk;
            }
        }
        let mut direction: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            // Fall back to steepest descent if the memory went stale.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            direction = grad.iter().map(|v| -v).collect();
            slope = dot(&grad, &direction);
            if !(slope < 0.0) {
                converged = true;
                break;
            }
        }

        // Armijo backtracking.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let cand_nll = objective(&prepared, options, &candidate, None);
            if cand_nll <= nll + 1e-4 * step * slope {
                accepted = Some((candidate, cand_nll));
                break;
            }
            step *= 0.5;
        }
        let Some((new_x, new_nll)) = accepted else {
            // Step size underflowed: numerically at the optimum.
            converged = true;
            break;
        };

        let mut new_grad = vec![0.0f64; dim];
        let new_nll_check = objective(&prepared, options, &new_x, Some(&mut new_grad));
        debug_assert!((new_nll_check - new_nll).abs() <= 1e-9 * (1.0 + new_nll.abs()));

        let s_vec: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y_vec: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s_vec, &y_vec);
        if sy > 1e-12 {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s_vec);
            y_hist.push(y_vec);
        }

        let improvement = nll - new_nll;
        x = new_x;
        grad = new_grad;
        nll = new_nll;
        if improvement < options.tolerance {
            converged = true;
            break;
        }
    }

    let final_nll = nll;
    let (mu_slice, t_slice) = x.split_at(n);
    let mut mu = mu_slice.to_vec();
    let mut t = t_slice.to_vec();

    // Connected components of the comparison graph.
    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = n_components;
        n_components += 1;
        let mut stack = vec![start];
        component[start] = id;
        while let Some(node) = stack.pop() {
            for &(ia, ib, _, _) in &prepared.terms {
                let other = if ia == node { ib } else if ib == node { ia } else { continue };
                if component[other] == usize::MAX {
                    component[other] = id;
                    stack.push(other);
                }
            }
        }
    }

    // Gauge per component: mean-zero mu, first item's sigma scaled to 1.
    for comp in 0..n_components {
        let members: Vec<usize> = (0..n).filter(|&i| component[i] == comp).collect();
        let mean = members.iter().map(|&i| mu[i]).sum::<f64>() / members.len() as f64;
        let t_ref = t[members[0]];
        let sigma_ref = libm::exp(t_ref);
        for &i in &members {
            mu[i] = (mu[i] - mean) / sigma_ref;
            t[i] -= t_ref;
        }
    }

    // One-sided sweeps: all wins or all losses (splits count as both).
    let mut wins = vec![0.0f64; n];
    let mut losses = vec![0.0f64; n];
    for &(ia, ib, wa, wb) in &prepared.terms {
        wins[ia] += wa;
        losses[ia] += wb;
        wins[ib] += wb;
        losses[ib] += wa;
    }
    let degenerate_items: Vec<String> = (0..n)
        .filter(|&i| wins[i] == 0.0 || losses[i] == 0.0)
        .map(|i| prepared.items[i].clone())
        .collect();

    let utilities = prepared
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| ItemUtility {
            item: item.clone(),
            mu: mu[i],
            sigma: libm::exp(t[i]),
        })
        .collect();

    Ok(UtilityModel {
        utilities,
        iterations,
        final_nll,
        converged,
        seed: options.seed,
        degenerate_items,
        components: n_components,
    })
}

/// Normalize an unordered pair to lexicographic order.
pub fn normalized_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Pick the `k` unasked pairs with the smallest current utility
/// difference, ties broken lexicographically.
pub fn select_next_pairs(
    model: &UtilityModel,
    k: usize,
    asked: &BTreeSet<(String, String)>,
) -> Vec<(String, String)> {
    let mut candidates: Vec<(f64, &str, &str)> = Vec::new();
    for i in 0..model.utilities.len() {
        for j in (i + 1)..model.utilities.len() {
            let (a, b) = (&model.utilities[i], &model.utilities[j]);
            if asked.contains(&(a.item.clone(), b.item.clone())) {
                continue;
            }
            candidates.push((libm::fabs(a.mu - b.mu), &a.item, &b.item));
        }
    }
    candidates.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then_with(|| x.1.cmp(y.1))
            .then_with(|| x.2.cmp(y.2))
    });
    candidates
        .into_iter()
        .take(k)
        .map(|(_, a, b)| (a.to_string(), b.to_string()))
        .collect()
}
