//! Closed-loop recovery checks: choices are simulated from known
//! utilities with the model's own probability law, then the fit must
//! recover the ranking. Kendall's tau is computed here by brute-force
//! pair counting, independent of the fitting code.

use polcon_core::thurstonian::{fit_thurstonian, ChoiceOutcome, ChoiceRecord, FitOptions};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Ground-truth utilities: an evenly spaced grid, shuffled, so adjacent
/// items are separated by a resolvable gap.
fn ground_truth(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut mu: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
    mu.shuffle(rng);
    mu
}

fn simulate(true_mu: &[f64], comparisons: usize, rng: &mut ChaCha8Rng) -> Vec<ChoiceRecord> {
    let n = true_mu.len();
    (0..comparisons)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = loop {
                let j = rng.random_range(0..n);
                if j != i {
                    break j;
                }
            };
            // All true sigmas are 1, so the scale is sqrt(2).
            let p = normal_cdf((true_mu[i] - true_mu[j]) / core::f64::consts::SQRT_2);
            let outcome = if rng.random::<f64>() < p { ChoiceOutcome::A } else { ChoiceOutcome::B };
            ChoiceRecord::new(&format!("item{i:02}"), &format!("item{j:02}"), outcome).unwrap()
        })
        .collect()
}

/// Brute-force Kendall rank correlation over all item pairs.
fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut num = 0i64;
    let mut den = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let sa = (a[i] - a[j]).signum();
            let sb = (b[i] - b[j]).signum();
            num += (sa * sb) as i64;
            den += 1;
        }
    }
    num as f64 / den as f64
}

#[test]
fn ranking_recovered_from_simulated_choices() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let true_mu = ground_truth(20, &mut rng);
    let records = simulate(&true_mu, 2000, &mut rng);
    let model = fit_thurstonian(&records, &FitOptions { seed: 7, ..FitOptions::default() }).unwrap();

    let fitted: Vec<f64> = (0..20)
        .map(|i| model.mu(&format!("item{i:02}")).unwrap())
        .collect();
    let tau = kendall_tau(&true_mu, &fitted);
    assert!(tau >= 0.9, "kendall tau {tau} below 0.9");
}

#[test]
fn relabeling_items_preserves_the_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let true_mu = ground_truth(8, &mut rng);
    let records = simulate(&true_mu, 800, &mut rng);

    let renamed: Vec<ChoiceRecord> = records
        .iter()
        .map(|r| {
            ChoiceRecord::weighted(
                &format!("zz-{}", r.item_a),
                &format!("zz-{}", r.item_b),
                r.outcome,
                r.weight,
            )
            .unwrap()
        })
        .collect();

    let base = fit_thurstonian(&records, &FitOptions::default()).unwrap();
    let relabeled = fit_thurstonian(&renamed, &FitOptions::default()).unwrap();

    let mu_base: Vec<f64> = (0..8).map(|i| base.mu(&format!("item{i:02}")).unwrap()).collect();
    let mu_re: Vec<f64> = (0..8)
        .map(|i| relabeled.mu(&format!("zz-item{i:02}")).unwrap())
        .collect();
    assert!(kendall_tau(&mu_base, &mu_re) > 0.999);
}

#[test]
fn split_heavy_data_still_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let true_mu = ground_truth(10, &mut rng);
    let mut records = simulate(&true_mu, 700, &mut rng);
    // Turn ~30% into splits, as refusal handling does.
    for (k, r) in records.iter_mut().enumerate() {
        if k % 10 < 3 {
            r.outcome = ChoiceOutcome::Split;
        }
    }
    let model = fit_thurstonian(&records, &FitOptions::default()).unwrap();
    assert!(model.converged);
    assert!(model.final_nll.is_finite());
}
