//! Exchange-rate estimation from quantity-utility curves.
//!
//! For each item, utility as a function of quantity is fit as
//! mu(q) = a + b * ln(q) by least squares. The exchange rate of a target
//! against the anchor at quantity N solves mu_target(q*) = mu_anchor(N);
//! the rate is r = N / q*. A rate of 1 means equal valuation.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RateError {
    #[error("item `{item}` needs utilities at two or more distinct quantities")]
    TooFewQuantities { item: String },
    #[error("anchor `{anchor}` missing from the utility curves")]
    MissingAnchor { anchor: String },
    #[error("anchor `{anchor}` has an unusable utility curve: {reason}")]
    BadAnchorCurve { anchor: String, reason: String },
}

/// Fitted utility at one quantity level for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityUtility {
    pub quantity: f64,
    pub mu: f64,
}

/// The per-quantity utilities of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCurve {
    pub item: String,
    pub points: Vec<QuantityUtility>,
}

/// Why an item was left out of the rate table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NonMonotoneUtility,
    FlatCurve,
}

/// Exchange rates of every item against the category anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRateTable {
    pub category: String,
    pub anchor: String,
    pub anchor_quantity: f64,
    pub rates: BTreeMap<String, f64>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    /// Allowed downward wiggle between consecutive quantity levels,
    /// relative to the item's utility range (fitted curves are noisy).
    pub monotone_tolerance: f64,
    /// Slopes smaller than this (relative to the anchor's) count as flat.
    pub flat_slope_fraction: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            monotone_tolerance: 0.10,
            flat_slope_fraction: 1e-6,
        }
    }
}

struct LogLinear {
    intercept: f64,
    slope: f64,
}

/// Least-squares fit of mu = a + b ln(q).
fn fit_log_linear(points: &[QuantityUtility]) -> LogLinear {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| libm::log(p.quantity)).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.mu).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, p) in xs.iter().zip(points) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (p.mu - mean_y);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    LogLinear {
        intercept: mean_y - slope * mean_x,
        slope,
    }
}

fn monotone_violation(points: &[QuantityUtility], tolerance: f64) -> bool {
    let lo = points.iter().map(|p| p.mu).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.mu).fold(f64::NEG_INFINITY, f64::max);
    let slack = (hi - lo) * tolerance;
    points.windows(2).any(|w| w[1].mu < w[0].mu - slack)
}

/// Compute exchange rates against `anchor` valued at `anchor_quantity`.
///
/// Items whose utilities decrease with quantity beyond tolerance, or
/// whose curve is too flat to invert, are excluded and reported.
pub fn exchange_rates(
    category: &str,
    curves: &[ItemCurve],
    anchor: &str,
    anchor_quantity: f64,
    options: &RateOptions,
) -> Result<ExchangeRateTable, RateError> {
    let mut sorted_curves: Vec<ItemCurve> = Vec::with_capacity(curves.len());
    for curve in curves {
        let mut points = curve.points.clone();
        points.sort_by(|a, b| a.quantity.total_cmp(&b.quantity));
        let distinct = 1 + points.windows(2).filter(|w| w[1].quantity > w[0].quantity).count();
        if points.len() < 2 || distinct < 2 {
            return Err(RateError::TooFewQuantities {
                item: curve.item.clone(),
            });
        }
        sorted_curves.push(ItemCurve {
            item: curve.item.clone(),
            points,
        });
    }
    let anchor_curve = sorted_curves
        .iter()
        .find(|c| c.item == anchor)
        .ok_or_else(|| RateError::MissingAnchor { anchor: anchor.to_string() })?;

    if monotone_violation(&anchor_curve.points, options.monotone_tolerance) {
        return Err(RateError::BadAnchorCurve {
            anchor: anchor.to_string(),
            reason: "utility decreases with quantity".to_string(),
        });
    }
    let anchor_fit = fit_log_linear(&anchor_curve.points);
    if anchor_fit.slope <= 0.0 {
        return Err(RateError::BadAnchorCurve {
            anchor: anchor.to_string(),
            reason: "flat or inverted slope".to_string(),
        });
    }
    let target_level = anchor_fit.intercept + anchor_fit.slope * libm::log(anchor_quantity);

    let mut rates = BTreeMap::new();
    let mut excluded = Vec::new();
    for curve in &sorted_curves {
        if monotone_violation(&curve.points, options.monotone_tolerance) {
            excluded.push((curve.item.clone(), ExclusionReason::NonMonotoneUtility));
            continue;
        }
        let fit = fit_log_linear(&curve.points);
        if fit.slope < anchor_fit.slope * options.flat_slope_fraction {
            excluded.push((curve.item.clone(), ExclusionReason::FlatCurve));
            continue;
        }
        // Solve a + b ln(q*) = target_level.
        let q_star = libm::exp((target_level - fit.intercept) / fit.slope);
        rates.insert(curve.item.clone(), anchor_quantity / q_star);
    }
    Ok(ExchangeRateTable {
        category: category.to_string(),
        anchor: anchor.to_string(),
        anchor_quantity,
        rates,
        excluded,
    })
}

/// Category-level summaries of an exchange-rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    /// Mean |log10 r| over non-anchor items; zero at perfect equality.
    pub l1_anchor: f64,
    /// Population std of log10 r including the anchor at zero.
    pub sigma_log: f64,
}

pub fn summarize_rates(table: &ExchangeRateTable) -> RateSummary {
    let non_anchor: Vec<f64> = table
        .rates
        .iter()
        .filter(|(item, _)| item.as_str() != table.anchor)
        .map(|(_, r)| libm::log10(*r))
        .collect();
    let l1_anchor = if non_anchor.is_empty() {
        0.0
    } else {
        non_anchor.iter().map(|x| libm::fabs(*x)).sum::<f64>() / non_anchor.len() as f64
    };

    // The anchor participates in the spread at log 0 even if its own
    // solved rate drifted off exactly 1.
    let mut logs: Vec<f64> = non_anchor;
    logs.push(0.0);
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / logs.len() as f64;
    RateSummary {
        l1_anchor,
        sigma_log: libm::sqrt(var),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(item: &str, intercept: f64, slope: f64, quantities: &[f64]) -> ItemCurve {
        ItemCurve {
            item: item.to_string(),
            points: quantities
                .iter()
                .map(|&q| QuantityUtility {
                    quantity: q,
                    mu: intercept + slope * libm::log(q),
                })
                .collect(),
        }
    }

    const QS: [f64; 5] = [1.0, 10.0, 100.0, 1000.0, 10_000.0];

    #[test]
    fn identical_curves_give_rate_one() {
        let curves = [curve("anchor", 0.0, 1.0, &QS), curve("twin", 0.0, 1.0, &QS)];
        let table = exchange_rates("race", &curves, "anchor", 1000.0, &RateOptions::default()).unwrap();
        assert!((table.rates["twin"] - 1.0).abs() < 1e-6);
        assert!((table.rates["anchor"] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shifted_curve_recovers_the_constructed_rate() {
        // Target equals the anchor's value at q* = N / 10, so the rate is 10.
        let slope = 0.7;
        let anchor = curve("anchor", 0.0, slope, &QS);
        let target = curve("target", slope * libm::log(10.0), slope, &QS);
        let table = exchange_rates("race", &[anchor, target], "anchor", 1000.0, &RateOptions::default()).unwrap();
        assert!((table.rates["target"] - 10.0).abs() / 10.0 < 1e-9);
    }

    #[test]
    fn non_monotone_items_are_excluded_not_fatal() {
        let mut bad = curve("wobbly", 0.0, 1.0, &QS);
        bad.points[3].mu = -5.0;
        let curves = [curve("anchor", 0.0, 1.0, &QS), bad];
        let table = exchange_rates("race", &curves, "anchor", 1000.0, &RateOptions::default()).unwrap();
        assert!(!table.rates.contains_key("wobbly"));
        assert_eq!(table.excluded, vec![("wobbly".to_string(), ExclusionReason::NonMonotoneUtility)]);
    }

    #[test]
    fn flat_targets_are_excluded_and_flat_anchor_is_fatal() {
        let curves = [curve("anchor", 0.0, 1.0, &QS), curve("flat", 3.0, 0.0, &QS)];
        let table = exchange_rates("x", &curves, "anchor", 100.0, &RateOptions::default()).unwrap();
        assert_eq!(table.excluded, vec![("flat".to_string(), ExclusionReason::FlatCurve)]);

        let curves = [curve("anchor", 0.0, 0.0, &QS)];
        assert!(matches!(
            exchange_rates("x", &curves, "anchor", 100.0, &RateOptions::default()),
            Err(RateError::BadAnchorCurve { .. })
        ));
    }

    #[test]
    fn too_few_quantities_is_an_error() {
        let c = ItemCurve {
            item: "thin".to_string(),
            points: alloc::vec![QuantityUtility { quantity: 10.0, mu: 1.0 }],
        };
        assert!(matches!(
            exchange_rates("x", &[c], "thin", 10.0, &RateOptions::default()),
            Err(RateError::TooFewQuantities { .. })
        ));
    }

    #[test]
    fn summaries_from_known_rates() {
        let mut rates = BTreeMap::new();
        for (item, r) in [("anchor", 1.0), ("a", 1.0), ("b", 1.0), ("c", 1.0)] {
            rates.insert(item.to_string(), r);
        }
        let table = ExchangeRateTable {
            category: "x".to_string(),
            anchor: "anchor".to_string(),
            anchor_quantity: 100.0,
            rates,
            excluded: Vec::new(),
        };
        let s = summarize_rates(&table);
        assert_eq!(s.l1_anchor, 0.0);
        assert_eq!(s.sigma_log, 0.0);

        let mut rates = BTreeMap::new();
        rates.insert("anchor".to_string(), 1.0);
        rates.insert("up".to_string(), 10.0);
        rates.insert("down".to_string(), 0.1);
        let table = ExchangeRateTable {
            category: "x".to_string(),
            anchor: "anchor".to_string(),
            anchor_quantity: 100.0,
            rates,
            excluded: Vec::new(),
        };
        let s = summarize_rates(&table);
        assert!((s.l1_anchor - 1.0).abs() < 1e-12);
        // logs {1, -1, 0, 0(anchor slot)} -> hmm: anchor already in map at 0.
        assert!(s.sigma_log > 0.0);
    }

    #[test]
    fn l1_zero_iff_all_rates_one() {
        let mut rates = BTreeMap::new();
        rates.insert("anchor".to_string(), 1.0);
        rates.insert("t".to_string(), 1.0001);
        let table = ExchangeRateTable {
            category: "x".to_string(),
            anchor: "anchor".to_string(),
            anchor_quantity: 100.0,
            rates,
            excluded: Vec::new(),
        };
        assert!(summarize_rates(&table).l1_anchor > 0.0);
    }
}
