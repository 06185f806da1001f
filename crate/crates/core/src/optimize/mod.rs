//! Campaign-level demand optimization over replay valuation grids.
//!
//! Every AD of a campaign gets a small set of alpha options, each replayed to
//! a `(alpha, gmv, cost, impressions)` point. GMV maximization picks one
//! option per AD with a group knapsack; style comparison equalizes
//! impressions with a box-constrained quadratic allocation.

mod knapsack;
mod piecewise;
mod style;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use knapsack::{optimize_gmv, CostLattice, LATTICE_CELLS};
pub use piecewise::PiecewiseLinear;
pub use style::{optimize_style, realize_style, solve_level_projection, LevelProjection};

use crate::error::{Error, Result};
use crate::inference::{profile_with_range, AdProfile, AlphaRange};
use crate::model::{AdId, AuctionLog, Campaign, DayFilter, ReplaySummary};
use crate::replay::{alpha_curve, evaluate, geometric_alphas, BidPolicy};

pub const DEFAULT_GRID_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demand {
    Gmv,
    Style,
}

/// Cost window `[(beta - eps) * total, (beta + eps) * total]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWindow {
    pub beta: f64,
    pub epsilon: f64,
}

impl CostWindow {
    pub fn new(beta: f64, epsilon: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {beta}")));
        }
        if !(epsilon >= 0.0 && epsilon < beta) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in [0, beta), got {epsilon}"
            )));
        }
        Ok(CostWindow { beta, epsilon })
    }

    pub fn bounds(&self, baseline_total: f64) -> (f64, f64) {
        (
            (self.beta - self.epsilon) * baseline_total,
            (self.beta + self.epsilon) * baseline_total,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignProblem {
    pub campaign: Campaign,
    pub profiles: Vec<AdProfile>,
    pub window: CostWindow,
    pub grid_size: usize,
    pub demand: Demand,
    pub days: DayFilter,
}

impl CampaignProblem {
    /// Infers every AD's profile and feasible alpha range from its bid bounds.
    pub fn new(
        log: &AuctionLog,
        campaign: Campaign,
        window: CostWindow,
        grid_size: usize,
        demand: Demand,
        days: DayFilter,
    ) -> Result<Self> {
        campaign.validate()?;
        if grid_size == 0 {
            return Err(Error::InvalidArgument("grid size must be at least 1".into()));
        }
        let profiles = (0..campaign.len())
            .into_par_iter()
            .map(|i| {
                profile_with_range(
                    log,
                    campaign.ad_ids[i],
                    campaign.bid_lower[i],
                    campaign.bid_upper[i],
                    days,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CampaignProblem {
            campaign,
            profiles,
            window,
            grid_size,
            demand,
            days,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuationPoint {
    pub alpha: f64,
    pub summary: ReplaySummary,
}

impl ValuationPoint {
    pub fn gmv(&self) -> f64 {
        self.summary.gmv
    }
    pub fn cost(&self) -> f64 {
        self.summary.cost
    }
    pub fn impressions(&self) -> f64 {
        self.summary.impressions
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdOptions {
    pub ad_id: AdId,
    pub take_rate: f64,
    pub alpha_range: AlphaRange,
    /// Ascending in alpha; cost non-decreasing.
    pub options: Vec<ValuationPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuationGrid {
    pub ads: Vec<AdOptions>,
    /// Keyword-bid replay cost of every AD.
    pub baseline_costs: Vec<f64>,
}

impl ValuationGrid {
    /// Builds a grid from raw `(alpha, gmv, cost, impressions)` options, for
    /// callers that already hold replay results.
    pub fn from_points(points: Vec<Vec<(f64, f64, f64, f64)>>, baseline_costs: Vec<f64>) -> Result<Self> {
        if points.len() != baseline_costs.len() {
            return Err(Error::InvalidArgument("one baseline cost per AD required".into()));
        }
        let ads = points
            .into_iter()
            .enumerate()
            .map(|(i, opts)| {
                let alphas: Vec<f64> = opts.iter().map(|o| o.0).collect();
                let (lo, hi) = (
                    alphas.first().copied().unwrap_or(1.0),
                    alphas.last().copied().unwrap_or(1.0),
                );
                AdOptions {
                    ad_id: AdId(i as u64),
                    take_rate: 1.0,
                    alpha_range: AlphaRange {
                        lo,
                        hi,
                        clamped_lo: false,
                        clamped_hi: false,
                    },
                    options: opts
                        .into_iter()
                        .map(|(alpha, gmv, cost, impressions)| ValuationPoint {
                            alpha,
                            summary: ReplaySummary {
                                cost,
                                gmv,
                                impressions,
                                ..ReplaySummary::default()
                            },
                        })
                        .collect(),
                }
            })
            .collect();
        let grid = ValuationGrid { ads, baseline_costs };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ads.is_empty() || self.ads.iter().any(|a| a.options.is_empty()) {
            return Err(Error::EmptyGrid);
        }
        for ad in &self.ads {
            for w in ad.options.windows(2) {
                if w[1].cost() < w[0].cost() {
                    return Err(Error::NonMonotone {
                        ad: ad.ad_id,
                        alpha: w[1].alpha,
                        metric: "cost",
                    });
                }
            }
            if ad.options.iter().any(|o| !(o.cost() >= 0.0 && o.gmv() >= 0.0)) {
                return Err(Error::InvalidArgument(format!("AD {} has negative grid values", ad.ad_id)));
            }
        }
        if self.baseline_costs.iter().any(|z| !(*z >= 0.0)) {
            return Err(Error::InvalidArgument("baseline costs must be >= 0".into()));
        }
        Ok(())
    }

    pub fn baseline_total(&self) -> f64 {
        self.baseline_costs.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.ads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ads.is_empty()
    }
}

/// Replays every AD of the campaign at `grid_size` geometrically spaced
/// alphas across its feasible range, plus once with keyword bids.
pub fn build_grid(log: &AuctionLog, problem: &CampaignProblem) -> Result<ValuationGrid> {
    let days = problem.days;
    let rows = problem
        .profiles
        .par_iter()
        .map(|profile| {
            let ad = profile.ad_id;
            let range = profile.alpha_range.ok_or(Error::DegenerateAd {
                ad,
                reason: "alpha range not inferred",
            })?;
            let mut alphas = geometric_alphas(range.lo, range.hi, problem.grid_size);
            alphas.dedup();
            let curve = alpha_curve(log, ad, profile.take_rate, &alphas, days)?;
            let baseline = evaluate(log, ad, &BidPolicy::keyword(), days)?.cost;
            let options = curve
                .samples
                .into_iter()
                .map(|(alpha, summary)| ValuationPoint { alpha, summary })
                .collect();
            Ok((
                AdOptions {
                    ad_id: ad,
                    take_rate: profile.take_rate,
                    alpha_range: range,
                    options,
                },
                baseline,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (ads, baseline_costs) = rows.into_iter().unzip();
    let grid = ValuationGrid { ads, baseline_costs };
    grid.validate()?;
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub demand: Demand,
    pub ad_ids: Vec<AdId>,
    pub alphas: Vec<f64>,
    /// Chosen grid option per AD (GMV allocations).
    pub selection: Option<Vec<usize>>,
    /// Target impressions per AD (style allocations).
    pub impression_targets: Option<Vec<f64>>,
    /// Predicted cost per AD.
    pub ad_costs: Vec<f64>,
    pub cost: f64,
    pub gmv: f64,
    pub impressions: f64,
    pub feasible: bool,
    /// Total GMV for GMV allocations, std / mean of impressions for style.
    pub objective_value: f64,
    /// Sum of squared impression deviations from their mean (style only).
    pub squared_deviation: Option<f64>,
    pub window: (f64, f64),
    /// Knapsack cost lattice unit (GMV only).
    pub lattice_unit: Option<f64>,
}

/// Population standard deviation over mean; zero when the mean is zero.
pub fn normalized_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Sum of squared deviations from the mean.
pub fn squared_deviation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum()
}
