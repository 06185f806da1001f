//! Auction replay: re-ranks logged auctions under modified bids, prices the
//! winners with generalized second price, and accumulates daily cost and GMV.
//!
//! Every candidate is ranked by `bid * ctr`. Candidates whose bid is below the
//! reserve or whose score is not positive are dropped. The top `slots`
//! candidates win; each pays `clip(next_score / own_ctr, reserve, own_bid)`
//! per click, where `next_score` is the score of the candidate ranked right
//! below it (the reserve when nobody is). Equal scores are ordered by ascending
//! AD id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdId, AuctionCandidate, AuctionLog, AuctionRecord, DayFilter, ReplaySummary};
use crate::money::MINOR_UNIT;

/// How one AD turns an auction's features into a bid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BidRule {
    /// The logged keyword bid.
    Keyword,
    /// Impression-level bid `alpha * tk * cvr * item_price`.
    Cia { alpha: f64, tk: f64 },
    /// The same bid on every auction, as if all keywords were set to it.
    Uniform { bid: f64 },
    /// The logged keyword bid times a common factor.
    ScaledKeyword { factor: f64 },
}

impl BidRule {
    pub fn bid(&self, candidate: &AuctionCandidate) -> f64 {
        match *self {
            BidRule::Keyword => candidate.keyword_bid.to_f64(),
            BidRule::Cia { alpha, tk } => alpha * tk * candidate.cvr * candidate.item_price.to_f64(),
            BidRule::Uniform { bid } => bid,
            BidRule::ScaledKeyword { factor } => factor * candidate.keyword_bid.to_f64(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BidRule::Keyword => Ok(()),
            BidRule::Cia { alpha, tk } => {
                if alpha > 0.0 && alpha.is_finite() && tk > 0.0 && tk.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "cia bid needs alpha > 0 and tk > 0, got alpha={alpha} tk={tk}"
                    )))
                }
            }
            BidRule::Uniform { bid } => {
                if bid >= 0.0 && bid.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("uniform bid must be >= 0, got {bid}")))
                }
            }
            BidRule::ScaledKeyword { factor } => {
                if factor >= 0.0 && factor.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("bid scale must be >= 0, got {factor}")))
                }
            }
        }
    }
}

/// Bid rule for every AD of a replay: a default plus per-AD overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BidPolicy {
    default: BidRule,
    overrides: HashMap<AdId, BidRule>,
}

impl Default for BidRule {
    fn default() -> Self {
        BidRule::Keyword
    }
}

impl BidPolicy {
    /// Everybody bids their logged keyword bids.
    pub fn keyword() -> Self {
        BidPolicy::default()
    }

    pub fn with_default(default: BidRule) -> Result<Self> {
        default.validate()?;
        Ok(BidPolicy {
            default,
            overrides: HashMap::new(),
        })
    }

    /// Logged keyword bids for everyone except `ad`, which follows `rule`.
    pub fn single(ad: AdId, rule: BidRule) -> Result<Self> {
        let mut policy = BidPolicy::keyword();
        policy.set(ad, rule)?;
        Ok(policy)
    }

    pub fn set(&mut self, ad: AdId, rule: BidRule) -> Result<()> {
        rule.validate()?;
        self.overrides.insert(ad, rule);
        Ok(())
    }

    pub fn rule(&self, ad: AdId) -> BidRule {
        self.overrides.get(&ad).copied().unwrap_or(self.default)
    }

    pub fn bid(&self, candidate: &AuctionCandidate) -> f64 {
        self.rule(candidate.ad_id).bid(candidate)
    }
}

/// Rank score of a candidate bidding `bid`.
pub fn score(candidate: &AuctionCandidate, bid: f64) -> f64 {
    bid * candidate.ctr
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Winner {
    pub ad_id: AdId,
    /// Zero-based slot.
    pub slot: u32,
    pub click_price: f64,
    pub bid: f64,
    pub score: f64,
}

#[derive(Clone, Copy)]
struct Ranked {
    idx: usize,
    ad_id: AdId,
    bid: f64,
    score: f64,
}

/// Higher score first, then smaller AD id.
fn rank_order(a_score: f64, a_id: AdId, b_score: f64, b_id: AdId) -> Ordering {
    b_score.total_cmp(&a_score).then(a_id.cmp(&b_id))
}

fn gsp_price(next_score: Option<f64>, ctr: f64, reserve: f64, bid: f64) -> f64 {
    match next_score {
        Some(next) => (next / ctr).max(reserve).min(bid),
        None => reserve,
    }
}

fn qualifies(bid: f64, score: f64, reserve: f64) -> bool {
    bid >= reserve && score > 0.0
}

/// Runs one GSP auction under `policy`, returning winners in slot order.
pub fn replay_auction(record: &AuctionRecord, policy: &BidPolicy) -> Vec<Winner> {
    let reserve = record.reserve_price.to_f64();
    let mut ranked: Vec<Ranked> = record
        .candidates
        .iter()
        .enumerate()
        .filter_map(|(idx, c)| {
            let bid = policy.bid(c);
            let score = score(c, bid);
            qualifies(bid, score, reserve).then_some(Ranked {
                idx,
                ad_id: c.ad_id,
                bid,
                score,
            })
        })
        .collect();
    ranked.sort_by(|a, b| rank_order(a.score, a.ad_id, b.score, b.ad_id));
    let winners = ranked.len().min(record.slots as usize);
    (0..winners)
        .map(|i| {
            let r = ranked[i];
            let next = ranked.get(i + 1).map(|n| n.score);
            let ctr = record.candidates[r.idx].ctr;
            Winner {
                ad_id: r.ad_id,
                slot: i as u32,
                click_price: gsp_price(next, ctr, reserve, r.bid),
                bid: r.bid,
                score: r.score,
            }
        })
        .collect()
}

/// Outcome for a single AD of an auction without sorting the whole field.
/// Returns `(slot, click_price)` when the AD wins. Agrees exactly with
/// [`replay_auction`].
pub fn focal_outcome(record: &AuctionRecord, policy: &BidPolicy, ad: AdId) -> Option<(u32, f64)> {
    let reserve = record.reserve_price.to_f64();
    let focal = record.candidate(ad)?;
    let focal_bid = policy.bid(focal);
    let focal_score = score(focal, focal_bid);
    if !qualifies(focal_bid, focal_score, reserve) {
        return None;
    }
    let mut ahead = 0u32;
    let mut next: Option<f64> = None;
    for c in &record.candidates {
        if c.ad_id == ad {
            continue;
        }
        let bid = policy.bid(c);
        let s = score(c, bid);
        if !qualifies(bid, s, reserve) {
            continue;
        }
        if rank_order(s, c.ad_id, focal_score, ad) == Ordering::Less {
            ahead += 1;
            if ahead >= record.slots {
                return None;
            }
        } else {
            next = Some(next.map_or(s, |n: f64| n.max(s)));
        }
    }
    Some((ahead, gsp_price(next, focal.ctr, reserve, focal_bid)))
}

fn accumulate(summary: &mut ReplaySummary, candidate: &AuctionCandidate, click_price: f64) {
    summary.cost += candidate.ctr * click_price;
    summary.gmv += candidate.expected_gmv();
    summary.impressions += 1.0;
    summary.clicks += candidate.ctr;
    summary.conversions += candidate.ctr * candidate.cvr;
}

fn day_count(log: &AuctionLog, days: DayFilter) -> Result<usize> {
    let n = log.selected_days(days).len();
    if n == 0 {
        Err(Error::NoDaysSelected)
    } else {
        Ok(n)
    }
}

/// Daily performance of `ad` when auctions are replayed under `policy`,
/// averaged over the selected days.
pub fn evaluate(log: &AuctionLog, ad: AdId, policy: &BidPolicy, days: DayFilter) -> Result<ReplaySummary> {
    let n_days = day_count(log, days)?;
    let mut total = ReplaySummary::default();
    for (_, record, candidate) in log.ad_entries(ad, days)? {
        if let Some((_, price)) = focal_outcome(record, policy, ad) {
            accumulate(&mut total, candidate, price);
        }
    }
    Ok(total.scaled(1.0 / n_days as f64))
}

/// Replays every selected auction under `policy` and returns the daily
/// average summary of every AD that appears in them.
pub fn replay_all(log: &AuctionLog, policy: &BidPolicy, days: DayFilter) -> Result<BTreeMap<AdId, ReplaySummary>> {
    let n_days = day_count(log, days)?;
    let selected: Vec<&AuctionRecord> = log.records().iter().filter(|r| days.contains(r.day)).collect();
    // Auctions are independent; accumulation stays sequential so sums do
    // not depend on the thread count.
    let outcomes: Vec<Vec<Winner>> = selected.par_iter().map(|r| replay_auction(r, policy)).collect();
    let mut per_ad: BTreeMap<AdId, ReplaySummary> = BTreeMap::new();
    for (record, winners) in selected.iter().zip(outcomes) {
        for c in &record.candidates {
            per_ad.entry(c.ad_id).or_default();
        }
        for w in winners {
            let candidate = record.candidate(w.ad_id).expect("winner is a candidate");
            accumulate(per_ad.get_mut(&w.ad_id).expect("entry inserted"), candidate, w.click_price);
        }
    }
    let scale = 1.0 / n_days as f64;
    for summary in per_ad.values_mut() {
        *summary = summary.scaled(scale);
    }
    Ok(per_ad)
}

/// Sampled mapping from alpha to replayed daily performance for one AD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaCurve {
    pub ad_id: AdId,
    pub tk: f64,
    pub samples: Vec<(f64, ReplaySummary)>,
}

/// Evaluates `ad` bidding `alpha * tk * cvr * ip` at each alpha. Points are
/// independent and evaluated in parallel.
pub fn alpha_curve(log: &AuctionLog, ad: AdId, tk: f64, alphas: &[f64], days: DayFilter) -> Result<AlphaCurve> {
    if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument("alphas must be positive and finite".into()));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("alphas must be strictly increasing".into()));
    }
    log.positions(ad)?;
    let samples = alphas
        .par_iter()
        .map(|&alpha| {
            let policy = BidPolicy::single(ad, BidRule::Cia { alpha, tk })?;
            Ok((alpha, evaluate(log, ad, &policy, days)?))
        })
        .collect::<Result<Vec<_>>>()?;
    for pair in samples.windows(2) {
        let (prev, (alpha, cur)) = (&pair[0].1, &pair[1]);
        let metric = if cur.cost < prev.cost {
            Some("cost")
        } else if cur.gmv < prev.gmv {
            Some("gmv")
        } else if cur.impressions < prev.impressions {
            Some("impressions")
        } else if cur.clicks < prev.clicks {
            Some("clicks")
        } else {
            None
        };
        if let Some(metric) = metric {
            return Err(Error::NonMonotone { ad, alpha: *alpha, metric });
        }
    }
    Ok(AlphaCurve {
        ad_id: ad,
        tk,
        samples,
    })
}

/// Geometrically spaced alphas over `[lo, hi]`, `n` points.
pub fn geometric_alphas(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![(lo * hi).sqrt()],
        _ => {
            let ratio = (hi / lo).ln() / (n - 1) as f64;
            let mut out: Vec<f64> = (0..n).map(|i| lo * (ratio * i as f64).exp()).collect();
            out[n - 1] = hi;
            out
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampSide {
    Low,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub alpha: f64,
    /// Replayed cost at `alpha`.
    pub cost: f64,
    /// Set when the target lies outside the cost range of the search bounds.
    pub clamped: Option<ClampSide>,
    /// Whether `cost` is within the inversion tolerance of the target.
    pub within_tolerance: bool,
    pub evaluations: u32,
}

/// Largest number of replay evaluations a single inversion performs.
pub const MAX_INVERSION_STEPS: u32 = 64;

/// Acceptable distance between the target cost and the cost at the returned alpha.
pub fn inversion_tolerance(target: f64) -> f64 {
    (0.001 * target).max(MINOR_UNIT)
}

/// Finds alpha whose replayed daily cost matches `target_cost`, by bisection
/// in log-alpha over `bounds`. Cost is a non-decreasing step function of
/// alpha, so when the target falls inside a jump the bracketing alpha with
/// the closer cost is returned and `within_tolerance` is false.
pub fn invert_cost(
    log: &AuctionLog,
    ad: AdId,
    tk: f64,
    target_cost: f64,
    bounds: (f64, f64),
    days: DayFilter,
) -> Result<Inversion> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad alpha bounds [{lo}, {hi}]")));
    }
    if !(target_cost >= 0.0 && target_cost.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad target cost {target_cost}")));
    }
    log.positions(ad)?;
    let tol = inversion_tolerance(target_cost);
    let evals = std::cell::Cell::new(0u32);
    let cost_at = |alpha: f64| -> Result<f64> {
        evals.set(evals.get() + 1);
        let policy = BidPolicy::single(ad, BidRule::Cia { alpha, tk })?;
        Ok(evaluate(log, ad, &policy, days)?.cost)
    };

    let cost_lo = cost_at(lo)?;
    if target_cost <= cost_lo + tol {
        let within = (cost_lo - target_cost).abs() <= tol;
        return Ok(Inversion {
            alpha: lo,
            cost: cost_lo,
            clamped: (!within).then_some(ClampSide::Low),
            within_tolerance: within,
            evaluations: evals.get(),
        });
    }
    let cost_hi = cost_at(hi)?;
    if target_cost >= cost_hi - tol {
        let within = (cost_hi - target_cost).abs() <= tol;
        return Ok(Inversion {
            alpha: hi,
            cost: cost_hi,
            clamped: (!within).then_some(ClampSide::High),
            within_tolerance: within,
            evaluations: evals.get(),
        });
    }

    // Invariant: cost(a) < target - tol and cost(b) > target + tol.
    let (mut a, mut ca, mut b, mut cb) = (lo, cost_lo, hi, cost_hi);
    while evals.get() < MAX_INVERSION_STEPS {
        let m = (a * b).sqrt();
        if m <= a || m >= b {
            break;
        }
        let cm = cost_at(m)?;
        if (cm - target_cost).abs() <= tol {
            return Ok(Inversion {
                alpha: m,
                cost: cm,
                clamped: None,
                within_tolerance: true,
                evaluations: evals.get(),
            });
        }
        if cm < target_cost {
            a = m;
            ca = cm;
        } else {
            b = m;
            cb = cm;
        }
    }
    let (alpha, cost) = if target_cost - ca <= cb - target_cost {
        (a, ca)
    } else {
        (b, cb)
    };
    Ok(Inversion {
        alpha,
        cost,
        clamped: None,
        within_tolerance: false,
        evaluations: evals.get(),
    })
}
