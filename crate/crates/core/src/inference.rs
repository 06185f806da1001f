//! Reads advertiser intent out of keyword-level bids: the accumulated ROI an
//! AD implicitly accepts, its take-rate, a daily virtual budget, and the alpha
//! range that its tolerable bid bounds translate to.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdId, AuctionLog, DayFilter};
use crate::money::Money;
use crate::replay::{evaluate, invert_cost, BidPolicy, BidRule, ClampSide};

/// Alpha search interval used when inverting cost targets.
pub const DEFAULT_ALPHA_BOUNDS: (f64, f64) = (1e-3, 1e3);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRange {
    pub lo: f64,
    pub hi: f64,
    /// The lower end sits on the search bound or missed its cost target.
    pub clamped_lo: bool,
    pub clamped_hi: bool,
}

impl AlphaRange {
    pub fn clamped(&self) -> bool {
        self.clamped_lo || self.clamped_hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdProfile {
    pub ad_id: AdId,
    /// Accumulated ROI implied by the keyword bids (R).
    pub expected_roi: f64,
    /// Take-rate, 1 / R.
    pub take_rate: f64,
    /// Daily virtual budget, sum of ctr * keyword bid per selected day.
    pub virtual_budget: f64,
    pub alpha_range: Option<AlphaRange>,
    pub source_days: DayFilter,
}

struct Sums {
    value: f64,
    spend: f64,
    days: usize,
}

fn sums(log: &AuctionLog, ad: AdId, days: DayFilter) -> Result<Sums> {
    let n_days = log.selected_days(days).len();
    if n_days == 0 {
        return Err(Error::NoDaysSelected);
    }
    let (mut value, mut spend) = (0.0, 0.0);
    for (_, _, c) in log.ad_entries(ad, days)? {
        value += c.expected_gmv();
        spend += c.ctr * c.keyword_bid.to_f64();
    }
    if value <= 0.0 {
        return Err(Error::DegenerateAd {
            ad,
            reason: "no expected GMV in its auctions",
        });
    }
    if spend <= 0.0 {
        return Err(Error::DegenerateAd {
            ad,
            reason: "no expected keyword spend in its auctions",
        });
    }
    Ok(Sums {
        value,
        spend,
        days: n_days,
    })
}

/// ROI, take-rate and virtual budget of `ad` over every auction it entered
/// on the selected days, won or not.
pub fn compute_profile(log: &AuctionLog, ad: AdId, days: DayFilter) -> Result<AdProfile> {
    let s = sums(log, ad, days)?;
    let roi = s.value / s.spend;
    Ok(AdProfile {
        ad_id: ad,
        expected_roi: roi,
        take_rate: 1.0 / roi,
        virtual_budget: s.spend / s.days as f64,
        alpha_range: None,
        source_days: days,
    })
}

/// Take-rate change caused by changing the AD's keyword bids. `delta_bids`
/// maps a record position to the bid change on that auction; positions not
/// present are unchanged.
pub fn propagate_tk_delta(
    log: &AuctionLog,
    ad: AdId,
    days: DayFilter,
    delta_bids: &HashMap<usize, Money>,
) -> Result<f64> {
    let s = sums(log, ad, days)?;
    let mut spend_delta = 0.0;
    for (pos, _, c) in log.ad_entries(ad, days)? {
        if let Some(d) = delta_bids.get(&pos) {
            spend_delta += c.ctr * d.to_f64();
        }
    }
    Ok(spend_delta / s.value)
}

/// Alpha interval whose replayed cost spans the cost of bidding `lower` and
/// `upper` uniformly on every keyword.
pub fn feasible_alpha_range(
    log: &AuctionLog,
    ad: AdId,
    profile: &AdProfile,
    lower: Money,
    upper: Money,
    days: DayFilter,
) -> Result<AlphaRange> {
    if !(lower > Money::ZERO && lower <= upper) {
        return Err(Error::InvalidArgument(format!(
            "AD {ad}: bid bounds need 0 < lower <= upper, got [{lower}, {upper}]"
        )));
    }
    let uniform_cost = |bid: Money| -> Result<f64> {
        let policy = BidPolicy::single(ad, BidRule::Uniform { bid: bid.to_f64() })?;
        Ok(evaluate(log, ad, &policy, days)?.cost)
    };
    let z_lo = uniform_cost(lower)?;
    let z_hi = if upper == lower { z_lo } else { uniform_cost(upper)? };
    let bounds = DEFAULT_ALPHA_BOUNDS;
    let tk = profile.take_rate;
    let inv_lo = invert_cost(log, ad, tk, z_lo, bounds, days)?;
    let inv_hi = if z_hi == z_lo {
        inv_lo
    } else {
        invert_cost(log, ad, tk, z_hi, bounds, days)?
    };
    let at_bound = |alpha: f64, side: Option<ClampSide>| side.is_some() || alpha <= bounds.0 || alpha >= bounds.1;
    let mut range = AlphaRange {
        lo: inv_lo.alpha,
        hi: inv_hi.alpha,
        clamped_lo: at_bound(inv_lo.alpha, inv_lo.clamped),
        clamped_hi: at_bound(inv_hi.alpha, inv_hi.clamped),
    };
    if range.lo > range.hi {
        range = AlphaRange {
            lo: range.hi,
            hi: range.lo,
            clamped_lo: range.clamped_hi,
            clamped_hi: range.clamped_lo,
        };
    }
    Ok(range)
}

/// Mean logged keyword bid of `ad` over the selected days.
pub fn mean_keyword_bid(log: &AuctionLog, ad: AdId, days: DayFilter) -> Result<f64> {
    let (mut total, mut n) = (0.0, 0usize);
    for (_, _, c) in log.ad_entries(ad, days)? {
        total += c.keyword_bid.to_f64();
        n += 1;
    }
    if n == 0 {
        return Err(Error::DegenerateAd {
            ad,
            reason: "no auctions on the selected days",
        });
    }
    Ok(total / n as f64)
}

/// Profile plus feasible alpha range, the unit most callers need.
pub fn profile_with_range(
    log: &AuctionLog,
    ad: AdId,
    lower: Money,
    upper: Money,
    days: DayFilter,
) -> Result<AdProfile> {
    let mut profile = compute_profile(log, ad, days)?;
    profile.alpha_range = Some(feasible_alpha_range(log, ad, &profile, lower, upper, days)?);
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AuctionCandidate, AuctionRecord, DEFAULT_RESERVE};

    fn rec(id: u64, ctr: f64, cvr: f64, ip: f64, bid: f64) -> AuctionRecord {
        AuctionRecord {
            auction_id: id,
            day: 0,
            slots: 1,
            reserve_price: DEFAULT_RESERVE,
            candidates: vec![AuctionCandidate {
                ad_id: AdId(1),
                keyword_bid: Money::from_f64(bid),
                ctr,
                cvr,
                item_price: Money::from_f64(ip),
            }],
        }
    }

    #[test]
    fn single_auction_profile() {
        let log = AuctionLog::new(vec![rec(0, 1.0, 0.1, 100.0, 10.0)]).unwrap();
        let p = compute_profile(&log, AdId(1), DayFilter::All).unwrap();
        assert!((p.expected_roi - 1.0).abs() < 1e-12);
        assert!((p.take_rate - 1.0).abs() < 1e-12);
        assert!((p.virtual_budget - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_auction_profile() {
        let log = AuctionLog::new(vec![rec(0, 0.1, 0.2, 100.0, 1.0), rec(1, 0.2, 0.1, 50.0, 2.0)]).unwrap();
        let p = compute_profile(&log, AdId(1), DayFilter::All).unwrap();
        assert!((p.expected_roi - 6.0).abs() < 1e-12);
        assert!((p.take_rate - 1.0 / 6.0).abs() < 1e-12);
        assert!((p.virtual_budget - 0.5).abs() < 1e-12);
        assert!((p.take_rate * p.expected_roi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_cvr_is_degenerate() {
        let log = AuctionLog::new(vec![rec(0, 0.1, 0.0, 100.0, 1.0)]).unwrap();
        assert!(matches!(
            compute_profile(&log, AdId(1), DayFilter::All),
            Err(Error::DegenerateAd { .. })
        ));
        let zero_bid = AuctionLog::new(vec![rec(0, 0.1, 0.2, 100.0, 0.0)]).unwrap();
        assert!(matches!(
            compute_profile(&zero_bid, AdId(1), DayFilter::All),
            Err(Error::DegenerateAd { .. })
        ));
    }

    #[test]
    fn tk_delta_formula() {
        let log = AuctionLog::new(vec![rec(0, 1.0, 0.1, 100.0, 10.0)]).unwrap();
        let none = propagate_tk_delta(&log, AdId(1), DayFilter::All, &HashMap::new()).unwrap();
        assert_eq!(none, 0.0);
        let delta = HashMap::from([(0usize, Money::from_f64(5.0))]);
        let d = propagate_tk_delta(&log, AdId(1), DayFilter::All, &delta).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn equal_bounds_collapse_range() {
        let mut records = Vec::new();
        for i in 0..20 {
            let mut r = rec(i, 0.05 + 0.01 * (i % 5) as f64, 0.05 + 0.02 * (i % 3) as f64, 80.0, 1.0);
            r.slots = 1;
            r.candidates.push(AuctionCandidate {
                ad_id: AdId(2),
                keyword_bid: Money::from_f64(0.5 + 0.1 * (i % 7) as f64),
                ctr: 0.08,
                cvr: 0.05,
                item_price: Money::from_f64(40.0),
            });
            records.push(r);
        }
        let log = AuctionLog::new(records).unwrap();
        let p = compute_profile(&log, AdId(1), DayFilter::All).unwrap();
        let b = Money::from_f64(1.0);
        let range = feasible_alpha_range(&log, AdId(1), &p, b, b, DayFilter::All).unwrap();
        assert_eq!(range.lo, range.hi);

        let tiny = Money::from_minor(1);
        let range = feasible_alpha_range(&log, AdId(1), &p, tiny, b, DayFilter::All).unwrap();
        assert_eq!(range.lo, DEFAULT_ALPHA_BOUNDS.0);
        assert!(range.clamped_lo);
        assert!(range.lo <= range.hi);

        assert!(feasible_alpha_range(&log, AdId(1), &p, Money::ZERO, b, DayFilter::All).is_err());
    }
}
