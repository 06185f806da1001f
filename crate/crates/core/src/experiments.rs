//! Offline evaluation at three levels: single ADs switching from keyword
//! bids to impression-level bids, campaigns optimized for GMV or for even
//! impressions, and platform-wide adoption sweeps.
//!
//! Every comparison is reported as relative shifts `100 * (test - base) / base`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{compute_profile, mean_keyword_bid, DEFAULT_ALPHA_BOUNDS};
use crate::model::{AdId, AuctionLog, Campaign, DayFilter, ReplaySummary};
use crate::money::{Money, MINOR_UNIT};
use crate::optimize::{
    build_grid, normalized_std, optimize_gmv, optimize_style, realize_style, CampaignProblem, CostWindow, Demand,
};
use crate::replay::{evaluate, invert_cost, inversion_tolerance, replay_all, BidPolicy, BidRule};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricShift {
    pub cost_pct: Option<f64>,
    pub gmv_pct: Option<f64>,
    pub roi_pct: Option<f64>,
    pub cvr_pct: Option<f64>,
    pub ppc_pct: Option<f64>,
}

fn pct(base: Option<f64>, test: Option<f64>) -> Option<f64> {
    match (base, test) {
        (Some(b), Some(t)) if b > 0.0 => Some(100.0 * (t - b) / b),
        _ => None,
    }
}

impl MetricShift {
    pub fn between(base: &ReplaySummary, test: &ReplaySummary) -> Self {
        let positive = |v: f64| (v > 0.0).then_some(v);
        MetricShift {
            cost_pct: pct(positive(base.cost), Some(test.cost)),
            gmv_pct: pct(positive(base.gmv), Some(test.gmv)),
            roi_pct: pct(base.roi(), test.roi()),
            cvr_pct: pct(base.cvr(), test.cvr()),
            ppc_pct: pct(base.ppc(), test.ppc()),
        }
    }
}

fn total<'a>(items: impl IntoIterator<Item = &'a ReplaySummary>) -> ReplaySummary {
    items.into_iter().fold(ReplaySummary::default(), |acc, s| acc + *s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedAd {
    pub ad_id: AdId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdLevelRow {
    pub ad_id: AdId,
    pub take_rate: f64,
    pub alpha: f64,
    /// Inverted cost landed within the inversion tolerance of the target.
    pub matched: bool,
    /// CIA cost inside `[(beta - eps), (beta + eps)]` times keyword cost.
    pub in_window: bool,
    pub keyword: ReplaySummary,
    pub cia: ReplaySummary,
    pub shift: MetricShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdLevelReport {
    pub window: CostWindow,
    pub days: DayFilter,
    pub rows: Vec<AdLevelRow>,
    pub skipped: Vec<SkippedAd>,
    pub keyword_total: ReplaySummary,
    pub cia_total: ReplaySummary,
    pub overall: MetricShift,
}

fn ad_level_row(log: &AuctionLog, ad: AdId, window: CostWindow, days: DayFilter) -> Result<AdLevelRow> {
    let profile = compute_profile(log, ad, days)?;
    let keyword = evaluate(log, ad, &BidPolicy::keyword(), days)?;
    let target = window.beta * keyword.cost;
    let inv = invert_cost(log, ad, profile.take_rate, target, DEFAULT_ALPHA_BOUNDS, days)?;
    let rule = BidRule::Cia {
        alpha: inv.alpha,
        tk: profile.take_rate,
    };
    let cia = evaluate(log, ad, &BidPolicy::single(ad, rule)?, days)?;
    let (lo, hi) = window.bounds(keyword.cost);
    let slack = inversion_tolerance(target);
    Ok(AdLevelRow {
        ad_id: ad,
        take_rate: profile.take_rate,
        alpha: inv.alpha,
        matched: inv.within_tolerance,
        in_window: cia.cost >= lo - slack && cia.cost <= hi + slack,
        shift: MetricShift::between(&keyword, &cia),
        keyword,
        cia,
    })
}

/// Switches each AD alone to CIA bidding, with alpha chosen so its cost
/// matches `beta` times its keyword-bid cost, and compares against keyword
/// bidding. ADs without a usable profile are skipped and listed.
pub fn run_ad_level(log: &AuctionLog, ads: &[AdId], window: CostWindow, days: DayFilter) -> Result<AdLevelReport> {
    let outcomes: Vec<Result<AdLevelRow>> = ads.par_iter().map(|&ad| ad_level_row(log, ad, window, days)).collect();
    let mut rows = Vec::with_capacity(ads.len());
    let mut skipped = Vec::new();
    for (&ad, outcome) in ads.iter().zip(outcomes) {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e @ Error::DegenerateAd { .. }) => skipped.push(SkippedAd {
                ad_id: ad,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let keyword_total = total(rows.iter().map(|r| &r.keyword));
    let cia_total = total(rows.iter().map(|r| &r.cia));
    Ok(AdLevelReport {
        window,
        days,
        overall: MetricShift::between(&keyword_total, &cia_total),
        rows,
        skipped,
        keyword_total,
        cia_total,
    })
}

/// Geometric bisection for the smallest parameter in `[lo, hi]` whose
/// non-decreasing cost reaches `target`; returns the bracket end closer in
/// cost.
fn match_cost(
    lo: f64,
    hi: f64,
    target: f64,
    mut cost: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let tol = inversion_tolerance(target);
    let (mut a, mut b) = (lo, hi);
    let (mut ca, mut cb) = (cost(a)?, cost(b)?);
    if target <= ca {
        return Ok((a, ca));
    }
    if target >= cb {
        return Ok((b, cb));
    }
    for _ in 0..64 {
        let m = (a * b).sqrt();
        if m <= a || m >= b {
            break;
        }
        let cm = cost(m)?;
        if (cm - target).abs() <= tol {
            return Ok((m, cm));
        }
        if cm < target {
            a = m;
            ca = cm;
        } else {
            b = m;
            cb = cm;
        }
    }
    Ok(if target - ca <= cb - target { (a, ca) } else { (b, cb) })
}

fn campaign_rule_summaries(
    log: &AuctionLog,
    ads: &[AdId],
    rule: impl Fn(usize) -> BidRule + Sync,
    days: DayFilter,
) -> Result<Vec<ReplaySummary>> {
    (0..ads.len())
        .into_par_iter()
        .map(|i| evaluate(log, ads[i], &BidPolicy::single(ads[i], rule(i))?, days))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignGmvReport {
    pub campaign_id: String,
    pub feasible: bool,
    pub window: (f64, f64),
    pub alphas: Vec<f64>,
    pub cia: ReplaySummary,
    /// Common factor applied to every keyword bid of the baseline.
    pub baseline_scale: f64,
    pub baseline: ReplaySummary,
    pub shift: MetricShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignStyleReport {
    pub campaign_id: String,
    pub feasible: bool,
    pub window: (f64, f64),
    pub alphas: Vec<f64>,
    pub cia: Vec<ReplaySummary>,
    /// Bid every AD of the baseline uses on every keyword.
    pub baseline_bid: f64,
    pub baseline: Vec<ReplaySummary>,
    pub cia_impression_std: f64,
    pub baseline_impression_std: f64,
    pub cia_cost_std: f64,
    pub baseline_cost_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "demand", rename_all = "snake_case")]
pub enum CampaignReport {
    Gmv(CampaignGmvReport),
    Style(CampaignStyleReport),
}

/// GMV-optimal alphas against keyword bids uniformly scaled so that the
/// baseline spends `beta` times the campaign's keyword cost.
pub fn run_campaign_gmv(
    log: &AuctionLog,
    campaign: &Campaign,
    window: CostWindow,
    grid_size: usize,
    days: DayFilter,
) -> Result<CampaignGmvReport> {
    let problem = CampaignProblem::new(log, campaign.clone(), window, grid_size, Demand::Gmv, days)?;
    let grid = build_grid(log, &problem)?;
    let alloc = optimize_gmv(&grid, window)?;
    let selection = alloc.selection.as_ref().expect("gmv allocation has a selection");
    let cia = total(grid.ads.iter().zip(selection).map(|(ad, &j)| &ad.options[j].summary));

    let ads = &campaign.ad_ids;
    let target = window.beta * grid.baseline_total();
    let scaled = |factor: f64| campaign_rule_summaries(log, ads, |_| BidRule::ScaledKeyword { factor }, days);
    let (baseline_scale, _) = if window.beta == 1.0 {
        (1.0, 0.0)
    } else {
        match_cost(1e-3, 1e3, target, |f| Ok(total(&scaled(f)?).cost))?
    };
    let baseline = total(&scaled(baseline_scale)?);
    Ok(CampaignGmvReport {
        campaign_id: campaign.campaign_id.clone(),
        feasible: alloc.feasible,
        window: alloc.window,
        alphas: alloc.alphas,
        shift: MetricShift::between(&baseline, &cia),
        cia,
        baseline_scale,
        baseline,
    })
}

/// Even-impression allocation against one shared uniform bid whose total
/// cost matches the CIA allocation's replayed cost.
pub fn run_campaign_style(
    log: &AuctionLog,
    campaign: &Campaign,
    window: CostWindow,
    grid_size: usize,
    days: DayFilter,
) -> Result<CampaignStyleReport> {
    let problem = CampaignProblem::new(log, campaign.clone(), window, grid_size, Demand::Style, days)?;
    let grid = build_grid(log, &problem)?;
    let alloc = optimize_style(&grid, window)?;
    let (alphas, cia) = realize_style(log, &grid, &alloc, days)?;
    let cia_cost = total(&cia).cost;

    let ads = &campaign.ad_ids;
    let uniform = |bid: f64| campaign_rule_summaries(log, ads, |_| BidRule::Uniform { bid }, days);
    let top_bid = campaign
        .ad_ids
        .iter()
        .flat_map(|&ad| log.ad_entries(ad, days).into_iter().flatten())
        .map(|(_, _, c)| c.keyword_bid.to_f64())
        .fold(MINOR_UNIT, f64::max);
    let (baseline_bid, _) = match_cost(MINOR_UNIT, top_bid * 1e3, cia_cost, |b| Ok(total(&uniform(b)?).cost))?;
    let baseline = uniform(baseline_bid)?;

    let impressions = |s: &[ReplaySummary]| s.iter().map(|v| v.impressions).collect::<Vec<_>>();
    let costs = |s: &[ReplaySummary]| s.iter().map(|v| v.cost).collect::<Vec<_>>();
    Ok(CampaignStyleReport {
        campaign_id: campaign.campaign_id.clone(),
        feasible: alloc.feasible,
        window: alloc.window,
        alphas,
        cia_impression_std: normalized_std(&impressions(&cia)),
        baseline_impression_std: normalized_std(&impressions(&baseline)),
        cia_cost_std: normalized_std(&costs(&cia)),
        baseline_cost_std: normalized_std(&costs(&baseline)),
        cia,
        baseline_bid,
        baseline,
    })
}

pub fn run_campaign_level(
    log: &AuctionLog,
    campaigns: &[Campaign],
    demand: Demand,
    window: CostWindow,
    grid_size: usize,
    days: DayFilter,
) -> Result<Vec<CampaignReport>> {
    campaigns
        .iter()
        .map(|c| match demand {
            Demand::Gmv => run_campaign_gmv(log, c, window, grid_size, days).map(CampaignReport::Gmv),
            Demand::Style => run_campaign_style(log, c, window, grid_size, days).map(CampaignReport::Style),
        })
        .collect()
}

/// Random campaigns of `size` distinct ADs each. A campaign shares one
/// tolerable bid range: `bound_factors.0` times the smallest and
/// `bound_factors.1` times the largest mean keyword bid of its ADs.
pub fn sample_campaigns(
    log: &AuctionLog,
    count: usize,
    size: usize,
    bound_factors: (f64, f64),
    seed: u64,
    days: DayFilter,
) -> Result<Vec<Campaign>> {
    let all = log.ad_ids();
    if size == 0 || size > all.len() {
        return Err(Error::InvalidArgument(format!(
            "campaign size must lie in [1, {}], got {size}",
            all.len()
        )));
    }
    if !(bound_factors.0 > 0.0 && bound_factors.0 <= bound_factors.1) {
        return Err(Error::InvalidArgument("bid bound factors need 0 < lower <= upper".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut ads = all.clone();
        ads.shuffle(&mut rng);
        ads.truncate(size);
        ads.sort();
        let means = ads
            .iter()
            .map(|&ad| mean_keyword_bid(log, ad, days))
            .collect::<Result<Vec<_>>>()?;
        let smallest = means.iter().copied().fold(f64::INFINITY, f64::min);
        let largest = means.iter().copied().fold(0.0, f64::max);
        let lo = Money::from_f64(smallest * bound_factors.0).max(Money::from_minor(1));
        let hi = Money::from_f64(largest * bound_factors.1).max(lo);
        out.push(Campaign {
            campaign_id: format!("c{k:03}"),
            ad_ids: ads,
            bid_lower: vec![lo; size],
            bid_upper: vec![hi; size],
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdoptionRow {
    pub fraction: f64,
    pub adopters: usize,
    /// Every AD in the selected auctions.
    pub all_baseline: ReplaySummary,
    pub all_test: ReplaySummary,
    pub all_shift: MetricShift,
    /// Adopting ADs only.
    pub cia_baseline: ReplaySummary,
    pub cia_test: ReplaySummary,
    pub cia_shift: MetricShift,
    /// Per-AD replay outcomes equal the keyword-bid baseline exactly.
    pub identical_to_baseline: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdoptionSweep {
    pub seed: u64,
    pub fractions: Vec<f64>,
    pub rows: Vec<AdoptionRow>,
    /// Calibration of every AD that could adopt.
    pub calibration: Vec<AdLevelRow>,
    pub skipped: Vec<SkippedAd>,
}

/// Platform totals when each adopter set switches to CIA bidding at once,
/// every auction replayed with all adopters' new bids.
pub fn sweep_with_adopters(
    log: &AuctionLog,
    calibration: &[AdLevelRow],
    adopter_sets: &[Vec<AdId>],
    days: DayFilter,
) -> Result<Vec<AdoptionRow>> {
    let rules: BTreeMap<AdId, BidRule> = calibration
        .iter()
        .map(|r| {
            (
                r.ad_id,
                BidRule::Cia {
                    alpha: r.alpha,
                    tk: r.take_rate,
                },
            )
        })
        .collect();
    let baseline = replay_all(log, &BidPolicy::keyword(), days)?;
    let all_baseline = total(baseline.values());
    let n_ads = baseline.len().max(1);
    adopter_sets
        .iter()
        .map(|adopters| {
            let mut policy = BidPolicy::keyword();
            for ad in adopters {
                let rule = *rules.get(ad).ok_or(Error::UnknownAd(*ad))?;
                policy.set(*ad, rule)?;
            }
            let test = replay_all(log, &policy, days)?;
            let all_test = total(test.values());
            let pick = |m: &BTreeMap<AdId, ReplaySummary>| total(adopters.iter().filter_map(|a| m.get(a)));
            let (cia_baseline, cia_test) = (pick(&baseline), pick(&test));
            Ok(AdoptionRow {
                fraction: adopters.len() as f64 / n_ads as f64,
                adopters: adopters.len(),
                all_shift: MetricShift::between(&all_baseline, &all_test),
                cia_shift: MetricShift::between(&cia_baseline, &cia_test),
                identical_to_baseline: test == baseline,
                all_baseline,
                all_test,
                cia_baseline,
                cia_test,
            })
        })
        .collect()
}

/// Calibrates every AD as in [`run_ad_level`], orders the calibrated ADs by
/// one seeded shuffle, and lets the leading `fraction` of them adopt, so
/// adopter sets are nested across fractions.
pub fn run_platform_sweep(
    log: &AuctionLog,
    fractions: &[f64],
    seed: u64,
    window: CostWindow,
    days: DayFilter,
) -> Result<AdoptionSweep> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidArgument("adoption fractions must lie in [0, 1]".into()));
    }
    if fractions.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("adoption fractions must be ascending".into()));
    }
    let calibration = run_ad_level(log, &log.ad_ids(), window, days)?;
    let mut order: Vec<AdId> = calibration.rows.iter().map(|r| r.ad_id).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sets: Vec<Vec<AdId>> = fractions
        .iter()
        .map(|f| {
            let k = (f * order.len() as f64).round() as usize;
            order[..k.min(order.len())].to_vec()
        })
        .collect();
    let mut rows = sweep_with_adopters(log, &calibration.rows, &sets, days)?;
    for (row, &f) in rows.iter_mut().zip(fractions) {
        row.fraction = f;
    }
    Ok(AdoptionSweep {
        seed,
        fractions: fractions.to_vec(),
        rows,
        calibration: calibration.rows,
        skipped: calibration.skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AuctionCandidate, AuctionRecord, DEFAULT_RESERVE};

    fn cand(ad: u64, bid: f64, ctr: f64, cvr: f64, ip: f64) -> AuctionCandidate {
        AuctionCandidate {
            ad_id: AdId(ad),
            keyword_bid: Money::from_f64(bid),
            ctr,
            cvr,
            item_price: Money::from_f64(ip),
        }
    }

    fn rec(id: u64, day: u32, candidates: Vec<AuctionCandidate>) -> AuctionRecord {
        AuctionRecord {
            auction_id: id,
            day,
            slots: 1,
            reserve_price: DEFAULT_RESERVE,
            candidates,
        }
    }

    #[test]
    fn shift_definitions() {
        let base = ReplaySummary {
            cost: 10.0,
            gmv: 20.0,
            impressions: 5.0,
            clicks: 2.0,
            conversions: 0.2,
        };
        let test = ReplaySummary {
            cost: 11.0,
            gmv: 30.0,
            impressions: 5.0,
            clicks: 2.0,
            conversions: 0.3,
        };
        let s = MetricShift::between(&base, &test);
        assert!((s.cost_pct.unwrap() - 10.0).abs() < 1e-12);
        assert!((s.gmv_pct.unwrap() - 50.0).abs() < 1e-12);
        assert!((s.roi_pct.unwrap() - 100.0 * (30.0 / 11.0 - 2.0) / 2.0).abs() < 1e-12);
        assert!((s.cvr_pct.unwrap() - 50.0).abs() < 1e-9);
        assert!((s.ppc_pct.unwrap() - 10.0).abs() < 1e-12);
        let none = MetricShift::between(&ReplaySummary::default(), &test);
        assert_eq!(none, MetricShift::default());
    }

    #[test]
    fn constant_value_log_has_zero_shift() {
        // Every impression has the same cvr * ip, so CIA bids are one level.
        let records = (0..6)
            .map(|i| {
                rec(
                    i,
                    (i % 2) as u32,
                    vec![cand(1, 1.0, 0.1, 0.1, 10.0), cand(2, 0.5 + 0.1 * i as f64, 0.1, 0.1, 10.0)],
                )
            })
            .collect();
        let log = AuctionLog::new(records).unwrap();
        let r = run_ad_level(&log, &[AdId(1)], CostWindow::new(1.0, 0.1).unwrap(), DayFilter::All).unwrap();
        let s = r.overall;
        assert!(s.cost_pct.unwrap().abs() < 0.1);
        assert!(s.gmv_pct.unwrap().abs() < 1e-9);
    }

    #[test]
    fn degenerate_ads_are_skipped() {
        let log = AuctionLog::new(vec![rec(0, 0, vec![cand(1, 1.0, 0.1, 0.0, 10.0), cand(2, 1.0, 0.1, 0.1, 10.0)])])
            .unwrap();
        let r = run_ad_level(&log, &[AdId(1), AdId(2)], CostWindow::new(1.0, 0.1).unwrap(), DayFilter::All).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].ad_id, AdId(1));
        assert_eq!(r.rows.len(), 1);
    }

    #[test]
    fn empty_adoption_is_identical() {
        let records = (0..8)
            .map(|i| {
                rec(
                    i,
                    0,
                    vec![cand(1, 1.0, 0.1, 0.05 + 0.01 * i as f64, 10.0), cand(2, 0.8, 0.12, 0.05, 12.0)],
                )
            })
            .collect();
        let log = AuctionLog::new(records).unwrap();
        let sweep =
            run_platform_sweep(&log, &[0.0, 1.0], 7, CostWindow::new(1.0, 0.1).unwrap(), DayFilter::All).unwrap();
        let zero = &sweep.rows[0];
        assert!(zero.identical_to_baseline);
        assert_eq!(zero.all_shift.cost_pct, Some(0.0));
        assert_eq!(zero.all_shift.gmv_pct, Some(0.0));
        assert_eq!(sweep.rows[1].adopters, 2);
    }
}
