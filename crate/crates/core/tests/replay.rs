use cia::inference::compute_profile;
use cia::replay::{evaluate, invert_cost, replay_all, replay_auction, BidPolicy, BidRule};
use cia::synth::{generate, SynthConfig};
use cia::{AdId, AuctionCandidate, AuctionRecord, DayFilter, Money, ReplaySummary};
use proptest::prelude::*;

fn log() -> cia::AuctionLog {
    generate(&SynthConfig {
        seed: 17,
        num_ads: 40,
        num_days: 2,
        auctions_per_day: 2500,
        ..SynthConfig::default()
    })
    .unwrap()
}

/// Replays every record of the log without the per-AD index.
fn full_scan(log: &cia::AuctionLog, ad: AdId, policy: &BidPolicy) -> ReplaySummary {
    let mut s = ReplaySummary::default();
    for record in log.records() {
        for w in replay_auction(record, policy) {
            if w.ad_id != ad {
                continue;
            }
            let c = record.candidate(ad).unwrap();
            s.cost += c.ctr * w.click_price;
            s.gmv += c.ctr * c.cvr * c.item_price.to_f64();
            s.impressions += 1.0;
            s.clicks += c.ctr;
            s.conversions += c.ctr * c.cvr;
        }
    }
    s.scaled(1.0 / log.days().len() as f64)
}

#[test]
fn indexed_evaluation_matches_full_scan() {
    let log = log();
    let policy = BidPolicy::keyword();
    for ad in log.ad_ids() {
        assert_eq!(evaluate(&log, ad, &policy, DayFilter::All).unwrap(), full_scan(&log, ad, &policy));
    }
}

#[test]
fn replay_all_agrees_with_per_ad_evaluation() {
    let log = log();
    let mut policy = BidPolicy::keyword();
    for (i, ad) in log.ad_ids().into_iter().enumerate().filter(|(i, _)| i % 3 == 0) {
        let tk = compute_profile(&log, ad, DayFilter::All).unwrap().take_rate;
        policy.set(ad, BidRule::Cia { alpha: 0.5 + i as f64 / 40.0, tk }).unwrap();
    }
    let all = replay_all(&log, &policy, DayFilter::All).unwrap();
    for (ad, summary) in &all {
        let single = evaluate(&log, *ad, &policy, DayFilter::All).unwrap();
        assert!((summary.cost - single.cost).abs() <= 1e-12 * single.cost.max(1.0));
        assert!((summary.gmv - single.gmv).abs() <= 1e-12 * single.gmv.max(1.0));
        assert_eq!(summary.impressions, single.impressions);
    }
}

#[test]
fn single_won_slot_accumulates_one_term() {
    let record = AuctionRecord {
        auction_id: 0,
        day: 0,
        slots: 1,
        reserve_price: Money::from_f64(1.0),
        candidates: vec![AuctionCandidate {
            ad_id: AdId(1),
            keyword_bid: Money::from_f64(2.0),
            ctr: 0.1,
            cvr: 0.2,
            item_price: Money::from_f64(100.0),
        }],
    };
    let log = cia::AuctionLog::new(vec![record]).unwrap();
    let s = evaluate(&log, AdId(1), &BidPolicy::keyword(), DayFilter::All).unwrap();
    assert!((s.cost - 0.1).abs() < 1e-12);
    assert!((s.gmv - 2.0).abs() < 1e-12);
    assert!((s.clicks - 0.1).abs() < 1e-12);
    assert_eq!(s.impressions, 1.0);
}

#[test]
fn inversion_clamps_outside_the_achievable_range() {
    let log = log();
    let ad = log.ad_ids()[0];
    let tk = compute_profile(&log, ad, DayFilter::All).unwrap().take_rate;
    let hi_cost = evaluate(&log, ad, &BidPolicy::single(ad, BidRule::Cia { alpha: 10.0, tk }).unwrap(), DayFilter::All)
        .unwrap()
        .cost;
    let inv = invert_cost(&log, ad, tk, hi_cost * 10.0, (0.1, 10.0), DayFilter::All).unwrap();
    assert_eq!(inv.alpha, 10.0);
    assert!(inv.clamped.is_some());
}

fn candidate_strategy() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.0f64..3.0, 0.001f64..0.3, 0.0f64..0.3, 1.0f64..200.0)
}

fn record_strategy() -> impl Strategy<Value = (AuctionRecord, Vec<(f64, f64)>)> {
    (
        prop::collection::vec(candidate_strategy(), 1..8),
        1u32..4,
        0.0f64..0.3,
        prop::collection::vec((0.2f64..5.0, 0.1f64..2.0), 8),
    )
        .prop_map(|(cands, slots, reserve, rules)| {
            let record = AuctionRecord {
                auction_id: 0,
                day: 0,
                slots,
                reserve_price: Money::from_f64(reserve),
                candidates: cands
                    .iter()
                    .enumerate()
                    .map(|(i, &(bid, ctr, cvr, ip))| AuctionCandidate {
                        ad_id: AdId(i as u64 + 1),
                        keyword_bid: Money::from_f64(bid),
                        ctr,
                        cvr,
                        item_price: Money::from_f64(ip),
                    })
                    .collect(),
            };
            (record, rules)
        })
}

proptest! {
    #[test]
    fn prices_sit_between_reserve_and_bid((record, rules) in record_strategy()) {
        let mut policy = BidPolicy::keyword();
        for (i, &(alpha, tk)) in rules.iter().enumerate().filter(|(i, _)| i % 2 == 0) {
            policy.set(AdId(i as u64 + 1), BidRule::Cia { alpha, tk }).unwrap();
        }
        let reserve = record.reserve_price.to_f64();
        let winners = replay_auction(&record, &policy);
        prop_assert!(winners.len() <= record.slots as usize);
        for (slot, w) in winners.iter().enumerate() {
            let c = record.candidate(w.ad_id).unwrap();
            let bid = policy.bid(c);
            prop_assert_eq!(w.slot as usize, slot);
            prop_assert!(w.click_price >= reserve);
            prop_assert!(w.click_price <= bid);
        }
    }

    #[test]
    fn cia_score_is_alpha_tk_ctr_cvr_ip((record, rules) in record_strategy()) {
        for (c, &(alpha, tk)) in record.candidates.iter().zip(&rules) {
            let policy = BidPolicy::single(c.ad_id, BidRule::Cia { alpha, tk }).unwrap();
            let score = cia::replay::score(c, policy.bid(c));
            let direct = alpha * tk * c.ctr * c.cvr * c.item_price.to_f64();
            prop_assert!((score - direct).abs() <= 1e-9 * direct.abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn raising_a_winning_bid_keeps_its_price((record, _rules) in record_strategy(), raise in 1.0f64..3.0) {
        let winners = replay_auction(&record, &BidPolicy::keyword());
        if let Some(top) = winners.first() {
            let c = record.candidate(top.ad_id).unwrap();
            let raised = BidPolicy::single(top.ad_id, BidRule::Uniform { bid: c.keyword_bid.to_f64() * raise }).unwrap();
            let again = replay_auction(&record, &raised);
            prop_assert_eq!(again[0].ad_id, top.ad_id);
            if top.click_price < c.keyword_bid.to_f64() {
                prop_assert_eq!(again[0].click_price, top.click_price);
            }
        }
    }
}
