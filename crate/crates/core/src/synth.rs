//! Seeded synthetic auction logs whose per-AD daily distributions are
//! stationary by construction, plus the day-over-day stationarity report
//! that replay relies on.

use std::collections::HashMap;

use rand::seq::index::sample_weighted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdId, AuctionCandidate, AuctionLog, AuctionRecord, DEFAULT_RESERVE};
use crate::money::Money;

/// Family of per-AD Beta distributions: each AD draws its mean uniformly from
/// `mean`, and per-auction values are Beta(mean * c, (1 - mean) * c).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub mean: (f64, f64),
    pub concentration: f64,
}

/// How an AD's keyword bid level is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BidLevel {
    /// Level drawn uniformly from a money range.
    Uniform { lo: Money, hi: Money },
    /// Level = mean cvr * item price / roi, roi drawn uniformly from the range.
    TargetRoi { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_ads: u32,
    pub num_days: u32,
    pub auctions_per_day: u32,
    pub slots: u32,
    pub reserve_price: Money,
    pub ctr_shape: BetaShape,
    pub cvr_shape: BetaShape,
    pub price_range: (Money, Money),
    pub bid_policy: BidLevel,
    pub keywords_per_ad: u32,
    /// Per-keyword multiplier range on the AD's bid level.
    pub keyword_noise: (f64, f64),
    pub candidates_per_auction: (u32, u32),
    /// Log-normal sigma of the per-AD popularity weights.
    pub popularity_sigma: f64,
    /// Log-normal sigma of a per-auction factor on every candidate's mean cvr
    /// (shared purchase intent of the query). Zero disables it.
    pub query_intent_sigma: f64,
    pub first_ad_id: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            num_ads: 200,
            num_days: 7,
            auctions_per_day: 20_000,
            slots: 3,
            reserve_price: DEFAULT_RESERVE,
            ctr_shape: BetaShape {
                mean: (0.02, 0.08),
                concentration: 30.0,
            },
            cvr_shape: BetaShape {
                mean: (0.01, 0.06),
                concentration: 12.0,
            },
            price_range: (Money::from_minor(100_000), Money::from_minor(2_000_000)),
            bid_policy: BidLevel::TargetRoi { lo: 2.0, hi: 6.0 },
            keywords_per_ad: 4,
            keyword_noise: (0.8, 1.2),
            candidates_per_auction: (3, 8),
            popularity_sigma: 0.8,
            query_intent_sigma: 0.3,
            first_ad_id: 1,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("num_ads", self.num_ads),
            ("num_days", self.num_days),
            ("auctions_per_day", self.auctions_per_day),
            ("slots", self.slots),
            ("keywords_per_ad", self.keywords_per_ad),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.auctions_per_day < self.num_ads {
            return Err(invalid(
                "auctions_per_day",
                "must be >= num_ads so every AD appears every day",
            ));
        }
        for (field, shape) in [("ctr_shape", &self.ctr_shape), ("cvr_shape", &self.cvr_shape)] {
            let (lo, hi) = shape.mean;
            if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                return Err(invalid(field, "mean range must lie inside (0, 1)"));
            }
            if !(shape.concentration > 0.0 && shape.concentration.is_finite()) {
                return Err(invalid(field, "concentration must be positive"));
            }
        }
        let (plo, phi) = self.price_range;
        if !(plo > Money::ZERO && plo <= phi) {
            return Err(invalid("price_range", "need 0 < lower <= upper"));
        }
        if self.reserve_price.is_negative() {
            return Err(invalid("reserve_price", "must be >= 0"));
        }
        match &self.bid_policy {
            BidLevel::Uniform { lo, hi } if !(*lo >= Money::ZERO && lo <= hi) => {
                return Err(invalid("bid_policy", "need 0 <= lo <= hi"));
            }
            BidLevel::TargetRoi { lo, hi } if !(*lo > 0.0 && lo <= hi) => {
                return Err(invalid("bid_policy", "need 0 < lo <= hi"));
            }
            _ => {}
        }
        let (nlo, nhi) = self.keyword_noise;
        if !(nlo > 0.0 && nlo <= nhi) {
            return Err(invalid("keyword_noise", "need 0 < lo <= hi"));
        }
        let (clo, chi) = self.candidates_per_auction;
        if !(clo >= 1 && clo <= chi) {
            return Err(invalid("candidates_per_auction", "need 1 <= lo <= hi"));
        }
        if !(self.popularity_sigma >= 0.0 && self.popularity_sigma.is_finite()) {
            return Err(invalid("popularity_sigma", "must be >= 0"));
        }
        if !(self.query_intent_sigma >= 0.0 && self.query_intent_sigma.is_finite()) {
            return Err(invalid("query_intent_sigma", "must be >= 0"));
        }
        Ok(())
    }
}

/// Static per-AD parameters drawn once per log.
#[derive(Clone, Debug)]
struct AdSpec {
    id: AdId,
    ctr_mean: f64,
    cvr_mean: f64,
    item_price: Money,
    keyword_bids: Vec<Money>,
    popularity: f64,
}

fn beta(mean: f64, concentration: f64) -> Beta<f64> {
    Beta::new(mean * concentration, (1.0 - mean) * concentration).expect("beta parameters are positive")
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn ad_specs(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<AdSpec> {
    let popularity = LogNormal::new(0.0, config.popularity_sigma).expect("sigma validated");
    let (plo, phi) = config.price_range;
    (0..config.num_ads)
        .map(|i| {
            let ctr_mean = uniform(rng, config.ctr_shape.mean);
            let cvr_mean = uniform(rng, config.cvr_shape.mean);
            let item_price = Money::from_minor(rng.random_range(plo.minor()..=phi.minor()));
            let level = match &config.bid_policy {
                BidLevel::Uniform { lo, hi } => uniform(rng, (lo.to_f64(), hi.to_f64())),
                BidLevel::TargetRoi { lo, hi } => cvr_mean * item_price.to_f64() / uniform(rng, (*lo, *hi)),
            };
            let keyword_bids = (0..config.keywords_per_ad)
                .map(|_| Money::from_f64(level * uniform(rng, config.keyword_noise)))
                .collect();
            AdSpec {
                id: AdId(config.first_ad_id + u64::from(i)),
                ctr_mean,
                cvr_mean,
                item_price,
                keyword_bids,
                popularity: popularity.sample(rng),
            }
        })
        .collect()
}

/// Generates an auction log that is a pure function of `config`.
pub fn generate(config: &SynthConfig) -> Result<AuctionLog> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ads = ad_specs(config, &mut rng);
    let weights: Vec<f64> = ads.iter().map(|a| a.popularity).collect();
    let ctr_dists: Vec<Beta<f64>> = ads
        .iter()
        .map(|a| beta(a.ctr_mean, config.ctr_shape.concentration))
        .collect();
    let n_ads = ads.len();
    let (clo, chi) = config.candidates_per_auction;
    let sigma = config.query_intent_sigma;

    let mut records = Vec::with_capacity((config.num_days * config.auctions_per_day) as usize);
    for day in 0..config.num_days {
        for i in 0..config.auctions_per_day {
            let count = (rng.random_range(clo..=chi) as usize).min(n_ads);
            let mut chosen: Vec<usize> = sample_weighted(&mut rng, n_ads, |k| weights[k], count)
                .expect("weights are positive")
                .into_vec();
            // The first num_ads auctions of every day each include one AD in
            // turn, so every AD appears on every day.
            let forced = i as usize;
            if forced < n_ads && !chosen.contains(&forced) {
                let last = chosen.len() - 1;
                chosen[last] = forced;
            }
            let intent = if sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                (sigma * z - 0.5 * sigma * sigma).exp()
            } else {
                1.0
            };
            let candidates = chosen
                .into_iter()
                .map(|k| {
                    let ad = &ads[k];
                    let ctr = ctr_dists[k].sample(&mut rng);
                    let cvr_mean = (ad.cvr_mean * intent).clamp(1e-4, 0.95);
                    let cvr = beta(cvr_mean, config.cvr_shape.concentration).sample(&mut rng);
                    let keyword = rng.random_range(0..ad.keyword_bids.len());
                    AuctionCandidate {
                        ad_id: ad.id,
                        keyword_bid: ad.keyword_bids[keyword],
                        ctr,
                        cvr,
                        item_price: ad.item_price,
                    }
                })
                .collect();
            records.push(AuctionRecord {
                auction_id: u64::from(day) * u64::from(config.auctions_per_day) + u64::from(i),
                day,
                slots: config.slots,
                reserve_price: config.reserve_price,
                candidates,
            });
        }
    }
    AuctionLog::new(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityRow {
    pub ad_id: AdId,
    pub volume_mean: f64,
    pub volume_std: f64,
    pub ctr_cdf_gap: f64,
    pub cvr_cdf_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub rows: Vec<StationarityRow>,
}

/// Sup-norm distance between the empirical CDFs of two samples.
pub fn ecdf_gap(a: &[f64], b: &[f64]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut gap: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        gap = gap.max((i as f64 / na - j as f64 / nb).abs());
    }
    gap
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Daily auction volume statistics and the largest day-over-day CDF gap of
/// ctr and cvr for each requested AD.
pub fn stationarity_report(log: &AuctionLog, ad_ids: &[AdId]) -> Result<StationarityReport> {
    let days = log.days();
    if days.len() < 2 {
        return Err(Error::SingleDayLog);
    }
    let day_slot: HashMap<u32, usize> = days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut rows = Vec::with_capacity(ad_ids.len());
    for &ad in ad_ids {
        let mut ctr_by_day = vec![Vec::new(); days.len()];
        let mut cvr_by_day = vec![Vec::new(); days.len()];
        for &pos in log.positions(ad)? {
            let record = &log.records()[pos];
            let slot = day_slot[&record.day];
            let c = record.candidate(ad).expect("index is consistent");
            ctr_by_day[slot].push(c.ctr);
            cvr_by_day[slot].push(c.cvr);
        }
        let volumes: Vec<f64> = ctr_by_day.iter().map(|v| v.len() as f64).collect();
        let (volume_mean, volume_std) = mean_std(&volumes);
        let max_gap = |by_day: &[Vec<f64>]| {
            by_day
                .windows(2)
                .map(|w| ecdf_gap(&w[0], &w[1]))
                .fold(0.0, f64::max)
        };
        rows.push(StationarityRow {
            ad_id: ad,
            volume_mean,
            volume_std,
            ctr_cdf_gap: max_gap(&ctr_by_day),
            cvr_cdf_gap: max_gap(&cvr_by_day),
        });
    }
    Ok(StationarityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::log_to_bytes;

    fn small() -> SynthConfig {
        SynthConfig {
            num_ads: 10,
            num_days: 2,
            auctions_per_day: 200,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = log_to_bytes(&generate(&small()).unwrap()).unwrap();
        let b = log_to_bytes(&generate(&small()).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = SynthConfig { seed: 2, ..small() };
        assert_ne!(a, log_to_bytes(&generate(&other).unwrap()).unwrap());
    }

    #[test]
    fn every_ad_every_day() {
        let log = generate(&small()).unwrap();
        for ad in log.ad_ids() {
            let days: std::collections::BTreeSet<u32> = log
                .positions(ad)
                .unwrap()
                .iter()
                .map(|&p| log.records()[p].day)
                .collect();
            assert_eq!(days.len(), 2, "AD {ad}");
        }
        assert_eq!(log.ad_ids().len(), 10);
    }

    #[test]
    fn degenerate_single_candidate_config() {
        let config = SynthConfig {
            slots: 1,
            candidates_per_auction: (1, 1),
            ..small()
        };
        let log = generate(&config).unwrap();
        assert!(log.records().iter().all(|r| r.candidates.len() == 1 && r.slots == 1));
    }

    #[test]
    fn invalid_config_names_field() {
        let cases: Vec<(SynthConfig, &str)> = vec![
            (SynthConfig { num_ads: 0, ..small() }, "num_ads"),
            (SynthConfig { auctions_per_day: 5, ..small() }, "auctions_per_day"),
            (
                SynthConfig {
                    cvr_shape: BetaShape {
                        mean: (0.0, 0.1),
                        concentration: 1.0,
                    },
                    ..small()
                },
                "cvr_shape",
            ),
            (
                SynthConfig {
                    price_range: (Money::ZERO, Money::from_minor(5)),
                    ..small()
                },
                "price_range",
            ),
        ];
        for (config, expected) in cases {
            match generate(&config) {
                Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, expected),
                other => panic!("expected InvalidConfig({expected}), got {other:?}"),
            }
        }
    }

    #[test]
    fn config_json_uses_defaults_for_missing_fields() {
        let config: SynthConfig = serde_json::from_str(r#"{"seed": 9, "num_ads": 5}"#).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.num_ads, 5);
        assert_eq!(config.slots, SynthConfig::default().slots);
        assert!(serde_json::from_str::<SynthConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn ecdf_gap_extremes() {
        assert_eq!(ecdf_gap(&[0.1, 0.1], &[0.9]), 1.0);
        assert_eq!(ecdf_gap(&[0.3, 0.1, 0.2], &[0.1, 0.2, 0.3]), 0.0);
        assert!((ecdf_gap(&[1.0, 2.0], &[1.0, 3.0]) - 0.5).abs() < 1e-12);
        assert_eq!(ecdf_gap(&[], &[]), 0.0);
    }

    fn record(id: u64, day: u32, ctr: f64) -> AuctionRecord {
        AuctionRecord {
            auction_id: id,
            day,
            slots: 1,
            reserve_price: DEFAULT_RESERVE,
            candidates: vec![AuctionCandidate {
                ad_id: AdId(1),
                keyword_bid: Money::from_minor(10_000),
                ctr,
                cvr: 0.1,
                item_price: Money::from_minor(100_000),
            }],
        }
    }

    #[test]
    fn copied_days_are_perfectly_stationary() {
        let log = AuctionLog::new(vec![
            record(0, 0, 0.1),
            record(1, 0, 0.3),
            record(2, 1, 0.1),
            record(3, 1, 0.3),
        ])
        .unwrap();
        let report = stationarity_report(&log, &[AdId(1)]).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.ctr_cdf_gap, 0.0);
        assert_eq!(row.cvr_cdf_gap, 0.0);
        assert_eq!(row.volume_std, 0.0);
        assert_eq!(row.volume_mean, 2.0);
    }

    #[test]
    fn disjoint_ctr_supports_have_unit_gap() {
        let log = AuctionLog::new(vec![record(0, 0, 0.1), record(1, 1, 0.9)]).unwrap();
        let report = stationarity_report(&log, &[AdId(1)]).unwrap();
        assert_eq!(report.rows[0].ctr_cdf_gap, 1.0);
    }

    #[test]
    fn report_errors() {
        let single = AuctionLog::new(vec![record(0, 0, 0.1)]).unwrap();
        assert!(matches!(stationarity_report(&single, &[AdId(1)]), Err(Error::SingleDayLog)));
        let two = AuctionLog::new(vec![record(0, 0, 0.1), record(1, 1, 0.1)]).unwrap();
        assert!(matches!(stationarity_report(&two, &[AdId(4)]), Err(Error::UnknownAd(_))));
    }
}
