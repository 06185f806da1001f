//! Shared domain types: auction log records, the AD inverted index, campaigns
//! and replay aggregates.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

/// Reserve price used when a record does not carry one.
pub const DEFAULT_RESERVE: Money = Money::from_minor(100);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdId(pub u64);

impl fmt::Display for AdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for AdId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.trim().parse().map(AdId)
    }
}

/// One AD competing in one auction, with the features replay needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionCandidate {
    pub ad_id: AdId,
    /// Fixed bid of the keyword that matched the query.
    pub keyword_bid: Money,
    pub ctr: f64,
    pub cvr: f64,
    pub item_price: Money,
}

impl AuctionCandidate {
    /// Expected GMV of showing this candidate once: ctr * cvr * item price.
    pub fn expected_gmv(&self) -> f64 {
        self.ctr * self.cvr * self.item_price.to_f64()
    }
}

fn default_reserve() -> Money {
    DEFAULT_RESERVE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub auction_id: u64,
    pub day: u32,
    pub slots: u32,
    #[serde(default = "default_reserve")]
    pub reserve_price: Money,
    pub candidates: Vec<AuctionCandidate>,
}

impl AuctionRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidRecord {
            auction_id: self.auction_id,
            reason,
        };
        if self.slots == 0 {
            return Err(bad("slots must be at least 1".into()));
        }
        if self.reserve_price.is_negative() {
            return Err(bad("negative reserve price".into()));
        }
        if self.candidates.is_empty() {
            return Err(bad("no candidates".into()));
        }
        let mut seen = HashSet::with_capacity(self.candidates.len());
        for c in &self.candidates {
            if !seen.insert(c.ad_id) {
                return Err(bad(format!("AD {} appears twice", c.ad_id)));
            }
            if !(0.0..=1.0).contains(&c.ctr) {
                return Err(bad(format!("AD {} ctr {} outside [0,1]", c.ad_id, c.ctr)));
            }
            if !(0.0..=1.0).contains(&c.cvr) {
                return Err(bad(format!("AD {} cvr {} outside [0,1]", c.ad_id, c.cvr)));
            }
            if c.item_price <= Money::ZERO {
                return Err(bad(format!("AD {} item price must be positive", c.ad_id)));
            }
            if c.keyword_bid.is_negative() {
                return Err(bad(format!("AD {} negative keyword bid", c.ad_id)));
            }
        }
        Ok(())
    }

    pub fn candidate(&self, ad: AdId) -> Option<&AuctionCandidate> {
        self.candidates.iter().find(|c| c.ad_id == ad)
    }
}

/// Historical auction log plus an inverted index from AD to record positions.
#[derive(Clone, Debug)]
pub struct AuctionLog {
    records: Vec<AuctionRecord>,
    ad_index: HashMap<AdId, Vec<usize>>,
    days: Vec<u32>,
}

/// Validates `records` and builds the AD inverted index. Records keep their
/// input order.
pub fn build_ad_index(records: Vec<AuctionRecord>) -> Result<AuctionLog> {
    AuctionLog::new(records)
}

impl AuctionLog {
    pub fn new(records: Vec<AuctionRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyLog);
        }
        let mut ad_index: HashMap<AdId, Vec<usize>> = HashMap::new();
        let mut days = BTreeSet::new();
        for (pos, record) in records.iter().enumerate() {
            record.validate()?;
            days.insert(record.day);
            for c in &record.candidates {
                ad_index.entry(c.ad_id).or_default().push(pos);
            }
        }
        Ok(AuctionLog {
            records,
            ad_index,
            days: days.into_iter().collect(),
        })
    }

    pub fn records(&self) -> &[AuctionRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AuctionRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct days present in the log, ascending.
    pub fn days(&self) -> &[u32] {
        &self.days
    }

    /// All AD ids, ascending.
    pub fn ad_ids(&self) -> Vec<AdId> {
        let mut ids: Vec<AdId> = self.ad_index.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn contains_ad(&self, ad: AdId) -> bool {
        self.ad_index.contains_key(&ad)
    }

    /// Positions of the records in which `ad` is a candidate, ascending.
    pub fn positions(&self, ad: AdId) -> Result<&[usize]> {
        self.ad_index
            .get(&ad)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownAd(ad))
    }

    /// Days of the log selected by `filter`.
    pub fn selected_days(&self, filter: DayFilter) -> Vec<u32> {
        self.days
            .iter()
            .copied()
            .filter(|d| filter.contains(*d))
            .collect()
    }

    /// Iterates `(position, record, candidate)` for every selected auction the AD entered.
    pub fn ad_entries(
        &self,
        ad: AdId,
        filter: DayFilter,
    ) -> Result<impl Iterator<Item = (usize, &AuctionRecord, &AuctionCandidate)> + '_> {
        let positions = self.positions(ad)?;
        Ok(positions.iter().filter_map(move |&pos| {
            let record = &self.records[pos];
            if !filter.contains(record.day) {
                return None;
            }
            record.candidate(ad).map(|c| (pos, record, c))
        }))
    }

    /// Returns a new log restricted to the records matching `keep`.
    pub fn filter_records(&self, mut keep: impl FnMut(&AuctionRecord) -> bool) -> Result<Self> {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        AuctionLog::new(records)
    }
}

/// Inclusive day range selector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DayFilter {
    #[default]
    All,
    Range { first: u32, last: u32 },
}

impl DayFilter {
    pub fn contains(self, day: u32) -> bool {
        match self {
            DayFilter::All => true,
            DayFilter::Range { first, last } => (first..=last).contains(&day),
        }
    }
}

impl fmt::Display for DayFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DayFilter::All => f.write_str("all"),
            DayFilter::Range { first, last } => write!(f, "{first}..{last}"),
        }
    }
}

impl FromStr for DayFilter {
    type Err = String;

    /// Accepts `all`, `d` or `a..b` (both ends inclusive).
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(DayFilter::All);
        }
        let parse = |p: &str| {
            p.trim()
                .parse::<u32>()
                .map_err(|e| format!("bad day {p:?}: {e}"))
        };
        let (first, last) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let d = parse(s)?;
                (d, d)
            }
        };
        if first > last {
            return Err(format!("empty day range {s}"));
        }
        Ok(DayFilter::Range { first, last })
    }
}

/// An advertiser campaign: the ADs it holds and their tolerable bid ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: String,
    pub ad_ids: Vec<AdId>,
    pub bid_lower: Vec<Money>,
    pub bid_upper: Vec<Money>,
}

impl Campaign {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidCampaign {
            campaign_id: self.campaign_id.clone(),
            reason,
        };
        if self.ad_ids.is_empty() {
            return Err(bad("no ADs".into()));
        }
        if self.bid_lower.len() != self.ad_ids.len() || self.bid_upper.len() != self.ad_ids.len() {
            return Err(bad("bid bound vectors must match ad_ids in length".into()));
        }
        let mut seen = HashSet::new();
        for (i, ad) in self.ad_ids.iter().enumerate() {
            if !seen.insert(*ad) {
                return Err(bad(format!("AD {ad} listed twice")));
            }
            let (l, u) = (self.bid_lower[i], self.bid_upper[i]);
            if l.is_negative() || l > u {
                return Err(bad(format!("AD {ad} needs 0 <= lower <= upper, got [{l}, {u}]")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ad_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ad_ids.is_empty()
    }
}

/// Daily performance accumulated by replay for one AD (or a set of ADs).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    /// Expected spend, sum of ctr * click price.
    pub cost: f64,
    /// Expected GMV, sum of ctr * cvr * item price.
    pub gmv: f64,
    /// Won slots.
    pub impressions: f64,
    /// Expected clicks, sum of ctr.
    pub clicks: f64,
    /// Expected conversions, sum of ctr * cvr.
    pub conversions: f64,
}

impl ReplaySummary {
    pub fn scaled(self, factor: f64) -> Self {
        ReplaySummary {
            cost: self.cost * factor,
            gmv: self.gmv * factor,
            impressions: self.impressions * factor,
            clicks: self.clicks * factor,
            conversions: self.conversions * factor,
        }
    }

    pub fn roi(&self) -> Option<f64> {
        (self.cost > 0.0).then(|| self.gmv / self.cost)
    }

    pub fn cvr(&self) -> Option<f64> {
        (self.clicks > 0.0).then(|| self.conversions / self.clicks)
    }

    pub fn ppc(&self) -> Option<f64> {
        (self.clicks > 0.0).then(|| self.cost / self.clicks)
    }
}

impl AddAssign for ReplaySummary {
    fn add_assign(&mut self, rhs: Self) {
        self.cost += rhs.cost;
        self.gmv += rhs.gmv;
        self.impressions += rhs.impressions;
        self.clicks += rhs.clicks;
        self.conversions += rhs.conversions;
    }
}

impl Add for ReplaySummary {
    type Output = ReplaySummary;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(ad: u64) -> AuctionCandidate {
        AuctionCandidate {
            ad_id: AdId(ad),
            keyword_bid: Money::from_minor(10_000),
            ctr: 0.1,
            cvr: 0.1,
            item_price: Money::from_minor(100_000),
        }
    }

    fn record(id: u64, ads: &[u64]) -> AuctionRecord {
        AuctionRecord {
            auction_id: id,
            day: 0,
            slots: 1,
            reserve_price: DEFAULT_RESERVE,
            candidates: ads.iter().map(|&a| cand(a)).collect(),
        }
    }

    #[test]
    fn index_single_record() {
        let log = build_ad_index(vec![record(0, &[1, 2])]).unwrap();
        assert_eq!(log.positions(AdId(1)).unwrap(), &[0]);
        assert_eq!(log.positions(AdId(2)).unwrap(), &[0]);
    }

    #[test]
    fn index_two_records() {
        let log = build_ad_index(vec![record(0, &[1]), record(1, &[1, 2])]).unwrap();
        assert_eq!(log.positions(AdId(1)).unwrap(), &[0, 1]);
        assert_eq!(log.positions(AdId(2)).unwrap(), &[1]);
        assert!(matches!(log.positions(AdId(3)), Err(Error::UnknownAd(AdId(3)))));
    }

    #[test]
    fn empty_log_rejected() {
        assert!(matches!(build_ad_index(vec![]), Err(Error::EmptyLog)));
    }

    #[test]
    fn duplicate_candidate_rejected() {
        let err = build_ad_index(vec![record(7, &[1, 1])]).unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { auction_id: 7, .. }));
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let mut r = record(0, &[1]);
        r.candidates[0].ctr = 1.5;
        assert!(build_ad_index(vec![r]).is_err());
        let mut r = record(0, &[1]);
        r.candidates[0].item_price = Money::ZERO;
        assert!(build_ad_index(vec![r]).is_err());
        let mut r = record(0, &[1]);
        r.slots = 0;
        assert!(build_ad_index(vec![r]).is_err());
    }

    #[test]
    fn day_filter_parsing() {
        assert_eq!("all".parse::<DayFilter>().unwrap(), DayFilter::All);
        assert_eq!(
            "2..4".parse::<DayFilter>().unwrap(),
            DayFilter::Range { first: 2, last: 4 }
        );
        assert_eq!(
            "3".parse::<DayFilter>().unwrap(),
            DayFilter::Range { first: 3, last: 3 }
        );
        assert!("5..1".parse::<DayFilter>().is_err());
    }

    #[test]
    fn campaign_validation() {
        let ok = Campaign {
            campaign_id: "c".into(),
            ad_ids: vec![AdId(1), AdId(2)],
            bid_lower: vec![Money::from_minor(1), Money::from_minor(2)],
            bid_upper: vec![Money::from_minor(1), Money::from_minor(5)],
        };
        ok.validate().unwrap();
        let mut bad = ok.clone();
        bad.bid_upper[1] = Money::from_minor(1);
        assert!(bad.validate().is_err());
        let mut dup = ok;
        dup.ad_ids[1] = AdId(1);
        assert!(dup.validate().is_err());
    }
}
