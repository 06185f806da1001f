use cia::io::log_to_bytes;
use cia::synth::{ecdf_gap, generate, stationarity_report, SynthConfig};
use cia::{AdId, AuctionLog};

/// Two-sample Kolmogorov-Smirnov critical value at significance 1e-6.
fn ks_bound(n: usize, m: usize) -> f64 {
    let c = (-(1e-6f64 / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

#[test]
fn same_seed_gives_identical_bytes() {
    let config = SynthConfig {
        seed: 1,
        num_ads: 30,
        num_days: 2,
        auctions_per_day: 500,
        ..SynthConfig::default()
    };
    let a = log_to_bytes(&generate(&config).unwrap()).unwrap();
    let b = log_to_bytes(&generate(&config).unwrap()).unwrap();
    assert_eq!(a, b);
    let other = log_to_bytes(&generate(&SynthConfig { seed: 2, ..config }).unwrap()).unwrap();
    assert_ne!(a, other);
}

#[test]
fn busiest_ads_are_stationary_across_two_days() {
    let log = generate(&SynthConfig {
        seed: 5,
        num_days: 2,
        auctions_per_day: 20_000,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut ads = log.ad_ids();
    ads.sort_by_key(|&a| std::cmp::Reverse(log.positions(a).unwrap().len()));
    let busiest: Vec<AdId> = ads[..4].to_vec();
    let report = stationarity_report(&log, &busiest).unwrap();
    for row in &report.rows {
        let per_day = log.positions(row.ad_id).unwrap().len() / 2;
        let bound = ks_bound(per_day, per_day);
        assert!(row.ctr_cdf_gap < 0.05 && row.ctr_cdf_gap <= bound, "{row:?}");
        assert!(row.cvr_cdf_gap < 0.05 && row.cvr_cdf_gap <= bound, "{row:?}");
    }
}

#[test]
fn every_ad_appears_on_every_day() {
    let log = generate(&SynthConfig {
        seed: 8,
        num_ads: 25,
        num_days: 3,
        auctions_per_day: 2000,
        ..SynthConfig::default()
    })
    .unwrap();
    for ad in log.ad_ids() {
        let mut days: Vec<u32> = log.positions(ad).unwrap().iter().map(|&p| log.records()[p].day).collect();
        days.dedup();
        assert_eq!(days, vec![0, 1, 2], "{ad:?}");
    }
}

#[test]
fn copied_days_have_zero_gaps() {
    let base = generate(&SynthConfig {
        seed: 3,
        num_ads: 10,
        num_days: 1,
        auctions_per_day: 300,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut records = base.records().to_vec();
    let n = records.len() as u64;
    for r in base.records() {
        let mut copy = r.clone();
        copy.day = 1;
        copy.auction_id += n;
        records.push(copy);
    }
    let log = AuctionLog::new(records).unwrap();
    let report = stationarity_report(&log, &log.ad_ids()).unwrap();
    for row in report.rows {
        assert_eq!((row.ctr_cdf_gap, row.cvr_cdf_gap, row.volume_std), (0.0, 0.0, 0.0));
    }
}

#[test]
fn disjoint_samples_have_unit_gap() {
    assert_eq!(ecdf_gap(&[0.1, 0.1, 0.1], &[0.9, 0.9]), 1.0);
    assert_eq!(ecdf_gap(&[0.3, 0.5], &[0.5, 0.3]), 0.0);
}
