//! File formats: JSON Lines auction logs and atomic output writes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AuctionLog, AuctionRecord};

/// Parses one [`AuctionRecord`] per non-blank line.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<AuctionRecord>> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| Error::Parse {
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_log(path: &Path) -> Result<AuctionLog> {
    AuctionLog::new(read_records(File::open(path)?)?)
}

pub fn write_records<W: Write>(records: &[AuctionRecord], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn log_to_bytes(log: &AuctionLog) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_records(log.records(), &mut buf)?;
    Ok(buf)
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AdId, AuctionCandidate};
    use crate::money::Money;

    #[test]
    fn jsonl_round_trip_and_money_strings() {
        let record = AuctionRecord {
            auction_id: 3,
            day: 1,
            slots: 2,
            reserve_price: Money::from_minor(100),
            candidates: vec![AuctionCandidate {
                ad_id: AdId(9),
                keyword_bid: Money::from_minor(12_345),
                ctr: 0.123_456_789_012_345_67,
                cvr: 0.05,
                item_price: Money::from_minor(990_000),
            }],
        };
        let mut buf = Vec::new();
        write_records(std::slice::from_ref(&record), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"keyword_bid\":\"1.2345\""));
        assert!(text.contains("\"reserve_price\":\"0.01\""));
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, vec![record]);
    }

    #[test]
    fn reserve_defaults_when_missing() {
        let line = r#"{"auction_id":1,"day":0,"slots":1,"candidates":[{"ad_id":1,"keyword_bid":"1","ctr":0.1,"cvr":0.1,"item_price":"10"}]}"#;
        let records = read_records(line.as_bytes()).unwrap();
        assert_eq!(records[0].reserve_price, Money::from_minor(100));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "\n{not json}\n";
        match read_records(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
