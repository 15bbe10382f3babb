//! `readings.log`: every admitted canonical record, one wire form per line.

use std::io;
use std::path::PathBuf;
use std::sync::{PoisonError, RwLock};

use semfarm_core::{CanonicalRecord, TimestampMs};

use crate::log::{LineLog, LogError, Recovered};

pub const READINGS_LOG: &str = "readings.log";

#[derive(Debug)]
pub struct ReadingStore {
    log: LineLog,
    records: RwLock<Vec<CanonicalRecord>>,
}

impl ReadingStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Recovered), LogError> {
        let (log, recovered) = LineLog::open(path, |line| {
            CanonicalRecord::from_wire(line)
                .map(drop)
                .map_err(|e| e.to_string())
        })?;
        let records = recovered
            .lines
            .iter()
            .map(|l| CanonicalRecord::from_wire(l).expect("checked on open"))
            .collect();
        Ok((
            Self {
                log,
                records: RwLock::new(records),
            },
            recovered,
        ))
    }

    /// Persists, then exposes, one record.
    pub fn append(&self, record: &CanonicalRecord) -> io::Result<()> {
        self.log.append_with(&record.to_wire(), || {
            self.records
                .write()
                .unwrap_or_else(PoisonError::into_inner)
                .push(record.clone())
        })
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records in log order.
    pub fn all(&self) -> Vec<CanonicalRecord> {
        self.read().clone()
    }

    /// Records with timestamp strictly after `since`, optionally for one
    /// quantity, ascending by timestamp (log order among equal timestamps).
    pub fn query(
        &self,
        since: Option<TimestampMs>,
        quantity: Option<&str>,
    ) -> Vec<CanonicalRecord> {
        let mut out: Vec<CanonicalRecord> = self
            .read()
            .iter()
            .filter(|r| since.is_none_or(|s| r.timestamp() > s))
            .filter(|r| quantity.is_none_or(|q| r.quantity() == q))
            .cloned()
            .collect();
        out.sort_by_key(|r| r.timestamp());
        out
    }

    /// Latest timestamp among records accepted by `pred`.
    pub fn latest_where(&self, pred: impl Fn(&CanonicalRecord) -> bool) -> Option<TimestampMs> {
        self.read()
            .iter()
            .filter(|r| pred(r))
            .map(|r| r.timestamp())
            .max()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Vec<CanonicalRecord>> {
        self.records.read().unwrap_or_else(PoisonError::into_inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, quantity: &str, unit: &str, value: f64, ts: u64) -> CanonicalRecord {
        CanonicalRecord::from_wire(&format!(
            r#"{{"sensor_id":"{id}","quantity":"{quantity}","value":{value},"unit":"{unit}","timestamp":{ts},"lat":0,"lon":0,"description":"d","keywords":[],"confidence":1}}"#
        ))
        .unwrap()
    }

    #[test]
    fn query_filters_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = ReadingStore::open(dir.path().join(READINGS_LOG)).unwrap();
        store
            .append(&record("SOIL7AGR", "soil_moisture", "%", 20.0, 3000))
            .unwrap();
        store
            .append(&record("TEMP1AGR", "temperature", "Celsius", 30.0, 1000))
            .unwrap();
        store
            .append(&record("SOIL7AGR", "soil_moisture", "%", 21.0, 2000))
            .unwrap();
        let ts: Vec<u64> = store
            .query(None, None)
            .iter()
            .map(|r| r.timestamp())
            .collect();
        assert_eq!(ts, vec![1000, 2000, 3000]);
        assert_eq!(store.query(Some(2000), None).len(), 1);
        assert_eq!(store.query(Some(u64::MAX), None).len(), 0);
        assert_eq!(store.query(None, Some("soil_moisture")).len(), 2);
        assert_eq!(store.query(None, Some("ph")).len(), 0);
        assert_eq!(
            store.latest_where(|r| r.quantity() == "temperature"),
            Some(1000)
        );
    }

    #[test]
    fn reopen_restores_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(READINGS_LOG);
        let r = record("PH1AGR", "ph", "pH", 5.9, 5000);
        {
            let (store, _) = ReadingStore::open(&path).unwrap();
            store.append(&r).unwrap();
        }
        let (store, recovered) = ReadingStore::open(&path).unwrap();
        assert_eq!(store.all(), vec![r.clone()]);
        assert_eq!(recovered.lines, vec![r.to_wire()]);
    }
}
