use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, PoisonError, RwLock};
use std::time::{Duration, Instant};

use semfarm_core::CanonicalRecord;

use crate::topic::{Topic, TopicError};

pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug)]
struct Queue {
    items: Mutex<VecDeque<CanonicalRecord>>,
    ready: Condvar,
    capacity: usize,
    dropped: AtomicU64,
    /// Set by the handle on drop or by the broker on close.
    closed: AtomicBool,
}

impl Queue {
    fn new(capacity: usize) -> Self {
        Self {
            items: Mutex::new(VecDeque::with_capacity(capacity.min(DEFAULT_CAPACITY))),
            ready: Condvar::new(),
            capacity: capacity.max(1),
            dropped: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        }
    }

    fn push(&self, record: CanonicalRecord) {
        let mut items = self.items.lock().unwrap_or_else(PoisonError::into_inner);
        if items.len() >= self.capacity {
            items.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        items.push_back(record);
        drop(items);
        self.ready.notify_one();
    }

    fn close(&self) {
        self.closed.store(true, Ordering::Release);
        let _guard = self.items.lock().unwrap_or_else(PoisonError::into_inner);
        self.ready.notify_all();
    }

    fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }
}

#[derive(Debug)]
enum Filter {
    Topic(Topic),
    All,
}

impl Filter {
    fn matches(&self, record: &CanonicalRecord) -> bool {
        match self {
            Filter::Topic(t) => t.matches(record.sensor_id()),
            Filter::All => true,
        }
    }
}

#[derive(Debug)]
struct Entry {
    filter: Filter,
    queue: Arc<Queue>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BrokerStats {
    pub published: u64,
    pub delivered: u64,
    pub subscribers: usize,
}

/// In-process topic broker with at-most-once delivery.
///
/// Each subscriber owns a bounded queue. Publishing never waits for a
/// subscriber: when a queue is full its oldest record is discarded and the
/// subscriber's drop counter goes up.
#[derive(Debug, Default)]
pub struct Broker {
    entries: RwLock<Vec<Entry>>,
    published: AtomicU64,
    delivered: AtomicU64,
    closed: AtomicBool,
}

impl Broker {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Subscribes to a pattern such as `farm/AGR/SOIL/*`.
    pub fn subscribe(&self, pattern: &str) -> Result<Subscription, TopicError> {
        Ok(self.subscribe_topic(Topic::parse(pattern)?, DEFAULT_CAPACITY))
    }

    pub fn subscribe_topic(&self, topic: Topic, capacity: usize) -> Subscription {
        self.register(Filter::Topic(topic), capacity)
    }

    /// Every record regardless of topic; used by in-process consumers such
    /// as the reasoning worker.
    pub fn subscribe_all(&self, capacity: usize) -> Subscription {
        self.register(Filter::All, capacity)
    }

    fn register(&self, filter: Filter, capacity: usize) -> Subscription {
        let queue = Arc::new(Queue::new(capacity));
        if self.closed.load(Ordering::Acquire) {
            queue.close();
        }
        let label = match &filter {
            Filter::Topic(t) => t.to_string(),
            Filter::All => "#".to_string(),
        };
        self.write().push(Entry {
            filter,
            queue: queue.clone(),
        });
        Subscription { queue, label }
    }

    /// Hands one copy of `record` to every matching live subscriber and
    /// returns how many received it.
    pub fn publish(&self, record: &CanonicalRecord) -> usize {
        self.published.fetch_add(1, Ordering::Relaxed);
        let mut delivered = 0;
        let mut stale = false;
        {
            let entries = self.entries.read().unwrap_or_else(PoisonError::into_inner);
            for e in entries.iter() {
                if e.queue.is_closed() {
                    stale = true;
                    continue;
                }
                if e.filter.matches(record) {
                    e.queue.push(record.clone());
                    delivered += 1;
                }
            }
        }
        if stale {
            self.write().retain(|e| !e.queue.is_closed());
        }
        self.delivered
            .fetch_add(delivered as u64, Ordering::Relaxed);
        delivered
    }

    /// Wakes every subscriber; they drain what is queued, then end.
    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        for e in self.write().drain(..) {
            e.queue.close();
        }
    }

    pub fn stats(&self) -> BrokerStats {
        BrokerStats {
            published: self.published.load(Ordering::Relaxed),
            delivered: self.delivered.load(Ordering::Relaxed),
            subscribers: self
                .entries
                .read()
                .unwrap_or_else(PoisonError::into_inner)
                .iter()
                .filter(|e| !e.queue.is_closed())
                .count(),
        }
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Vec<Entry>> {
        self.entries.write().unwrap_or_else(PoisonError::into_inner)
    }
}

/// Receiving end of a subscription. Dropping it unsubscribes.
#[derive(Debug)]
pub struct Subscription {
    queue: Arc<Queue>,
    label: String,
}

impl Subscription {
    pub fn pattern(&self) -> &str {
        &self.label
    }

    /// Records discarded because this queue was full.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn try_recv(&self) -> Option<CanonicalRecord> {
        self.lock().pop_front()
    }

    /// Blocks until a record arrives; `None` once the broker is closed and
    /// the queue is drained.
    pub fn recv(&self) -> Option<CanonicalRecord> {
        let mut items = self.lock();
        loop {
            if let Some(r) = items.pop_front() {
                return Some(r);
            }
            if self.queue.is_closed() {
                return None;
            }
            items = self
                .queue
                .ready
                .wait(items)
                .unwrap_or_else(PoisonError::into_inner);
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<CanonicalRecord> {
        let deadline = Instant::now() + timeout;
        let mut items = self.lock();
        loop {
            if let Some(r) = items.pop_front() {
                return Some(r);
            }
            let now = Instant::now();
            if self.queue.is_closed() || now >= deadline {
                return None;
            }
            items = self
                .queue
                .ready
                .wait_timeout(items, deadline - now)
                .unwrap_or_else(PoisonError::into_inner)
                .0;
        }
    }

    pub fn drain(&self) -> Vec<CanonicalRecord> {
        self.lock().drain(..).collect()
    }

    pub fn is_closed(&self) -> bool {
        self.queue.is_closed()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, VecDeque<CanonicalRecord>> {
        self.queue
            .items
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.queue.close();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, ts: u64) -> CanonicalRecord {
        CanonicalRecord::from_wire(&format!(
            r#"{{"sensor_id":"{id}","quantity":"soil_moisture","value":23.45,"unit":"%","timestamp":{ts},"lat":0,"lon":0,"description":"Soil moisture content","keywords":[],"confidence":1}}"#
        ))
        .unwrap()
    }

    #[test]
    fn no_subscribers_no_deliveries() {
        let b = Broker::new();
        assert_eq!(b.publish(&record("SOIL7AGR", 1)), 0);
        assert_eq!(b.stats().published, 1);
    }

    #[test]
    fn two_wildcard_subscribers() {
        let b = Broker::new();
        let s1 = b.subscribe("farm/AGR/SOIL/*").unwrap();
        let s2 = b.subscribe("farm/AGR/SOIL/*").unwrap();
        let other = b.subscribe("farm/AGR/TEMP/*").unwrap();
        assert_eq!(b.publish(&record("SOIL7AGR", 1)), 2);
        assert_eq!(s1.try_recv().unwrap().timestamp(), 1);
        assert_eq!(s2.try_recv().unwrap().timestamp(), 1);
        assert!(other.try_recv().is_none());
    }

    #[test]
    fn no_replay_for_late_subscribers() {
        let b = Broker::new();
        b.publish(&record("SOIL7AGR", 1));
        let s = b.subscribe("farm/AGR/SOIL/7").unwrap();
        assert!(s.try_recv().is_none());
        b.publish(&record("SOIL7AGR", 2));
        assert_eq!(s.try_recv().unwrap().timestamp(), 2);
        assert!(s.try_recv().is_none());
    }

    #[test]
    fn overflow_drops_oldest() {
        let b = Broker::new();
        let s = b.subscribe_all(3);
        for ts in 1..=5 {
            b.publish(&record("SOIL7AGR", ts));
        }
        assert_eq!(s.dropped(), 2);
        let got: Vec<u64> = s.drain().iter().map(|r| r.timestamp()).collect();
        assert_eq!(got, vec![3, 4, 5]);
    }

    #[test]
    fn dropped_handles_unsubscribe() {
        let b = Broker::new();
        let s = b.subscribe("farm/AGR/SOIL/*").unwrap();
        drop(s);
        assert_eq!(b.publish(&record("SOIL7AGR", 1)), 0);
        assert_eq!(b.stats().subscribers, 0);
    }

    #[test]
    fn close_ends_blocking_receivers_after_drain() {
        let b = Broker::new();
        let s = b.subscribe_all(8);
        b.publish(&record("SOIL7AGR", 1));
        let reader = std::thread::spawn(move || {
            let mut n = 0;
            while s.recv().is_some() {
                n += 1;
            }
            n
        });
        std::thread::sleep(Duration::from_millis(20));
        b.close();
        assert_eq!(reader.join().unwrap(), 1);
        assert!(b.subscribe_all(1).recv().is_none());
    }

    #[test]
    fn malformed_pattern_is_rejected() {
        assert!(Broker::new().subscribe("farm/AGR/*/*").is_err());
    }

    #[test]
    fn recv_timeout_expires() {
        let b = Broker::new();
        let s = b.subscribe_all(1);
        assert!(s.recv_timeout(Duration::from_millis(5)).is_none());
    }
}
