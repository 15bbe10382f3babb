//! Operator decision tickets and `tickets.log`.
//!
//! Each log line is a full ticket snapshot; on replay the last snapshot per
//! `ticket_id` wins. At most one pending ticket exists per action: new
//! recommendations for that action refresh it in place.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Mutex, PoisonError};

use semfarm_core::{ActionId, Recommendation, TimestampMs};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{LineLog, LogError, Recovered};

pub const TICKETS_LOG: &str = "tickets.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TicketStatus {
    Pending,
    Approved,
    Overridden,
    Expired,
}

impl TicketStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TicketStatus::Pending => "pending",
            TicketStatus::Approved => "approved",
            TicketStatus::Overridden => "overridden",
            TicketStatus::Expired => "expired",
        }
    }
}

impl fmt::Display for TicketStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TicketStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(TicketStatus::Pending),
            "approved" => Ok(TicketStatus::Approved),
            "overridden" => Ok(TicketStatus::Overridden),
            "expired" => Ok(TicketStatus::Expired),
            other => Err(format!("unknown ticket status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTicket {
    pub ticket_id: String,
    pub recommendation: Recommendation,
    pub status: TicketStatus,
    pub created_at: TimestampMs,
    pub updated_at: TimestampMs,
    pub decided_at: Option<TimestampMs>,
    #[serde(default)]
    pub operator_note: String,
}

impl ActionTicket {
    pub fn action(&self) -> ActionId {
        self.recommendation.action_id
    }

    pub fn is_pending(&self) -> bool {
        self.status == TicketStatus::Pending
    }

    fn check(&self) -> Result<(), String> {
        if self.is_pending() == self.decided_at.is_some() {
            return Err(format!(
                "{}: decided_at must be present exactly when status is not pending",
                self.ticket_id
            ));
        }
        if !self.ticket_id.starts_with('T') {
            return Err(format!("{}: ticket ids start with T", self.ticket_id));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TicketError {
    #[error("no ticket {0}")]
    NotFound(String),
    #[error("ticket {} is already {}", .0.ticket_id, .0.status)]
    AlreadyDecided(Box<ActionTicket>),
    #[error("cannot persist ticket: {0}")]
    Io(#[from] io::Error),
}

/// Result of offering a recommendation.
#[derive(Debug, Clone, PartialEq)]
pub enum Offer {
    Opened(ActionTicket),
    Refreshed(ActionTicket),
    Unchanged,
}

#[derive(Debug, Default)]
struct State {
    tickets: BTreeMap<String, ActionTicket>,
    next_seq: u64,
}

impl State {
    fn pending_for(&self, action: ActionId) -> Option<&ActionTicket> {
        self.tickets
            .values()
            .find(|t| t.is_pending() && t.action() == action)
    }
}

#[derive(Debug)]
pub struct TicketStore {
    log: LineLog,
    ttl_ms: u64,
    state: Mutex<State>,
}

fn parse_line(line: &str) -> Result<ActionTicket, String> {
    let t: ActionTicket = serde_json::from_str(line).map_err(|e| e.to_string())?;
    t.check()?;
    Ok(t)
}

fn sequence(id: &str) -> Option<u64> {
    id.strip_prefix('T')?.parse().ok()
}

impl TicketStore {
    pub fn open(path: impl Into<PathBuf>, ttl_ms: u64) -> Result<(Self, Recovered), LogError> {
        let (log, recovered) = LineLog::open(path, |l| parse_line(l).map(drop))?;
        let mut state = State::default();
        for line in &recovered.lines {
            let t = parse_line(line).expect("checked on open");
            state.next_seq = state.next_seq.max(sequence(&t.ticket_id).unwrap_or(0));
            state.tickets.insert(t.ticket_id.clone(), t);
        }
        Ok((
            Self {
                log,
                ttl_ms,
                state: Mutex::new(state),
            },
            recovered,
        ))
    }

    pub fn ttl_ms(&self) -> u64 {
        self.ttl_ms
    }

    /// Opens a ticket for a new action, or refreshes the pending one when
    /// the recommendation changed.
    pub fn offer(&self, rec: &Recommendation, now: TimestampMs) -> io::Result<Offer> {
        let mut state = self.lock();
        if let Some(existing) = state.pending_for(rec.action_id) {
            if &existing.recommendation == rec {
                return Ok(Offer::Unchanged);
            }
            let mut t = existing.clone();
            t.recommendation = rec.clone();
            t.updated_at = now;
            self.persist(&mut state, t.clone())?;
            return Ok(Offer::Refreshed(t));
        }
        let seq = state.next_seq + 1;
        let t = ActionTicket {
            ticket_id: format!("T{seq:06}"),
            recommendation: rec.clone(),
            status: TicketStatus::Pending,
            created_at: now,
            updated_at: now,
            decided_at: None,
            operator_note: String::new(),
        };
        self.persist(&mut state, t.clone())?;
        state.next_seq = seq;
        Ok(Offer::Opened(t))
    }

    pub fn decide(
        &self,
        ticket_id: &str,
        decision: Decision,
        note: &str,
        now: TimestampMs,
    ) -> Result<ActionTicket, TicketError> {
        let mut state = self.lock();
        let Some(existing) = state.tickets.get(ticket_id) else {
            return Err(TicketError::NotFound(ticket_id.to_string()));
        };
        if !existing.is_pending() {
            return Err(TicketError::AlreadyDecided(Box::new(existing.clone())));
        }
        let mut t = existing.clone();
        t.status = match decision {
            Decision::Approve => TicketStatus::Approved,
            Decision::Override => TicketStatus::Overridden,
        };
        t.decided_at = Some(now);
        t.updated_at = now;
        t.operator_note = note.to_string();
        self.persist(&mut state, t.clone())?;
        Ok(t)
    }

    /// Expires pending tickets opened at least `ttl_ms` before `now`.
    pub fn expire_due(&self, now: TimestampMs) -> io::Result<Vec<ActionTicket>> {
        let mut state = self.lock();
        let due: Vec<ActionTicket> = state
            .tickets
            .values()
            .filter(|t| t.is_pending() && now.saturating_sub(t.created_at) >= self.ttl_ms)
            .cloned()
            .collect();
        let mut expired = Vec::with_capacity(due.len());
        for mut t in due {
            t.status = TicketStatus::Expired;
            t.decided_at = Some(now);
            t.updated_at = now;
            self.persist(&mut state, t.clone())?;
            expired.push(t);
        }
        Ok(expired)
    }

    pub fn get(&self, ticket_id: &str) -> Option<ActionTicket> {
        self.lock().tickets.get(ticket_id).cloned()
    }

    /// Tickets in id order, optionally filtered by status.
    pub fn list(&self, status: Option<TicketStatus>) -> Vec<ActionTicket> {
        self.lock()
            .tickets
            .values()
            .filter(|t| status.is_none_or(|s| t.status == s))
            .cloned()
            .collect()
    }

    pub fn count(&self, status: TicketStatus) -> usize {
        self.lock()
            .tickets
            .values()
            .filter(|t| t.status == status)
            .count()
    }

    fn persist(&self, state: &mut State, ticket: ActionTicket) -> io::Result<()> {
        let line = serde_json::to_string(&ticket).expect("ticket serializes");
        self.log.append(&line)?;
        state.tickets.insert(ticket.ticket_id.clone(), ticket);
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(PoisonError::into_inner)
    }
}

/// The state a sequence of log lines replays to: last snapshot per id, in
/// id order.
pub fn replay_lines<'a>(
    lines: impl IntoIterator<Item = &'a str>,
) -> Result<Vec<ActionTicket>, String> {
    let mut by_id = BTreeMap::new();
    for line in lines {
        let t = parse_line(line)?;
        by_id.insert(t.ticket_id.clone(), t);
    }
    Ok(by_id.into_values().collect())
}
