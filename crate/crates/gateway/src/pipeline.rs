//! The running gateway: replay → annotate → validate → persist → publish,
//! a reasoning worker on the broker firehose, and the ticket sweeper.

use std::collections::BTreeMap;
use std::io;
use std::net::SocketAddr;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, PoisonError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use semfarm_broker::{Broker, Subscription, TcpIngress};
use semfarm_core::annotate::annotate;
use semfarm_core::interop::synonyms::{identify_synonyms, Lexicon};
use semfarm_core::interop::{FileErrorLog, Format, Ontology, Stage, TranslationError, Translator};
use semfarm_core::model::is_canonical_keyword;
use semfarm_core::reasoning::{
    BayesNet, Case, CaseBase, FuzzyConfig, KnowledgeBase, Reasoner, RuleSet, Snapshot,
};
use semfarm_core::sim::{RunOptions, Scenario, SensorSpec};
use semfarm_core::{
    ActionId, CanonicalRecord, Confidence, ConfigError, GeoLocation, RecordFields, SensorId,
    TimestampMs,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::GatewayConfig;
use crate::log::{LineLog, LogError};
use crate::store::{ReadingStore, READINGS_LOG};
use crate::tickets::{ActionTicket, Decision, Offer, TicketError, TicketStore, TICKETS_LOG};

pub const ERRORS_LOG: &str = "errors.log";
pub const CASES_LOG: &str = "cases.log";
pub const ACTUATION_JOB: &str = "ACT";
pub const ACTUATION_QUANTITY: &str = "actuation";

const WORKER_QUEUE: usize = 1 << 16;

pub fn now_ms() -> TimestampMs {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as TimestampMs)
}

/// One JSON line on stderr for conditions the service survives.
fn report(event: &str, detail: impl std::fmt::Display) {
    eprintln!(
        "{}",
        serde_json::json!({ "event": event, "detail": detail.to_string() })
    );
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Data(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Rejected(#[from] TranslationError),
    #[error("cannot persist record: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum DecideError {
    #[error(transparent)]
    Ticket(#[from] TicketError),
}

/// The ingest path shared by replay, HTTP and TCP.
struct Ingest {
    translator: Translator,
    lexicon: Lexicon,
    readings: ReadingStore,
    broker: Arc<Broker>,
    /// Keeps log order and publish order identical.
    order: Mutex<()>,
}

impl Ingest {
    fn ingest(&self, record: &CanonicalRecord) -> Result<(), IngestError> {
        self.translator.admit(record)?;
        self.commit(record)
    }

    fn commit(&self, record: &CanonicalRecord) -> Result<(), IngestError> {
        let _order = self.order.lock().unwrap_or_else(PoisonError::into_inner);
        self.readings.append(record)?;
        self.broker.publish(record);
        Ok(())
    }

    /// Persists an admitted record for the TCP ingress, which publishes it
    /// itself.
    fn admit_framed(&self, record: &CanonicalRecord) -> bool {
        if self.translator.admit(record).is_err() {
            return false;
        }
        match self.readings.append(record) {
            Ok(()) => true,
            Err(e) => {
                report("persist_failed", e);
                false
            }
        }
    }

    /// Adds the lexicon's normalized keywords for the description.
    fn enrich(&self, record: CanonicalRecord) -> CanonicalRecord {
        let matrix = identify_synonyms(record.description(), &self.lexicon);
        let extra: Vec<String> = matrix
            .keywords()
            .filter(|k| is_canonical_keyword(k) && !record.keywords().iter().any(|x| x == k))
            .map(str::to_string)
            .collect();
        if extra.is_empty() {
            return record;
        }
        let mut fields = record.clone().into_fields();
        for k in extra {
            if !fields.keywords.contains(&k) {
                fields.keywords.push(k);
            }
        }
        CanonicalRecord::new(fields).unwrap_or(record)
    }
}

/// Summary of a sensor for the API.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorSummary {
    pub sensor_id: SensorId,
    pub job: String,
    pub number: u16,
    pub application: String,
    pub quantity: String,
    pub unit: String,
    pub description: String,
    pub lat: f64,
    pub lon: f64,
    /// Present for sensors defined by the replayed scenario.
    pub period_ms: Option<u64>,
    pub kind: Option<String>,
    pub latest_value: Option<f64>,
    pub latest_timestamp: Option<TimestampMs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayState {
    None,
    Running,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub uptime_ms: u64,
    pub replay: ReplayState,
    pub readings: usize,
    pub pending_tickets: usize,
    pub dropped: u64,
}

/// State shared by the gateway handle and its background threads.
pub struct GatewayState {
    config: GatewayConfig,
    started: Instant,
    ingest: Arc<Ingest>,
    tickets: Arc<TicketStore>,
    reasoner: Arc<Reasoner>,
    snapshot: Arc<Mutex<Snapshot>>,
    cases_log: LineLog,
    sensors: Vec<SensorSpec>,
    worker_sub: Arc<Subscription>,
    processed: Arc<AtomicU64>,
    replay: Arc<Mutex<ReplayState>>,
    stop: AtomicBool,
}

/// A running gateway. Dropping it stops every background thread.
pub struct Gateway {
    state: Arc<GatewayState>,
    threads: Mutex<Vec<JoinHandle<()>>>,
    ingress: Option<TcpIngress>,
}

impl std::ops::Deref for Gateway {
    type Target = GatewayState;

    fn deref(&self) -> &GatewayState {
        &self.state
    }
}

fn load_knowledge(config: &GatewayConfig) -> Result<KnowledgeBase, ConfigError> {
    let ontology = Arc::new(Ontology::load(&config.ontology_path)?);
    let cases = match &config.cases_path {
        Some(p) => CaseBase::load(p, &ontology)?,
        None => CaseBase::new(Vec::new()),
    };
    Ok(KnowledgeBase {
        rules: RuleSet::load(&config.rules_path, &ontology)?,
        fuzzy: FuzzyConfig::load(&config.fuzzy_path, &ontology)?,
        bayes: BayesNet::load(&config.bayes_path)?,
        cases: Arc::new(cases),
        ontology,
    })
}

impl Gateway {
    /// Loads every data file, recovers the logs in `data_dir` and starts
    /// the background threads. Fails before starting anything if a file
    /// is missing or malformed.
    pub fn start(config: GatewayConfig) -> Result<Self, StartError> {
        let kb = load_knowledge(&config)?;
        let lexicon = Lexicon::load(&config.lexicon_path)?;
        let scenario = config
            .scenario_path
            .as_deref()
            .map(Scenario::load)
            .transpose()?;

        let dir = &config.data_dir;
        std::fs::create_dir_all(dir).map_err(|source| StartError::Io {
            path: dir.clone(),
            source,
        })?;
        let errors = FileErrorLog::open(dir.join(ERRORS_LOG)).map_err(|source| StartError::Io {
            path: dir.join(ERRORS_LOG),
            source,
        })?;
        let (readings, _) = ReadingStore::open(dir.join(READINGS_LOG))?;
        let (tickets, _) = TicketStore::open(dir.join(TICKETS_LOG), config.ticket_ttl_ms)?;
        let ontology = kb.ontology.clone();
        let (cases_log, recovered_cases) = LineLog::open(dir.join(CASES_LOG), |l| {
            let case: Case = serde_json::from_str(l).map_err(|e| e.to_string())?;
            case.check(&ontology).map_err(|e| e.to_string())
        })?;
        for line in &recovered_cases.lines {
            let case: Case = serde_json::from_str(line).expect("checked on open");
            kb.cases.append(case);
        }

        let snapshot = Snapshot::from_records(
            readings
                .all()
                .iter()
                .filter(|r| r.sensor_id().job() != ACTUATION_JOB),
        );
        let resume = scenario
            .as_ref()
            .and_then(|s| readings.latest_where(|r| s.sensor(r.sensor_id()).is_some()));

        let broker = Broker::new();
        let worker_sub = Arc::new(broker.subscribe_all(WORKER_QUEUE));
        let ingest = Arc::new(Ingest {
            translator: Translator::new(kb.ontology.clone(), Arc::new(errors)),
            lexicon,
            readings,
            broker,
            order: Mutex::new(()),
        });

        let state = Arc::new(GatewayState {
            sensors: scenario
                .as_ref()
                .map(|s| s.sensors.clone())
                .unwrap_or_default(),
            started: Instant::now(),
            ingest,
            tickets: Arc::new(tickets),
            reasoner: Arc::new(Reasoner::new(kb)),
            snapshot: Arc::new(Mutex::new(snapshot)),
            cases_log,
            worker_sub,
            processed: Arc::new(AtomicU64::new(0)),
            replay: Arc::new(Mutex::new(if scenario.is_some() {
                ReplayState::Running
            } else {
                ReplayState::None
            })),
            stop: AtomicBool::new(false),
            config,
        });
        let ingress = match state.config.tcp_port {
            Some(port) => {
                let addr = SocketAddr::new(state.config.bind_address, port);
                let ingest = state.ingest.clone();
                Some(
                    TcpIngress::bind(
                        addr,
                        state.ingest.broker.clone(),
                        Arc::new(move |r: &CanonicalRecord| ingest.admit_framed(r)),
                    )
                    .map_err(|source| StartError::Io {
                        path: PathBuf::from(addr.to_string()),
                        source,
                    })?,
                )
            }
            None => None,
        };
        let gateway = Gateway {
            state,
            threads: Mutex::new(Vec::new()),
            ingress,
        };

        gateway.spawn("reasoning", |s| s.reasoning_worker())?;
        gateway.spawn("ticket-sweeper", |s| s.sweeper())?;
        if let Some(scenario) = scenario {
            gateway.spawn("replay", move |s| s.replay(scenario, resume))?;
        }
        Ok(gateway)
    }

    fn spawn(
        &self,
        name: &str,
        body: impl FnOnce(&GatewayState) + Send + 'static,
    ) -> Result<(), StartError> {
        let state = self.state.clone();
        let handle = thread::Builder::new()
            .name(name.into())
            .spawn(move || body(&state))
            .map_err(|source| StartError::Io {
                path: PathBuf::from(format!("{name} thread")),
                source,
            })?;
        self.threads
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .push(handle);
        Ok(())
    }

    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.ingress.as_ref().map(TcpIngress::local_addr)
    }

    /// Stops replay, ingress and workers, and waits for them.
    pub fn shutdown(&mut self) {
        self.state.stop.store(true, Ordering::Release);
        if let Some(ingress) = self.ingress.take() {
            ingress.shutdown();
        }
        self.state.ingest.broker.close();
        let handles: Vec<JoinHandle<()>> = self
            .threads
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .drain(..)
            .collect();
        for h in handles {
            let _ = h.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl GatewayState {
    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn readings(&self) -> &ReadingStore {
        &self.ingest.readings
    }

    pub fn tickets(&self) -> &TicketStore {
        &self.tickets
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.ingest.broker
    }

    pub fn ontology(&self) -> &Ontology {
        self.ingest.translator.ontology()
    }

    /// Cases the case-based reasoner currently retrieves from.
    pub fn case_count(&self) -> usize {
        self.reasoner.knowledge().cases.len()
    }

    pub fn replay_state(&self) -> ReplayState {
        *self.replay.lock().unwrap_or_else(PoisonError::into_inner)
    }

    /// Validates, persists and publishes one canonical record.
    pub fn ingest(&self, record: &CanonicalRecord) -> Result<(), IngestError> {
        self.ingest.ingest(record)
    }

    /// Decodes a payload in any supported format, then ingests it.
    pub fn ingest_payload(
        &self,
        payload: &[u8],
        format: Format,
    ) -> Result<CanonicalRecord, IngestError> {
        let record = self.ingest.translator.translate(payload, format)?;
        self.ingest.commit(&record)?;
        Ok(record)
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok",
            uptime_ms: self.started.elapsed().as_millis() as u64,
            replay: self.replay_state(),
            readings: self.ingest.readings.len(),
            pending_tickets: self.tickets.count(crate::tickets::TicketStatus::Pending),
            dropped: self.worker_sub.dropped(),
        }
    }

    /// Scenario sensors first, then any other sensor seen in the readings.
    pub fn sensors(&self) -> Vec<SensorSummary> {
        let ontology = self.ontology();
        let mut latest: BTreeMap<SensorId, CanonicalRecord> = BTreeMap::new();
        for r in self.ingest.readings.all() {
            match latest.get(r.sensor_id()) {
                Some(prev) if prev.timestamp() > r.timestamp() => {}
                _ => {
                    latest.insert(r.sensor_id().clone(), r);
                }
            }
        }
        let summary = |id: &SensorId, spec: Option<&SensorSpec>, rec: Option<&CanonicalRecord>| {
            let def = ontology.quantity_for_job(id.job());
            let location = spec
                .map(|s| s.location)
                .or_else(|| rec.map(CanonicalRecord::location));
            SensorSummary {
                sensor_id: id.clone(),
                job: id.job().to_string(),
                number: id.number(),
                application: id.application().to_string(),
                quantity: def.map_or_else(
                    || rec.map_or(String::new(), |r| r.quantity().to_string()),
                    |(q, _)| q.to_string(),
                ),
                unit: def.map_or(String::new(), |(_, d)| d.unit.clone()),
                description: def.map_or(String::new(), |(_, d)| d.meaning.clone()),
                lat: location.map_or(0.0, |l| l.latitude()),
                lon: location.map_or(0.0, |l| l.longitude()),
                period_ms: spec.map(|s| s.period_ms),
                kind: spec.map(|s| {
                    serde_json::to_value(s.kind)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default()
                }),
                latest_value: rec.map(CanonicalRecord::value),
                latest_timestamp: rec.map(CanonicalRecord::timestamp),
            }
        };
        let mut out: Vec<SensorSummary> = self
            .sensors
            .iter()
            .map(|s| summary(&s.id, Some(s), latest.get(&s.id)))
            .collect();
        for (id, rec) in &latest {
            if self.sensors.iter().all(|s| &s.id != id) {
                out.push(summary(id, None, Some(rec)));
            }
        }
        out
    }

    /// Records an operator decision. Approval publishes an actuation
    /// record and stores the current situation as a new case.
    pub fn decide(
        &self,
        ticket_id: &str,
        decision: Decision,
        note: &str,
    ) -> Result<ActionTicket, DecideError> {
        let ticket = self.tickets.decide(ticket_id, decision, note, now_ms())?;
        if decision == Decision::Approve {
            if let Err(e) = self.actuate(&ticket) {
                report("actuation_failed", e);
            }
            if let Err(e) = self.learn(ticket.action()) {
                report("case_append_failed", e);
            }
        }
        Ok(ticket)
    }

    fn actuate(&self, ticket: &ActionTicket) -> Result<(), IngestError> {
        let action = ticket.action();
        let location = self
            .sensors
            .first()
            .map(|s| s.location)
            .unwrap_or(GeoLocation::new(0.0, 0.0).expect("origin is valid"));
        let (meaning, mut keywords) = self
            .ontology()
            .quantity(ACTUATION_QUANTITY)
            .map(|d| (d.meaning.clone(), d.keywords.clone()))
            .unwrap_or_default();
        keywords.push(action.as_str().to_string());
        let description = if meaning.is_empty() {
            action.label().to_string()
        } else {
            format!("{meaning}: {}", action.label())
        };
        let record = CanonicalRecord::new(RecordFields {
            sensor_id: actuator_id(action, &self.config.application),
            quantity: ACTUATION_QUANTITY.into(),
            value: 1.0,
            unit: "state".into(),
            timestamp: now_ms(),
            location,
            description,
            keywords,
            confidence: Confidence::CERTAIN,
        })
        .map_err(|e| actuation_error(e.to_string()))?;
        self.ingest(&record)
    }

    fn learn(&self, action: ActionId) -> io::Result<()> {
        let readings = self
            .snapshot
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .values();
        if readings.is_empty() {
            return Ok(());
        }
        let case = Case {
            readings,
            actions: vec![action],
        };
        let line = serde_json::to_string(&case).expect("case serializes");
        self.cases_log.append(&line)?;
        self.reasoner.knowledge().cases.append(case);
        Ok(())
    }

    fn replay(&self, scenario: Scenario, resume: Option<TimestampMs>) {
        let ontology = self.ontology();
        let options = RunOptions {
            seed: self.config.seed,
            rate: self.config.replay_rate,
            skip_through: resume,
        };
        scenario.run_until(options, &self.stop, |raw| {
            let spec = scenario
                .sensor(&raw.sensor_id)
                .expect("run only emits known sensors");
            match annotate(&raw, spec, ontology) {
                Ok(a) => {
                    let record = self.ingest.enrich(a.canonical);
                    if let Err(IngestError::Io(e)) = self.ingest(&record) {
                        report("persist_failed", e);
                        return ControlFlow::Break(());
                    }
                }
                Err(e) => self.ingest.translator.reject(&TranslationError {
                    stage: Stage::Map,
                    field: "sensor_id".into(),
                    reason: e.to_string(),
                    source_format: Format::Json,
                }),
            }
            ControlFlow::Continue(())
        });
        *self.replay.lock().unwrap_or_else(PoisonError::into_inner) = ReplayState::Done;
    }

    fn reasoning_worker(&self) {
        while let Some(first) = self.worker_sub.recv() {
            let mut batch = vec![first];
            while let Some(r) = self.worker_sub.try_recv() {
                batch.push(r);
            }
            let n = batch.len() as u64;
            let snapshot = {
                let mut s = self.snapshot.lock().unwrap_or_else(PoisonError::into_inner);
                let mut changed = false;
                for r in batch {
                    if r.sensor_id().job() != ACTUATION_JOB {
                        s.update(r);
                        changed = true;
                    }
                }
                changed.then(|| s.clone())
            };
            if let Some(snapshot) = snapshot {
                let now = now_ms();
                for rec in self.reasoner.infer(&snapshot).recommendations {
                    match self.tickets.offer(&rec, now) {
                        Ok(Offer::Opened(_) | Offer::Refreshed(_) | Offer::Unchanged) => {}
                        Err(e) => report("ticket_persist_failed", e),
                    }
                }
            }
            self.processed.fetch_add(n, Ordering::Release);
        }
    }

    fn sweeper(&self) {
        let period = Duration::from_millis((self.config.ticket_ttl_ms / 4).clamp(10, 1000));
        while !self.stop.load(Ordering::Acquire) {
            if let Err(e) = self.tickets.expire_due(now_ms()) {
                report("ticket_persist_failed", e);
            }
            let deadline = Instant::now() + period;
            while !self.stop.load(Ordering::Acquire) && Instant::now() < deadline {
                thread::sleep(Duration::from_millis(10).min(period));
            }
        }
    }

    /// Waits until replay has finished and the reasoning worker has handled
    /// every published record. Returns false on timeout.
    pub fn settle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            let replaying = self.replay_state() == ReplayState::Running;
            let published = self.ingest.broker.stats().published;
            let handled = self.processed.load(Ordering::Acquire) + self.worker_sub.dropped();
            if !replaying && handled >= published {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(2));
        }
    }
}

/// `ACT<channel><application>`, e.g. `ACT1AGR` for irrigation.
pub fn actuator_id(action: ActionId, application: &str) -> SensorId {
    SensorId::new(ACTUATION_JOB, action.channel(), application)
        .expect("channels and configured application codes are valid")
}

fn actuation_error(reason: String) -> IngestError {
    IngestError::Rejected(TranslationError {
        stage: Stage::Validate,
        field: "sensor_id".into(),
        reason,
        source_format: Format::Json,
    })
}
