//! Optional loopback ingress: clients write frames, each accepted record is
//! published. Nothing is written back to the client.

use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, PoisonError};
use std::thread::{self, JoinHandle};

use semfarm_core::CanonicalRecord;

use crate::broker::Broker;
use crate::frame::{read_frame, FrameError};

/// Decides whether a decoded record may be published.
pub type Admit = dyn Fn(&CanonicalRecord) -> bool + Send + Sync;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngressStats {
    pub accepted: u64,
    pub rejected: u64,
    pub frame_errors: u64,
}

#[derive(Default)]
struct Counters {
    accepted: AtomicU64,
    rejected: AtomicU64,
    frame_errors: AtomicU64,
}

pub struct TcpIngress {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    counters: Arc<Counters>,
    connections: Arc<Mutex<Vec<TcpStream>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl TcpIngress {
    /// Binds `addr` (port 0 picks a free port) and starts accepting.
    pub fn bind(addr: SocketAddr, broker: Arc<Broker>, admit: Arc<Admit>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let counters = Arc::new(Counters::default());
        let connections = Arc::new(Mutex::new(Vec::new()));
        let acceptor = {
            let (stop, counters, connections) =
                (stop.clone(), counters.clone(), connections.clone());
            thread::Builder::new()
                .name("tcp-ingress".into())
                .spawn(move || {
                    for stream in listener.incoming() {
                        if stop.load(Ordering::Acquire) {
                            break;
                        }
                        let Ok(stream) = stream else { continue };
                        if let Ok(clone) = stream.try_clone() {
                            connections
                                .lock()
                                .unwrap_or_else(PoisonError::into_inner)
                                .push(clone);
                        }
                        let (broker, admit, counters) =
                            (broker.clone(), admit.clone(), counters.clone());
                        thread::spawn(move || serve(stream, &broker, &*admit, &counters));
                    }
                })?
        };
        Ok(Self {
            addr,
            stop,
            counters,
            connections,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> IngressStats {
        IngressStats {
            accepted: self.counters.accepted.load(Ordering::Relaxed),
            rejected: self.counters.rejected.load(Ordering::Relaxed),
            frame_errors: self.counters.frame_errors.load(Ordering::Relaxed),
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if self.stop.swap(true, Ordering::AcqRel) {
            return;
        }
        // Unblock accept() with a throwaway connection.
        let _ = TcpStream::connect(self.addr);
        for c in self
            .connections
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .drain(..)
        {
            let _ = c.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TcpIngress {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Reads frames until end of stream. A framing error ends the connection
/// since the stream can no longer be resynchronized.
fn serve(mut stream: TcpStream, broker: &Broker, admit: &Admit, counters: &Counters) {
    loop {
        match read_frame(&mut stream) {
            Ok(Some(record)) => {
                if admit(&record) {
                    counters.accepted.fetch_add(1, Ordering::Relaxed);
                    broker.publish(&record);
                } else {
                    counters.rejected.fetch_add(1, Ordering::Relaxed);
                }
            }
            Ok(None) => return,
            Err(FrameError::Payload(_)) => {
                counters.frame_errors.fetch_add(1, Ordering::Relaxed);
            }
            Err(_) => {
                counters.frame_errors.fetch_add(1, Ordering::Relaxed);
                return;
            }
        }
    }
}
