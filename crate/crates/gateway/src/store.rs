//! Live sessions. Events for one session run one at a time, in arrival
//! order; reads use the snapshot taken after the last finished event so they
//! never wait on a running generation.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use meshforge::pipeline::{Session, SessionState};
use parking_lot::{Mutex, RwLock};
use tokio::sync::broadcast;

/// A stored reply to an event, replayed for a repeated client event id.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: serde_json::Value,
}

pub struct Slot {
    pub id: String,
    pub(crate) work: tokio::sync::Mutex<Worker>,
    snapshot: RwLock<Session>,
    live: Arc<Mutex<SessionState>>,
    tx: broadcast::Sender<SessionState>,
}

pub(crate) struct Worker {
    pub session: Session,
    pub replies: HashMap<String, Reply>,
}

impl Slot {
    fn new(mut session: Session) -> Arc<Self> {
        let (tx, mut rx) = broadcast::channel(64);
        session.set_listener(tx.clone());
        let live = Arc::new(Mutex::new(session.state));
        let tracker = live.clone();
        tokio::spawn(async move {
            loop {
                match rx.recv().await {
                    Ok(state) => *tracker.lock() = state,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        });
        Arc::new(Self {
            id: session.id.clone(),
            snapshot: RwLock::new(session.clone()),
            work: tokio::sync::Mutex::new(Worker {
                session,
                replies: HashMap::new(),
            }),
            live,
            tx,
        })
    }

    pub fn snapshot(&self) -> Session {
        self.snapshot.read().clone()
    }

    pub(crate) fn publish(&self, session: &Session) {
        *self.snapshot.write() = session.clone();
    }

    /// The most recently entered state, including mid-event ones.
    pub fn live_state(&self) -> SessionState {
        *self.live.lock()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SessionState> {
        self.tx.subscribe()
    }
}

#[derive(Default)]
pub struct SessionStore {
    slots: RwLock<HashMap<String, Arc<Slot>>>,
    in_flight: AtomicUsize,
}

impl SessionStore {
    /// Must run inside a tokio runtime.
    pub fn create(&self, language: &str) -> Arc<Slot> {
        let slot = Slot::new(Session::new(language));
        self.slots.write().insert(slot.id.clone(), slot.clone());
        slot
    }

    pub fn get(&self, id: &str) -> Option<Arc<Slot>> {
        self.slots.read().get(id).cloned()
    }

    pub fn snapshots(&self) -> Vec<Session> {
        let slots: Vec<Arc<Slot>> = self.slots.read().values().cloned().collect();
        slots.iter().map(|s| s.snapshot()).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn begin(&self) -> InFlight<'_> {
        self.in_flight.fetch_add(1, Ordering::SeqCst);
        InFlight(self)
    }

    /// Events still being processed.
    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::SeqCst)
    }
}

pub(crate) struct InFlight<'a>(&'a SessionStore);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}
