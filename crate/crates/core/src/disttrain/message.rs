use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender, TryRecvError};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sac::{Obs, PolicySnapshot, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "index")]
pub enum NodeId {
    Env(usize),
    Actor(usize),
    Optimizer(usize),
    Replay,
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::Env(i) => write!(f, "env{i}"),
            NodeId::Actor(i) => write!(f, "actor{i}"),
            NodeId::Optimizer(i) => write!(f, "optimizer{i}"),
            NodeId::Replay => write!(f, "replay"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Payload {
    Observation(Obs),
    Action(Vec<f64>),
    Transitions(Vec<Transition>),
    Snapshot(Arc<PolicySnapshot>),
    Shutdown,
}

#[derive(Debug, Clone)]
pub struct Message {
    /// Strictly increasing per sender.
    pub seq: u64,
    pub sender: NodeId,
    pub payload: Payload,
}

/// Stamps outgoing messages with the sender and its next sequence id.
#[derive(Debug, Clone)]
pub struct Outbox {
    pub sender: NodeId,
    next_seq: u64,
}

impl Outbox {
    pub fn new(sender: NodeId) -> Self {
        Self { sender, next_seq: 0 }
    }

    pub fn stamp(&mut self, payload: Payload) -> Message {
        let seq = self.next_seq;
        self.next_seq += 1;
        Message { seq, sender: self.sender, payload }
    }

    pub fn sent(&self) -> u64 {
        self.next_seq
    }
}

/// Sending half of a bounded channel that also tracks how many messages are queued.
pub struct LinkTx<T> {
    tx: SyncSender<T>,
    depth: Arc<AtomicUsize>,
    name: &'static str,
}

impl<T> Clone for LinkTx<T> {
    fn clone(&self) -> Self {
        Self { tx: self.tx.clone(), depth: self.depth.clone(), name: self.name }
    }
}

pub struct LinkRx<T> {
    rx: Receiver<T>,
    depth: Arc<AtomicUsize>,
    name: &'static str,
}

/// Bounded channel with `capacity ≥ 1` slots.
pub fn link<T>(capacity: usize, name: &'static str) -> (LinkTx<T>, LinkRx<T>) {
    let (tx, rx) = sync_channel(capacity.max(1));
    let depth = Arc::new(AtomicUsize::new(0));
    (LinkTx { tx, depth: depth.clone(), name }, LinkRx { rx, depth, name })
}

impl<T> LinkTx<T> {
    /// Blocks while the channel is full.
    pub fn send(&self, v: T) -> Result<()> {
        self.depth.fetch_add(1, Ordering::SeqCst);
        self.tx.send(v).map_err(|_| {
            self.depth.fetch_sub(1, Ordering::SeqCst);
            Error::ChannelClosed(self.name.into())
        })
    }

    pub fn depth(&self) -> usize {
        self.depth.load(Ordering::SeqCst)
    }
}

impl<T> LinkRx<T> {
    pub fn recv(&self) -> Result<T> {
        let v = self.rx.recv().map_err(|_| Error::ChannelClosed(self.name.into()))?;
        self.depth.fetch_sub(1, Ordering::SeqCst);
        Ok(v)
    }

    /// `Ok(None)` on timeout.
    pub fn recv_timeout(&self, d: Duration) -> Result<Option<T>> {
        match self.rx.recv_timeout(d) {
            Ok(v) => {
                self.depth.fetch_sub(1, Ordering::SeqCst);
                Ok(Some(v))
            }
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::ChannelClosed(self.name.into())),
        }
    }

    /// `Ok(None)` when nothing is queued.
    pub fn try_recv(&self) -> Result<Option<T>> {
        match self.rx.try_recv() {
            Ok(v) => {
                self.depth.fetch_sub(1, Ordering::SeqCst);
                Ok(Some(v))
            }
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(Error::ChannelClosed(self.name.into())),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth.load(Ordering::SeqCst)
    }
}
