use std::sync::{Condvar, Mutex, MutexGuard};

use crate::error::{Error, Result};
use crate::sac::{ReplayBuffer, Transition};

/// The shared replay buffer. All access is serialized by one lock; waiters are woken
/// on every insert and on close.
pub struct ReplayService {
    state: Mutex<State>,
    changed: Condvar,
}

struct State {
    buffer: ReplayBuffer,
    closed: bool,
    aborted: Option<String>,
}

impl ReplayService {
    pub fn new(capacity: usize) -> Result<Self> {
        Ok(Self {
            state: Mutex::new(State { buffer: ReplayBuffer::new(capacity)?, closed: false, aborted: None }),
            changed: Condvar::new(),
        })
    }

    fn lock(&self) -> Result<MutexGuard<'_, State>> {
        self.state.lock().map_err(|_| Error::InvalidInput("replay lock poisoned".into()))
    }

    pub fn insert(&self, ts: Vec<Transition>) -> Result<()> {
        let mut s = self.lock()?;
        if s.closed {
            return Err(Error::ChannelClosed("replay service is closed".into()));
        }
        for t in ts {
            s.buffer.insert(t)?;
        }
        self.changed.notify_all();
        Ok(())
    }

    /// No more inserts will arrive.
    pub fn close(&self) {
        if let Ok(mut s) = self.state.lock() {
            s.closed = true;
        }
        self.changed.notify_all();
    }

    /// Wakes every waiter with an error.
    pub fn abort(&self, why: &str) {
        if let Ok(mut s) = self.state.lock() {
            s.closed = true;
            s.aborted = Some(why.to_string());
        }
        self.changed.notify_all();
    }

    pub fn inserted(&self) -> Result<u64> {
        Ok(self.lock()?.buffer.inserted())
    }

    /// Blocks until `ready(inserted)` holds or the service closes. Returns the insert
    /// count at that moment and whether the service is closed.
    pub fn wait_for(&self, ready: impl Fn(u64) -> bool) -> Result<(u64, bool)> {
        let mut s = self.lock()?;
        loop {
            if let Some(why) = &s.aborted {
                return Err(Error::ChannelClosed(format!("replay aborted: {why}")));
            }
            let n = s.buffer.inserted();
            if ready(n) || s.closed {
                return Ok((n, s.closed));
            }
            s = self.changed.wait(s).map_err(|_| Error::InvalidInput("replay lock poisoned".into()))?;
        }
    }

    pub fn with_buffer<T>(&self, f: impl FnOnce(&ReplayBuffer) -> T) -> Result<T> {
        Ok(f(&self.lock()?.buffer))
    }
}
