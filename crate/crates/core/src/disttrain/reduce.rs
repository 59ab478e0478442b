//! Gradient averaging across optimizer replicas.
//!
//! Summation follows a fixed binary tree over ranks (adjacent pairs, odd element
//! carried up), so the result does not depend on arrival order and every replica
//! receives the same bits.

use std::thread::JoinHandle;

use super::message::{link, LinkRx, LinkTx};
use crate::error::{Error, Result};
use crate::sac::GradReducer;

/// Elementwise sum over the fixed tree.
pub fn tree_sum(parts: &[&[f64]]) -> Result<Vec<f64>> {
    let first = parts.first().ok_or_else(|| Error::AllReduce("no contributions".into()))?;
    if let Some(p) = parts.iter().find(|p| p.len() != first.len()) {
        return Err(Error::AllReduce(format!("length mismatch: {} vs {}", p.len(), first.len())));
    }
    let mut level: Vec<Vec<f64>> = parts.iter().map(|p| p.to_vec()).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        level = next;
    }
    Ok(level.pop().expect("non-empty"))
}

/// Elementwise mean of `parts`, reduced over the fixed tree.
pub fn all_reduce(parts: &[&[f64]]) -> Result<Vec<f64>> {
    let k = parts.len() as f64;
    let mut s = tree_sum(parts)?;
    s.iter_mut().for_each(|v| *v /= k);
    Ok(s)
}

enum HubMsg {
    Grad { rank: usize, data: Vec<f64> },
    Digest { rank: usize, digest: [u8; 32] },
    Leave { rank: usize },
}

type Reply = std::result::Result<Vec<f64>, String>;

/// Rank-side handle of the reduction hub.
pub struct ChannelReducer {
    pub rank: usize,
    tx: LinkTx<HubMsg>,
    rx: LinkRx<Reply>,
    left: bool,
}

impl ChannelReducer {
    fn round(&mut self, msg: HubMsg) -> Result<Vec<f64>> {
        self.tx.send(msg).map_err(|_| Error::AllReduce("reduction hub is gone".into()))?;
        match self.rx.recv() {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(m)) => Err(Error::AllReduce(m)),
            Err(_) => Err(Error::AllReduce("reduction hub is gone".into())),
        }
    }

    /// Fails unless every replica reports the same parameter digest.
    pub fn check_digest(&mut self, digest: [u8; 32]) -> Result<()> {
        self.round(HubMsg::Digest { rank: self.rank, digest }).map(|_| ())
    }

    /// Announces a clean exit; peers still waiting for this rank get an error.
    pub fn leave(mut self) {
        self.send_leave();
    }

    fn send_leave(&mut self) {
        if !self.left {
            self.left = true;
            let _ = self.tx.send(HubMsg::Leave { rank: self.rank });
        }
    }
}

impl Drop for ChannelReducer {
    fn drop(&mut self) {
        self.send_leave();
    }
}

impl GradReducer for ChannelReducer {
    fn reduce(&mut self, grad: &mut [f64]) -> Result<()> {
        let out = self.round(HubMsg::Grad { rank: self.rank, data: grad.to_vec() })?;
        if out.len() != grad.len() {
            return Err(Error::AllReduce("reply of the wrong length".into()));
        }
        grad.copy_from_slice(&out);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HubStats {
    pub gradient_rounds: u64,
    pub digest_rounds: u64,
}

/// Starts the hub thread for `k` ranks and returns one handle per rank.
pub fn spawn_hub(k: usize) -> Result<(Vec<ChannelReducer>, JoinHandle<Result<HubStats>>)> {
    if k == 0 {
        return Err(Error::Config("need at least one optimizer".into()));
    }
    let (tx, rx) = link::<HubMsg>(k, "all-reduce requests");
    let mut reply_tx = Vec::with_capacity(k);
    let mut handles = Vec::with_capacity(k);
    for rank in 0..k {
        let (rtx, rrx) = link::<Reply>(1, "all-reduce replies");
        reply_tx.push(rtx);
        handles.push(ChannelReducer { rank, tx: tx.clone(), rx: rrx, left: false });
    }
    drop(tx);
    let hub = std::thread::Builder::new().name("all-reduce".into()).spawn(move || run_hub(k, rx, reply_tx))?;
    Ok((handles, hub))
}

fn run_hub(k: usize, rx: LinkRx<HubMsg>, replies: Vec<LinkTx<Reply>>) -> Result<HubStats> {
    let mut stats = HubStats::default();
    let mut gone = vec![false; k];
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut digests: Vec<Option<[u8; 32]>> = vec![None; k];
    let fail = |waiting: &[usize], msg: String| {
        for &r in waiting {
            let _ = replies[r].send(Err(msg.clone()));
        }
        Error::AllReduce(msg)
    };
    loop {
        let msg = match rx.recv() {
            Ok(m) => m,
            // Every handle dropped.
            Err(_) => return Ok(stats),
        };
        match msg {
            HubMsg::Leave { rank } => {
                gone[rank] = true;
                let waiting: Vec<usize> = (0..k).filter(|&r| grads[r].is_some() || digests[r].is_some()).collect();
                if !waiting.is_empty() {
                    return Err(fail(&waiting, format!("optimizer{rank} left during a reduction")));
                }
                if gone.iter().all(|g| *g) {
                    return Ok(stats);
                }
            }
            HubMsg::Grad { rank, data } => {
                if gone.iter().any(|g| *g) || grads[rank].is_some() || digests.iter().any(|d| d.is_some()) {
                    let mut waiting: Vec<usize> = (0..k).filter(|&r| grads[r].is_some() || digests[r].is_some()).collect();
                    waiting.push(rank);
                    return Err(fail(&waiting, format!("optimizer{rank} is out of step with its peers")));
                }
                grads[rank] = Some(data);
                if grads.iter().all(|g| g.is_some()) {
                    let parts: Vec<Vec<f64>> = grads.iter_mut().map(|g| g.take().expect("checked")).collect();
                    let refs: Vec<&[f64]> = parts.iter().map(|p| p.as_slice()).collect();
                    match all_reduce(&refs) {
                        Ok(mean) => {
                            for r in &replies {
                                let _ = r.send(Ok(mean.clone()));
                            }
                            stats.gradient_rounds += 1;
                        }
                        Err(e) => return Err(fail(&(0..k).collect::<Vec<_>>(), e.to_string())),
                    }
                }
            }
            HubMsg::Digest { rank, digest } => {
                if gone.iter().any(|g| *g) || digests[rank].is_some() || grads.iter().any(|g| g.is_some()) {
                    let mut waiting: Vec<usize> = (0..k).filter(|&r| grads[r].is_some() || digests[r].is_some()).collect();
                    waiting.push(rank);
                    return Err(fail(&waiting, format!("optimizer{rank} is out of step with its peers")));
                }
                digests[rank] = Some(digest);
                if digests.iter().all(|d| d.is_some()) {
                    let ds: Vec<[u8; 32]> = digests.iter_mut().map(|d| d.take().expect("checked")).collect();
                    if ds.iter().any(|d| *d != ds[0]) {
                        return Err(fail(&(0..k).collect::<Vec<_>>(), "replica parameters diverged".into()));
                    }
                    for r in &replies {
                        let _ = r.send(Ok(Vec::new()));
                    }
                    stats.digest_rounds += 1;
                }
            }
        }
    }
}
