//! Explicit-state generation of the LTS of a process network, shortest
//! traces, and synchronous product of LTSs.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::time::{Duration, Instant};

use indexmap::IndexSet;
use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::{GlobalState, KernelError, ProcessNetwork};
use crate::lts::{normalize, Label, Lts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_states: usize,
    pub max_seconds: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: 10_000_000,
            max_seconds: 600,
        }
    }
}

/// How far generation got before stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Frontier {
    pub states: usize,
    pub transitions: usize,
    pub frontier: usize,
    pub depth: usize,
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("state limit of {limit} exceeded ({} states, {} transitions, frontier {} at depth {})",
        .at.states, .at.transitions, .at.frontier, .at.depth)]
    StateLimit { limit: usize, at: Frontier },
    #[error("time limit of {limit} s exceeded ({} states, {} transitions, frontier {} at depth {})",
        .at.states, .at.transitions, .at.frontier, .at.depth)]
    TimeLimit { limit: u64, at: Frontier },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("state {target} is not reachable from the initial state")]
    Unreachable { target: usize },
}

/// Generates the reachable LTS of `net`, normalized. Successors of each
/// breadth-first level are computed in parallel on the current rayon pool
/// and merged in state order, so the result does not depend on the number
/// of workers.
pub fn generate(net: &ProcessNetwork, lim: Limits) -> Result<Lts, ExploreError> {
    let start = Instant::now();
    let deadline = Duration::from_secs(lim.max_seconds);
    let mut index: IndexSet<GlobalState> = IndexSet::new();
    index.insert(net.initial_state()?);
    let mut label_ids: HashMap<Label, usize> = HashMap::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut raw: Vec<(usize, usize, usize)> = Vec::new();
    let mut level_start = 0;
    let mut depth = 0;
    while level_start < index.len() {
        let level_end = index.len();
        let at = Frontier {
            states: index.len(),
            transitions: raw.len(),
            frontier: level_end - level_start,
            depth,
        };
        if start.elapsed() > deadline {
            return Err(ExploreError::TimeLimit {
                limit: lim.max_seconds,
                at,
            });
        }
        let rate = index.len() as f64 / start.elapsed().as_secs_f64().max(1e-6);
        info!(
            "depth {depth}: {} states, frontier {}, {rate:.0} states/s",
            index.len(),
            at.frontier
        );
        let succs: Vec<Result<Vec<(Label, GlobalState)>, KernelError>> = (level_start..level_end)
            .into_par_iter()
            .map(|i| net.successors(&index[i]))
            .collect();
        for (off, res) in succs.into_iter().enumerate() {
            let src = level_start + off;
            for (label, dst) in res? {
                let (dst, _) = index.insert_full(dst);
                let next = labels.len();
                let l = *label_ids.entry(label).or_insert_with_key(|l| {
                    labels.push(l.clone());
                    next
                });
                raw.push((src, l, dst));
            }
            if index.len() > lim.max_states {
                let at = Frontier {
                    states: index.len(),
                    transitions: raw.len(),
                    frontier: index.len() - src - 1,
                    depth,
                };
                return Err(ExploreError::StateLimit {
                    limit: lim.max_states,
                    at,
                });
            }
        }
        level_start = level_end;
        depth += 1;
    }
    info!(
        "generated {} states, {} transitions in {:.2?}",
        index.len(),
        raw.len(),
        start.elapsed()
    );
    let lts =
        Lts::from_indexed(index.len(), 0, labels, raw).expect("indices come from the state index");
    Ok(normalize(&lts))
}

/// A label sequence from the initial state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace(pub Vec<Label>);

impl Trace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn texts(&self) -> Vec<String> {
        self.0.iter().map(Label::to_string).collect()
    }

    /// Whether some path of `l` from its initial state carries this trace.
    pub fn replays(&self, l: &Lts) -> bool {
        let mut current: HashSet<usize> = HashSet::from([l.initial()]);
        for lab in &self.0 {
            current = current
                .iter()
                .flat_map(|&s| {
                    l.outgoing(s)
                        .iter()
                        .filter(|t| l.label(t.label) == lab)
                        .map(|t| t.dst)
                })
                .collect();
            if current.is_empty() {
                return false;
            }
        }
        true
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("<empty>");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Breadth-first tree: for each reached state, its parent and the label id.
pub(crate) fn bfs_tree(l: &Lts) -> Vec<Option<(usize, usize)>> {
    let mut parent = vec![None; l.states()];
    let mut seen = vec![false; l.states()];
    seen[l.initial()] = true;
    let mut queue = VecDeque::from([l.initial()]);
    while let Some(s) = queue.pop_front() {
        for t in l.outgoing(s) {
            if !seen[t.dst] {
                seen[t.dst] = true;
                parent[t.dst] = Some((s, t.label));
                queue.push_back(t.dst);
            }
        }
    }
    parent
}

fn path(l: &Lts, parent: &[Option<(usize, usize)>], target: usize) -> Option<Trace> {
    let mut labels = Vec::new();
    let mut s = target;
    while s != l.initial() {
        let (p, lab) = parent[s]?;
        labels.push(l.label(lab).clone());
        s = p;
    }
    labels.reverse();
    Some(Trace(labels))
}

/// A shortest trace from the initial state to `target`.
pub fn trace_to(l: &Lts, target: usize) -> Result<Trace, ExploreError> {
    if target >= l.states() {
        return Err(ExploreError::Unreachable { target });
    }
    path(l, &bfs_tree(l), target).ok_or(ExploreError::Unreachable { target })
}

/// Reachable states without outgoing transitions, each with a shortest trace.
pub fn deadlocks(l: &Lts) -> Vec<(usize, Trace)> {
    let parent = bfs_tree(l);
    (0..l.states())
        .filter(|&s| l.is_deadlock(s))
        .filter_map(|s| path(l, &parent, s).map(|t| (s, t)))
        .collect()
}

/// Synchronous product: visible labels whose gate is in `sync_gates` need
/// an identical label on both sides, all other labels interleave.
pub fn product<S: AsRef<str>>(a: &Lts, b: &Lts, sync_gates: &[S]) -> Lts {
    let syncs = |l: &Label| {
        l.gate()
            .is_some_and(|g| sync_gates.iter().any(|s| s.as_ref() == g))
    };
    let a_sync: Vec<bool> = a.labels().iter().map(syncs).collect();
    let b_sync: Vec<bool> = b.labels().iter().map(syncs).collect();
    let mut index: IndexSet<(usize, usize)> = IndexSet::new();
    index.insert((a.initial(), b.initial()));
    let mut out: Vec<(usize, Label, usize)> = Vec::new();
    let mut i = 0;
    while i < index.len() {
        let (x, y) = index[i];
        for ta in a.outgoing(x) {
            let la = a.label(ta.label);
            if a_sync[ta.label] {
                for tb in b
                    .outgoing(y)
                    .iter()
                    .filter(|tb| b_sync[tb.label] && b.label(tb.label) == la)
                {
                    let (d, _) = index.insert_full((ta.dst, tb.dst));
                    out.push((i, la.clone(), d));
                }
            } else {
                let (d, _) = index.insert_full((ta.dst, y));
                out.push((i, la.clone(), d));
            }
        }
        for tb in b.outgoing(y).iter().filter(|tb| !b_sync[tb.label]) {
            let (d, _) = index.insert_full((x, tb.dst));
            out.push((i, b.label(tb.label).clone(), d));
        }
        i += 1;
    }
    debug!("product: {} states, {} transitions", index.len(), out.len());
    normalize(&Lts::new(index.len(), 0, out).expect("indices come from the pair index"))
}
