//! Strong and branching bisimulation: minimization and equivalence checks.
//!
//! Strong minimization uses splitter-based partition refinement. Branching
//! bisimulation first collapses strongly connected tau components, then
//! refines by signatures that look through inert tau steps, which is exact
//! once the tau graph is acyclic. Equivalence checks run the signature
//! engine for both relations on the disjoint union, so they can report the
//! round in which the two initial states were separated.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::lts::{normalize_with_map, Lts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Strong,
    Branching,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Strong => "strong",
            Relation::Branching => "branching",
        })
    }
}

impl FromStr for Relation {
    type Err = EquivError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" => Ok(Relation::Strong),
            "branching" => Ok(Relation::Branching),
            _ => Err(EquivError::Relation(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquivError {
    #[error("unknown relation `{0}` (expected strong or branching)")]
    Relation(String),
    #[error("brute-force check limited to {limit} combined states, got {states}")]
    TooLarge { states: usize, limit: usize },
}

/// Block of every state of the minimized LTS, as a state of the quotient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    block: Vec<Option<usize>>,
    count: usize,
}

impl Partition {
    /// Quotient state of `s`; `None` for states unreachable in the input.
    pub fn block_of(&self, s: usize) -> Option<usize> {
        self.block[s]
    }

    pub fn block_count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.block.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block.is_empty()
    }
}

/// Quotient of `l` under the coarsest `r`-bisimulation, normalized. For
/// branching bisimulation, tau steps inside a block are dropped.
pub fn minimize(l: &Lts, r: Relation) -> (Lts, Partition) {
    let (blocks, count) = match r {
        Relation::Strong => strong_blocks(l),
        Relation::Branching => {
            let run = signature_refinement(l, true, None);
            (run.blocks, run.count)
        }
    };
    let tau = l.tau_label();
    let raw: Vec<(usize, usize, usize)> = l
        .transitions()
        .iter()
        .filter(|t| {
            !(r == Relation::Branching && Some(t.label) == tau && blocks[t.src] == blocks[t.dst])
        })
        .map(|t| (blocks[t.src], t.label, blocks[t.dst]))
        .collect();
    let quotient = Lts::from_indexed(count.max(1), blocks[l.initial()], l.labels().to_vec(), raw)
        .expect("block indices are in range");
    let (q, map) = normalize_with_map(&quotient);
    let block = blocks.iter().map(|&b| map[b]).collect();
    let count = q.states();
    (q, Partition { block, count })
}

/// Splitter-based refinement: every block created or changed is queued as
/// a splitter, and each splitter separates, per label, the states that can
/// enter it from those that cannot.
fn strong_blocks(l: &Lts) -> (Vec<usize>, usize) {
    let n = l.states();
    let pred = l.predecessors();
    let mut block_of = vec![0usize; n];
    let mut members: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut queued = vec![true];
    let mut work = vec![0usize];
    let mut stamp = vec![usize::MAX; n];
    let mut epoch = 0usize;
    while let Some(b) = work.pop() {
        queued[b] = false;
        let mut by_label: Vec<(usize, usize)> = members[b]
            .iter()
            .flat_map(|&s| pred[s].iter().copied())
            .collect();
        by_label.sort_unstable();
        by_label.dedup();
        let mut i = 0;
        while i < by_label.len() {
            let lab = by_label[i].0;
            let mut j = i;
            epoch += 1;
            let mut touched: Vec<usize> = Vec::new();
            while j < by_label.len() && by_label[j].0 == lab {
                let s = by_label[j].1;
                stamp[s] = epoch;
                if !touched.contains(&block_of[s]) {
                    touched.push(block_of[s]);
                }
                j += 1;
            }
            for x in touched {
                let (inside, outside): (Vec<usize>, Vec<usize>) =
                    members[x].iter().partition(|&&s| stamp[s] == epoch);
                if outside.is_empty() {
                    continue;
                }
                let nb = members.len();
                for &s in &inside {
                    block_of[s] = nb;
                }
                members[x] = outside;
                members.push(inside);
                queued.push(true);
                work.push(nb);
                if !queued[x] {
                    queued[x] = true;
                    work.push(x);
                }
            }
            i = j;
        }
    }
    (block_of, members.len())
}

/// Outcome of signature refinement on the states of an LTS.
struct Refinement {
    blocks: Vec<usize>,
    count: usize,
    /// Round in which the watched pair of states was separated.
    separated_at: Option<usize>,
}

/// A component's current block and its sorted signature.
type SigKey<'a> = (usize, &'a [(usize, usize)]);

/// Signature refinement. With `branching`, states on a common tau cycle are
/// merged first and inert tau steps pass on the signature of their target.
fn signature_refinement(l: &Lts, branching: bool, watch: Option<(usize, usize)>) -> Refinement {
    let n = l.states();
    let tau = if branching { l.tau_label() } else { None };
    let (comp, comps, order) = match tau {
        Some(tau) => tau_sccs(l, tau),
        // identity components; order is irrelevant without inert steps
        None => ((0..n).collect(), n, (0..n).collect()),
    };
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); comps];
    for t in l.transitions() {
        let (c, d) = (comp[t.src], comp[t.dst]);
        if Some(t.label) == tau && c == d {
            continue;
        }
        edges[c].push((t.label, d));
    }
    for e in &mut edges {
        e.sort_unstable();
        e.dedup();
    }
    let mut pi = vec![0usize; comps];
    let mut count = usize::from(comps > 0);
    let mut separated_at = None;
    let mut round = 0;
    loop {
        round += 1;
        let mut sigs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); comps];
        for &c in &order {
            let mut sig = Vec::with_capacity(edges[c].len());
            for &(a, d) in &edges[c] {
                if Some(a) == tau && pi[d] == pi[c] {
                    sig.extend_from_slice(&sigs[d]);
                } else {
                    sig.push((a, pi[d]));
                }
            }
            sig.sort_unstable();
            sig.dedup();
            sigs[c] = sig;
        }
        let mut ids: HashMap<SigKey, usize> = HashMap::new();
        let next: Vec<usize> = (0..comps)
            .map(|c| {
                let fresh = ids.len();
                *ids.entry((pi[c], &sigs[c])).or_insert(fresh)
            })
            .collect();
        let new_count = ids.len();
        if let (None, Some((x, y))) = (separated_at, watch) {
            if next[comp[x]] != next[comp[y]] {
                separated_at = Some(round);
            }
        }
        pi = next;
        if new_count == count {
            break;
        }
        count = new_count;
    }
    Refinement {
        blocks: (0..n).map(|s| pi[comp[s]]).collect(),
        count,
        separated_at,
    }
}

/// Strongly connected components of the tau graph (iterative Tarjan).
/// Returns the component of each state, the component count, and the
/// components in an order where tau successors come first.
fn tau_sccs(l: &Lts, tau: usize) -> (Vec<usize>, usize, Vec<usize>) {
    let n = l.states();
    let succ = |s: usize| {
        l.outgoing(s)
            .iter()
            .filter(move |t| t.label == tau)
            .map(|t| t.dst)
    };
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut order = Vec::new();
    let mut next_index = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        call.push((root, succ(root).collect(), 0));
        while let Some((v, ss, i)) = call.last_mut() {
            let v = *v;
            if *i < ss.len() {
                let w = ss[*i];
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, succ(w).collect(), 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some((u, _, _)) = call.last() {
                    low[*u] = low[*u].min(low[v]);
                }
                if low[v] == index[v] {
                    let c = order.len();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = c;
                        if w == v {
                            break;
                        }
                    }
                    order.push(c);
                }
            }
        }
    }
    let comps = order.len();
    (comp, comps, order)
}

/// Result of an equivalence check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub relation: Relation,
    pub equal: bool,
    pub states_a: usize,
    pub states_b: usize,
    /// Refinement round that separated the initial states.
    pub round: Option<usize>,
    /// Visible labels leading to a pair of states with different offers.
    pub diagnostic_trace: Option<Vec<String>>,
}

/// Disjoint union; states of `b` are shifted by `a.states()`.
fn union(a: &Lts, b: &Lts) -> Lts {
    let off = a.states();
    let ts = a
        .iter()
        .map(|(s, l, d)| (s, l.clone(), d))
        .chain(b.iter().map(|(s, l, d)| (s + off, l.clone(), d + off)));
    Lts::new(a.states() + b.states(), a.initial(), ts).expect("shifted indices are in range")
}

pub fn equivalent(a: &Lts, b: &Lts, r: Relation) -> Verdict {
    let u = union(a, b);
    let (x, y) = (a.initial(), b.initial() + a.states());
    let run = signature_refinement(&u, r == Relation::Branching, Some((x, y)));
    let equal = run.blocks[x] == run.blocks[y];
    let diagnostic_trace = (!equal).then(|| distinguishing_trace(&u, &run.blocks, x, y, r));
    Verdict {
        relation: r,
        equal,
        states_a: a.states(),
        states_b: b.states(),
        round: run.separated_at,
        diagnostic_trace,
    }
}

const PAIR_BUDGET: usize = 1_000_000;

/// Breadth-first search over pairs of inequivalent states reached by equal
/// label sequences, up to a pair whose (weakly) enabled visible labels
/// differ. Falls back to the empty trace if none is found in budget.
fn distinguishing_trace(u: &Lts, blocks: &[usize], x: usize, y: usize, r: Relation) -> Vec<String> {
    let tau = u.tau_label();
    let mut closure: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut tau_star = |s: usize| -> Vec<usize> {
        if r == Relation::Strong {
            return vec![s];
        }
        closure
            .entry(s)
            .or_insert_with(|| {
                let mut seen = vec![s];
                let mut i = 0;
                while i < seen.len() {
                    for t in u.outgoing(seen[i]) {
                        if Some(t.label) == tau && !seen.contains(&t.dst) {
                            seen.push(t.dst);
                        }
                    }
                    i += 1;
                }
                seen
            })
            .clone()
    };
    let visible_moves = |from: &[usize]| -> Vec<(usize, usize)> {
        let mut m: Vec<(usize, usize)> = from
            .iter()
            .flat_map(|&s| u.outgoing(s).iter())
            .filter(|t| r == Relation::Strong || Some(t.label) != tau)
            .map(|t| (t.label, t.dst))
            .collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    let mut seen: HashSet<(usize, usize)> = HashSet::from([(x, y)]);
    let mut queue: VecDeque<(usize, usize, Vec<usize>)> = VecDeque::from([(x, y, Vec::new())]);
    while let Some((p, q, trace)) = queue.pop_front() {
        let (cp, cq) = (tau_star(p), tau_star(q));
        let (mp, mq) = (visible_moves(&cp), visible_moves(&cq));
        let labels = |m: &[(usize, usize)]| {
            let mut ls: Vec<usize> = m.iter().map(|&(a, _)| a).collect();
            ls.dedup();
            ls
        };
        if labels(&mp) != labels(&mq) || seen.len() > PAIR_BUDGET {
            return trace.iter().map(|&a| u.label(a).to_string()).collect();
        }
        let mut push = |p2: usize, q2: usize, tr: Vec<usize>| {
            if blocks[p2] != blocks[q2] && seen.insert((p2, q2)) {
                queue.push_back((p2, q2, tr));
            }
        };
        for &(a, p2) in &mp {
            for &(_, q2) in mq.iter().filter(|(b, _)| *b == a) {
                let mut tr = trace.clone();
                tr.push(a);
                push(p2, q2, tr);
            }
        }
        if r == Relation::Branching {
            // tau steps that leave the block must be matched within the closure
            for (from, other, flip) in [(p, &cq, false), (q, &cp, true)] {
                for t in u.outgoing(from).iter().filter(|t| Some(t.label) == tau) {
                    for &o in other.iter() {
                        if flip {
                            push(o, t.dst, trace.clone());
                        } else {
                            push(t.dst, o, trace.clone());
                        }
                    }
                }
            }
        }
    }
    Vec::new()
}

/// Largest state count accepted by [`brute_force_equivalent`].
pub const BRUTE_FORCE_LIMIT: usize = 64;

/// Naive greatest fixpoint over the full relation on the disjoint union:
/// pairs violating the transfer condition are removed until none does.
pub fn brute_force_equivalent(a: &Lts, b: &Lts, r: Relation) -> Result<bool, EquivError> {
    let u = union(a, b);
    let n = u.states();
    if n > BRUTE_FORCE_LIMIT {
        return Err(EquivError::TooLarge {
            states: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let tau = u.tau_label();
    let mut closure = vec![0u64; n];
    for (s, c) in closure.iter_mut().enumerate() {
        *c = 1 << s;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for t in u.outgoing(v) {
                if Some(t.label) == tau && *c & (1 << t.dst) == 0 {
                    *c |= 1 << t.dst;
                    stack.push(t.dst);
                }
            }
        }
    }
    let mut rel = vec![if n == 64 { u64::MAX } else { (1u64 << n) - 1 }; n];
    let related = |rel: &[u64], p: usize, q: usize| rel[p] & (1 << q) != 0;
    let simulates = |rel: &[u64], p: usize, q: usize| -> bool {
        u.outgoing(p).iter().all(|t| {
            let step = |q2: usize| {
                u.outgoing(q2)
                    .iter()
                    .any(|m| u.label(m.label) == u.label(t.label) && related(rel, t.dst, m.dst))
            };
            match r {
                Relation::Strong => step(q),
                Relation::Branching => {
                    (Some(t.label) == tau && related(rel, t.dst, q))
                        || (0..n).any(|q2| {
                            closure[q] & (1 << q2) != 0 && related(rel, p, q2) && step(q2)
                        })
                }
            }
        })
    };
    let mut changed = true;
    while changed {
        changed = false;
        for p in 0..n {
            for q in 0..n {
                if related(&rel, p, q) && !(simulates(&rel, p, q) && simulates(&rel, q, p)) {
                    rel[p] &= !(1 << q);
                    rel[q] &= !(1 << p);
                    changed = true;
                }
            }
        }
    }
    Ok(related(&rel, a.initial(), b.initial() + a.states()))
}
