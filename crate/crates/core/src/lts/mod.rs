//! Labelled transition systems: storage, canonical form, statistics and
//! the text formats used to exchange them.

mod aut;
mod dot;
mod label;
mod slice;
mod value;

use std::collections::{HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

pub use aut::{read_aut, write_aut, AutError};
pub use dot::write_dot;
pub use label::{
    format_label, gate_signature, gates, parse_label, Label, LabelParseError, TAU_TEXT,
};
pub use slice::{hide, hide_all_but, rename, LabelMatcher, RenameRules, SliceError};
pub use value::{
    Bit, Pid, Prob, Step, Symbol, Tag, Value, ValueError, ValueKind, MAX_PID, PROB_SCALE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtsError {
    #[error("initial state {initial} out of range for {states} states")]
    Initial { initial: usize, states: usize },
    #[error("transition ({src}, {dst}) out of range for {states} states")]
    Transition {
        src: usize,
        dst: usize,
        states: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub src: usize,
    pub label: usize,
    pub dst: usize,
}

/// A finite LTS. Storage is always canonical: the label table holds exactly
/// the labels in use, sorted by text, and transitions are sorted by
/// `(src, label text, dst)`. State numbering and duplicate transitions are
/// kept as given until [`normalize`] is applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lts {
    states: usize,
    initial: usize,
    labels: Vec<Label>,
    transitions: Vec<Transition>,
    offsets: Vec<usize>,
}

impl Lts {
    pub fn new(
        states: usize,
        initial: usize,
        transitions: impl IntoIterator<Item = (usize, Label, usize)>,
    ) -> Result<Lts, LtsError> {
        let mut table: HashMap<Label, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut raw = Vec::new();
        for (src, label, dst) in transitions {
            let next = labels.len();
            let id = *table.entry(label.clone()).or_insert_with(|| {
                labels.push(label);
                next
            });
            raw.push((src, id, dst));
        }
        Lts::from_indexed(states, initial, labels, raw)
    }

    /// Builds an LTS from a label table and transitions indexing into it.
    /// The table may contain unused or duplicate labels.
    pub fn from_indexed(
        states: usize,
        initial: usize,
        labels: Vec<Label>,
        raw: Vec<(usize, usize, usize)>,
    ) -> Result<Lts, LtsError> {
        Lts::build(states, initial, labels, raw, false)
    }

    fn build(
        states: usize,
        initial: usize,
        labels: Vec<Label>,
        raw: Vec<(usize, usize, usize)>,
        dedup: bool,
    ) -> Result<Lts, LtsError> {
        if initial >= states {
            return Err(LtsError::Initial { initial, states });
        }
        if let Some(&(src, _, dst)) = raw.iter().find(|(s, _, d)| *s >= states || *d >= states) {
            return Err(LtsError::Transition { src, dst, states });
        }
        let mut used = vec![false; labels.len()];
        for &(_, l, _) in &raw {
            used[l] = true;
        }
        let mut order: Vec<(String, usize)> = labels
            .iter()
            .enumerate()
            .filter(|(i, _)| used[*i])
            .map(|(i, l)| (l.to_string(), i))
            .collect();
        order.sort();
        let mut remap = vec![usize::MAX; labels.len()];
        let mut table: Vec<Label> = Vec::with_capacity(order.len());
        let mut last_text: Option<&str> = None;
        for (text, old) in &order {
            if last_text != Some(text.as_str()) {
                table.push(labels[*old].clone());
                last_text = Some(text.as_str());
            }
            remap[*old] = table.len() - 1;
        }
        let mut transitions: Vec<Transition> = raw
            .into_iter()
            .map(|(src, l, dst)| Transition {
                src,
                label: remap[l],
                dst,
            })
            .collect();
        transitions.sort_unstable();
        if dedup {
            transitions.dedup();
        }
        let mut offsets = vec![0; states + 1];
        for t in &transitions {
            offsets[t.src + 1] += 1;
        }
        for i in 0..states {
            offsets[i + 1] += offsets[i];
        }
        Ok(Lts {
            states,
            initial,
            labels: table,
            transitions,
            offsets,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    /// Label table, sorted by canonical text.
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, id: usize) -> &Label {
        &self.labels[id]
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Outgoing transitions of `s`, ordered by label text then destination.
    pub fn outgoing(&self, s: usize) -> &[Transition] {
        &self.transitions[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn out_degree(&self, s: usize) -> usize {
        self.offsets[s + 1] - self.offsets[s]
    }

    pub fn tau_label(&self) -> Option<usize> {
        self.labels.iter().position(Label::is_tau)
    }

    pub fn is_deadlock(&self, s: usize) -> bool {
        self.out_degree(s) == 0
    }

    /// `(src, label, dst)` triples in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Label, usize)> + '_ {
        self.transitions
            .iter()
            .map(|t| (t.src, &self.labels[t.label], t.dst))
    }

    /// Replaces labels through `f`, keeping states and transition structure.
    pub fn map_labels(&self, mut f: impl FnMut(&Label) -> Label) -> Lts {
        let labels = self.labels.iter().map(&mut f).collect();
        let raw = self
            .transitions
            .iter()
            .map(|t| (t.src, t.label, t.dst))
            .collect();
        Lts::from_indexed(self.states, self.initial, labels, raw).expect("indices unchanged")
    }

    /// Predecessor lists, indexed by destination.
    pub fn predecessors(&self) -> Vec<Vec<(usize, usize)>> {
        let mut pred = vec![Vec::new(); self.states];
        for t in &self.transitions {
            pred[t.dst].push((t.label, t.src));
        }
        pred
    }

    fn is_deterministic(&self) -> bool {
        (0..self.states).all(|s| {
            self.outgoing(s)
                .windows(2)
                .all(|w| w[0].label != w[1].label)
        })
    }

    pub fn is_normalized(&self) -> bool {
        *self == normalize(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub states: usize,
    pub transitions: usize,
    pub distinct_visible_labels: usize,
    pub tau_transitions: usize,
    pub deadlock_states: usize,
}

pub fn stats(l: &Lts) -> Stats {
    let tau = l.tau_label();
    Stats {
        states: l.states,
        transitions: l.transitions.len(),
        distinct_visible_labels: l.labels.len() - usize::from(tau.is_some()),
        tau_transitions: l
            .transitions
            .iter()
            .filter(|t| Some(t.label) == tau)
            .count(),
        deadlock_states: (0..l.states).filter(|&s| l.is_deadlock(s)).count(),
    }
}

/// Keeps reachable states only, renumbered in breadth-first order from the
/// initial state. Successors are visited by label text, then by a structural
/// colour of the destination when the LTS is nondeterministic, then by the
/// prior index. Duplicate transitions are removed.
pub fn normalize(l: &Lts) -> Lts {
    normalize_with_map(l).0
}

/// [`normalize`], also returning the new number of every old state
/// (`None` for unreachable ones).
pub fn normalize_with_map(l: &Lts) -> (Lts, Vec<Option<usize>>) {
    let colours = if l.is_deterministic() {
        None
    } else {
        Some(structural_colours(l))
    };
    let mut order = vec![usize::MAX; l.states];
    let mut queue = VecDeque::new();
    let mut next = 0;
    order[l.initial] = next;
    next += 1;
    queue.push_back(l.initial);
    let mut succ = Vec::new();
    while let Some(s) = queue.pop_front() {
        succ.clear();
        succ.extend(
            l.outgoing(s)
                .iter()
                .map(|t| (t.label, colours.as_ref().map_or(0, |c| c[t.dst]), t.dst)),
        );
        succ.sort_unstable();
        for &(_, _, d) in &succ {
            if order[d] == usize::MAX {
                order[d] = next;
                next += 1;
                queue.push_back(d);
            }
        }
    }
    let raw = l
        .transitions
        .iter()
        .filter(|t| order[t.src] != usize::MAX)
        .map(|t| (order[t.src], t.label, order[t.dst]))
        .collect();
    let lts = Lts::build(next, 0, l.labels.clone(), raw, true).expect("renumbering stays in range");
    (
        lts,
        order
            .into_iter()
            .map(|o| (o != usize::MAX).then_some(o))
            .collect(),
    )
}

/// Own colour, then sorted outgoing and incoming (label, colour) pairs.
type Signature = (usize, Vec<(usize, usize)>, Vec<(usize, usize)>);

/// Isomorphism-invariant colouring of the reachable states by iterated
/// refinement over BFS depth, outgoing and incoming labelled neighbours.
fn structural_colours(l: &Lts) -> Vec<usize> {
    let mut depth = vec![usize::MAX; l.states];
    let mut queue = VecDeque::from([l.initial]);
    depth[l.initial] = 0;
    while let Some(s) = queue.pop_front() {
        for t in l.outgoing(s) {
            if depth[t.dst] == usize::MAX {
                depth[t.dst] = depth[s] + 1;
                queue.push_back(t.dst);
            }
        }
    }
    let pred = l.predecessors();
    let mut colour = rank(&depth);
    let mut classes = colour.iter().max().map_or(0, |m| m + 1);
    loop {
        let sigs: Vec<Signature> = (0..l.states)
            .map(|s| {
                let mut out: Vec<_> = l
                    .outgoing(s)
                    .iter()
                    .map(|t| (t.label, colour[t.dst]))
                    .collect();
                out.sort_unstable();
                out.dedup();
                // unreachable predecessors vanish after renumbering, so they must not count
                let mut inc: Vec<_> = pred[s]
                    .iter()
                    .filter(|&&(_, p)| depth[p] != usize::MAX)
                    .map(|&(lab, p)| (lab, colour[p]))
                    .collect();
                inc.sort_unstable();
                // duplicate transitions are merged by the renumbering
                inc.dedup();
                (colour[s], out, inc)
            })
            .collect();
        let refined = rank(&sigs);
        let count = refined.iter().max().map_or(0, |m| m + 1);
        colour = refined;
        if count == classes {
            return colour;
        }
        classes = count;
    }
}

/// Dense ranks of the values, by their order.
fn rank<T: Ord>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].cmp(&values[b]));
    let mut out = vec![0; values.len()];
    let mut r = 0;
    for w in 0..idx.len() {
        if w > 0 && values[idx[w]] != values[idx[w - 1]] {
            r += 1;
        }
        out[idx[w]] = r;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lab(s: &str) -> Label {
        parse_label(s).unwrap()
    }

    pub(crate) fn sync_loop() -> Lts {
        Lts::new(2, 0, [(0, lab("SYNC !BEGIN"), 1), (1, lab("SYNC !END"), 0)]).unwrap()
    }

    #[test]
    fn stats_of_small_systems() {
        let single = Lts::new(1, 0, []).unwrap();
        assert_eq!(
            stats(&single),
            Stats {
                states: 1,
                transitions: 0,
                distinct_visible_labels: 0,
                tau_transitions: 0,
                deadlock_states: 1
            }
        );
        assert_eq!(
            stats(&sync_loop()),
            Stats {
                states: 2,
                transitions: 2,
                distinct_visible_labels: 2,
                tau_transitions: 0,
                deadlock_states: 0
            }
        );
    }

    #[test]
    fn storage_is_canonical() {
        let a = Lts::new(2, 0, [(1, lab("b"), 0), (0, lab("a"), 1), (0, lab("a"), 1)]).unwrap();
        assert_eq!(a.transitions().len(), 3);
        assert_eq!(a.labels(), &[lab("a"), lab("b")]);
        assert_eq!(normalize(&a).transitions().len(), 2);
        assert!(Lts::new(2, 2, []).is_err());
        assert!(Lts::new(2, 0, [(0, lab("a"), 2)]).is_err());
    }

    #[test]
    fn normalize_drops_unreachable_and_is_idempotent() {
        let l = Lts::new(4, 2, [(2, lab("a"), 3), (3, lab("b"), 2), (0, lab("c"), 1)]).unwrap();
        let n = normalize(&l);
        assert_eq!(n.states(), 2);
        assert_eq!(n.initial(), 0);
        assert_eq!(normalize(&n), n);
        assert!(sync_loop().is_normalized());
    }

    fn random_lts(rng: &mut ChaCha8Rng, states: usize, labels: &[&str], edges: usize) -> Lts {
        let t: Vec<_> = (0..edges)
            .map(|_| {
                let l = labels[rng.gen_range(0..labels.len())];
                (rng.gen_range(0..states), lab(l), rng.gen_range(0..states))
            })
            .collect();
        Lts::new(states, 0, t).unwrap()
    }

    fn permute(l: &Lts, rng: &mut ChaCha8Rng) -> Lts {
        let mut perm: Vec<usize> = (0..l.states()).collect();
        perm.shuffle(rng);
        let t: Vec<_> = l
            .iter()
            .map(|(s, lb, d)| (perm[s], lb.clone(), perm[d]))
            .collect();
        Lts::new(l.states(), perm[l.initial()], t).unwrap()
    }

    #[test]
    fn normalize_is_invariant_under_renumbering() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for round in 0..300 {
            // alternate between deterministic-ish and heavily nondeterministic graphs
            let alphabet: &[&str] = if round % 2 == 0 {
                &["a", "b", "c", "i"]
            } else {
                &["a", "i"]
            };
            let l = random_lts(&mut rng, 10, alphabet, 18);
            let p = permute(&l, &mut rng);
            assert_eq!(normalize(&l), normalize(&p), "round {round}");
        }
    }

    #[test]
    fn renumbering_ignores_unreachable_states_and_duplicates() {
        // the edge from unreachable state 3 must not decide which sibling comes first
        let l = Lts::new(
            4,
            0,
            [
                (0, lab("a"), 1),
                (0, lab("a"), 2),
                (0, lab("i"), 1),
                (3, lab("z"), 2),
            ],
        )
        .unwrap();
        let once = normalize(&l);
        assert_eq!(once.states(), 3);
        assert_eq!(normalize(&once), once);
        let dup = Lts::new(
            3,
            0,
            [
                (0, lab("i"), 1),
                (0, lab("i"), 2),
                (1, lab("a"), 2),
                (2, lab("a"), 2),
                (2, lab("a"), 2),
            ],
        )
        .unwrap();
        let once = normalize(&dup);
        assert_eq!(normalize(&once), once);
    }

    #[test]
    fn normalize_idempotent_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..12);
            let e = rng.gen_range(0..30);
            let l = random_lts(&mut rng, n, &["a", "b", "i"], e);
            let once = normalize(&l);
            assert_eq!(normalize(&once), once);
        }
    }
}
