//! The BBA* agreement model: parameters, node and counter processes in two
//! equivalent styles, and the network that connects them.
//!
//! Each node runs rounds. A round starts when the environment proposes a
//! block (bit 0 or 1), continues through the three voting steps
//! (coin fixed to 0, coin fixed to 1, coin genuinely flipped) and ends when
//! the block is committed or replaced by the empty block. Every step is a
//! voting phase between two barriers, after which the node reads the vote
//! totals from its counter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{
    Arm, Cond, Expr, Instance, KernelError, Offer, Pattern, ProcessDef, ProcessNetwork, Role,
    SyncRule, Term,
};
use crate::lts::gates::*;
use crate::lts::{Bit, Pid, Prob, Step, Tag, Value, MAX_PID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    /// Helper processes and tail calls.
    #[serde(alias = "rec")]
    Recursive,
    /// Nested loops with breaks.
    Loop,
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::Recursive => "recursive",
            Style::Loop => "loop",
        })
    }
}

impl FromStr for Style {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loop" => Ok(Style::Loop),
            "rec" | "recursive" => Ok(Style::Recursive),
            _ => Err(ConfigError::Style(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("node count {0} is outside 1..={MAX_PID}")]
    Nodes(u8),
    #[error("honest count {h} exceeds node count {n}")]
    Honest { h: u8, n: u8 },
    #[error("threshold {t} is outside 1..={n}")]
    Threshold { t: u8, n: u8 },
    #[error("probability {name} = {value} must lie strictly between 0 and 1")]
    Prob { name: &'static str, value: Prob },
    #[error("unknown style `{0}` (expected loop or rec)")]
    Style(String),
    #[error("invalid configuration document: {0}")]
    Json(String),
}

/// Model parameters. `c` (committee size) is recorded for reference only;
/// committee membership is driven by `pv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Config {
    pub n: u8,
    pub h: u8,
    pub t: u8,
    pub c: u8,
    pub pv: Prob,
    pub ph: Prob,
    pub style: Style,
}

pub const DEFAULT_PV: Prob = match Prob::from_ticks_const(7500) {
    Some(p) => p,
    None => unreachable!(),
};
pub const DEFAULT_PH: Prob = match Prob::from_ticks_const(7424) {
    Some(p) => p,
    None => unreachable!(),
};

impl Default for Config {
    fn default() -> Self {
        Config {
            n: 4,
            h: 4,
            t: 3,
            c: 3,
            pv: DEFAULT_PV,
            ph: DEFAULT_PH,
            style: Style::Loop,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: Option<u8>,
    h: Option<u8>,
    t: Option<u8>,
    c: Option<u8>,
    pv: Option<Prob>,
    ph: Option<Prob>,
    style: Option<Style>,
}

impl Config {
    /// `n` nodes of which the first `h` are honest, threshold `t`.
    pub fn new(n: u8, h: u8, t: u8) -> Result<Config, ConfigError> {
        let cfg = Config {
            n,
            h,
            t,
            ..Config::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_style(mut self, style: Style) -> Config {
        self.style = style;
        self
    }

    /// Threshold used when none is given: 3, capped by the node count.
    pub fn default_threshold(n: u8) -> u8 {
        n.min(3)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 || self.n > MAX_PID {
            return Err(ConfigError::Nodes(self.n));
        }
        if self.h > self.n {
            return Err(ConfigError::Honest {
                h: self.h,
                n: self.n,
            });
        }
        if self.t == 0 || self.t > self.n {
            return Err(ConfigError::Threshold {
                t: self.t,
                n: self.n,
            });
        }
        for (name, value) in [("pv", self.pv), ("ph", self.ph)] {
            if value.ticks() == 0 || value.ticks() >= crate::lts::PROB_SCALE {
                return Err(ConfigError::Prob { name, value });
            }
        }
        Ok(())
    }

    /// Reads a JSON document with any subset of the fields `n, h, t, c, pv,
    /// ph, style`; probabilities are decimal strings. Missing fields take
    /// their defaults (`h = n`, `t` capped by `n`).
    pub fn from_json(text: &str) -> Result<Config, ConfigError> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        let d = Config::default();
        let n = raw.n.unwrap_or(d.n);
        let cfg = Config {
            n,
            h: raw.h.unwrap_or(n),
            t: raw.t.unwrap_or_else(|| Config::default_threshold(n)),
            c: raw.c.unwrap_or(d.c),
            pv: raw.pv.unwrap_or(d.pv),
            ph: raw.ph.unwrap_or(d.ph),
            style: raw.style.unwrap_or(d.style),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pids(&self) -> impl Iterator<Item = Pid> {
        (1..=u32::from(self.n)).map(|i| Pid::new(i).expect("validated node count"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Morality {
    Honest,
    /// Attacking this round.
    Malicious,
    /// Able to attack, but behaving like an honest node this round.
    Disguised,
}

/// Honest nodes carry the lowest ids. The others attack exactly in rounds
/// whose proposed block carries bit 1.
pub fn morality(id: Pid, blk: Bit, cfg: &Config) -> Morality {
    if id.get() <= cfg.h {
        Morality::Honest
    } else if blk == Bit::ONE {
        Morality::Malicious
    } else {
        Morality::Disguised
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    CommitProposed,
    CommitEmpty,
    /// Fix the coin to the bit and move to the step.
    Continue(Bit, Step),
    /// Flip a fair coin and move to the step.
    Flip(Step),
}

/// Test of one row of the decision table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    ZerosReach,
    OnesReach,
    Otherwise,
}

/// Rows of the decision table for `step`, tried in order.
pub fn decision_rows(step: Step) -> [(Threshold, Decision); 3] {
    use Decision::*;
    use Threshold::*;
    match step.get() {
        0 => [
            (ZerosReach, CommitProposed),
            (OnesReach, Continue(Bit::ONE, Step::ONE)),
            (Otherwise, Continue(Bit::ZERO, Step::ONE)),
        ],
        1 => [
            (OnesReach, CommitEmpty),
            (ZerosReach, Continue(Bit::ZERO, Step::TWO)),
            (Otherwise, Continue(Bit::ONE, Step::TWO)),
        ],
        _ => [
            (ZerosReach, Continue(Bit::ZERO, Step::ZERO)),
            (OnesReach, Continue(Bit::ONE, Step::ZERO)),
            (Otherwise, Flip(Step::ZERO)),
        ],
    }
}

pub fn decide(s: Step, k0: u8, k1: u8, t: u8) -> Decision {
    decision_rows(s)
        .into_iter()
        .find(|(test, _)| match test {
            Threshold::ZerosReach => k0 >= t,
            Threshold::OnesReach => k1 >= t,
            Threshold::Otherwise => true,
        })
        .map(|(_, d)| d)
        .expect("last row always applies")
}

pub fn one_minus(p: Prob) -> Prob {
    p.one_minus()
}

/// Deliberate model faults, used to show that the property suite notices them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Counters keep their totals across TALLY events.
    pub no_counter_reset: bool,
    /// Honest committee members always vote 1.
    pub honest_votes_one: bool,
}

fn var(x: &str) -> Expr {
    Expr::var(x)
}

fn id_offer() -> Offer {
    Offer::send(var("id"))
}

fn bits() -> [Value; 2] {
    [Bit::ZERO.into(), Bit::ONE.into()]
}

fn counts(n: u8) -> Vec<Value> {
    (0..=n).map(Value::Count).collect()
}

/// `when attacking then a else b`, on the bit variable `attacking`.
fn if_attacking(then: Term, otherwise: Term) -> Term {
    Term::case(
        var("attacking"),
        vec![Arm::is(Bit::ONE, then), Arm::otherwise(otherwise)],
    )
}

struct Builder<'a> {
    cfg: &'a Config,
    faults: Faults,
}

impl Builder<'_> {
    fn count(&self, k: u8) -> Expr {
        Expr::val(Value::Count(k))
    }

    /// `attacking := (morality(id, blk) = Malicious)`, resolved per block bit.
    fn set_attacking(&self, id: Pid) -> Term {
        let arms = [Bit::ZERO, Bit::ONE]
            .into_iter()
            .map(|blk| {
                let attacking = morality(id, blk, self.cfg) == Morality::Malicious;
                let v = if attacking { Bit::ONE } else { Bit::ZERO };
                Arm::is(blk, Term::assign("attacking", Expr::val(v)))
            })
            .collect();
        Term::case(var("blk"), arms)
    }

    fn receive(&self) -> Term {
        Term::emit(RECEIVE_BLOCK_PROPOSAL, vec![Offer::bind("blk", bits())])
    }

    fn set_bit(&self, step: Expr) -> Term {
        Term::emit(
            SET_BIT,
            vec![id_offer(), Offer::send(step), Offer::send(var("B"))],
        )
    }

    /// Chooses `B` by a coin biased by `p`; attackers fix it to 1.
    fn coin(&self, p: Expr) -> Term {
        if_attacking(
            Term::assign("B", Expr::val(Bit::ONE)),
            Term::Alt(vec![
                Term::Seq(vec![
                    Term::emit(P_ZERO, vec![id_offer(), Offer::send(p.clone())]),
                    Term::assign("B", Expr::val(Bit::ZERO)),
                ]),
                Term::Seq(vec![
                    Term::emit(P_ONE, vec![id_offer(), Offer::send(p.one_minus())]),
                    Term::assign("B", Expr::val(Bit::ONE)),
                ]),
            ]),
        )
    }

    fn fix_bit(&self, b: Bit) -> Term {
        if_attacking(
            Term::assign("B", Expr::val(Bit::ONE)),
            Term::assign("B", Expr::val(b)),
        )
    }

    fn flip_coin(&self, s: Step, p: Prob) -> Term {
        Term::Seq(vec![
            Term::assign("S", Expr::val(s)),
            self.coin(Expr::val(p)),
            self.set_bit(var("S")),
        ])
    }

    fn fix_coin(&self, b: Bit, s: Step) -> Term {
        Term::Seq(vec![
            Term::assign("S", Expr::val(s)),
            self.fix_bit(b),
            self.set_bit(var("S")),
        ])
    }

    /// One voting phase between the two barriers.
    fn phase(&self) -> Term {
        let vote = if self.faults.honest_votes_one {
            Term::assign("vote", Expr::val(Bit::ONE))
        } else {
            if_attacking(
                Term::assign("vote", Expr::val(Bit::ONE)),
                Term::assign("vote", var("B")),
            )
        };
        Term::Seq(vec![
            Term::emit(SYNC, vec![Offer::send(Expr::val(Tag::Begin))]),
            Term::Alt(vec![
                Term::Seq(vec![
                    Term::emit(P_IN, vec![id_offer(), Offer::send(Expr::val(self.cfg.pv))]),
                    vote,
                    Term::emit(SELF_PROPAGATE, vec![id_offer(), Offer::send(var("vote"))]),
                    Term::emit(PROPAGATE, vec![id_offer(), Offer::send(var("vote"))]),
                ]),
                Term::emit(
                    P_OUT,
                    vec![id_offer(), Offer::send(Expr::val(self.cfg.pv).one_minus())],
                ),
            ]),
            Term::emit(SYNC, vec![Offer::send(Expr::val(Tag::End))]),
        ])
    }

    fn tally(&self) -> Term {
        let n = self.cfg.n;
        Term::emit(
            TALLY,
            vec![
                id_offer(),
                Offer::bind("k0", counts(n)),
                Offer::bind("k1", counts(n)),
            ],
        )
    }

    fn guard(&self, test: Threshold) -> Option<Cond> {
        let t = self.count(self.cfg.t);
        match test {
            Threshold::ZerosReach => Some(var("k0").ge(t)),
            Threshold::OnesReach => Some(var("k1").ge(t)),
            Threshold::Otherwise => None,
        }
    }

    /// Case arms deciding after the tally of `step`, with `act` giving the
    /// continuation of each decision.
    fn decision_arms(
        &self,
        step: Step,
        pattern: Pattern,
        act: &impl Fn(Decision) -> Term,
    ) -> Vec<Arm> {
        decision_rows(step)
            .into_iter()
            .map(|(test, d)| Arm::new(pattern.clone(), self.guard(test), act(d)))
            .collect()
    }

    fn loop_node(&self, id: Pid) -> Vec<ProcessDef> {
        let act = |d: Decision| match d {
            Decision::CommitProposed => Term::Seq(vec![
                Term::emit(COMMIT_PROPOSED_BLOCK, vec![]),
                Term::brk("steps"),
            ]),
            Decision::CommitEmpty => Term::Seq(vec![
                Term::emit(COMMIT_EMPTY_BLOCK, vec![]),
                Term::brk("steps"),
            ]),
            Decision::Continue(b, s) => self.fix_coin(b, s),
            Decision::Flip(s) => self.flip_coin(s, Prob::HALF),
        };
        let arms = Step::ALL
            .into_iter()
            .flat_map(|s| self.decision_arms(s, Pattern::Is(s.into()), &act))
            .collect();
        let body = Term::looping(
            "rounds",
            Term::Seq(vec![
                self.receive(),
                self.set_attacking(id),
                self.flip_coin(Step::ZERO, self.cfg.ph),
                Term::looping(
                    "steps",
                    Term::Seq(vec![self.phase(), self.tally(), Term::case(var("S"), arms)]),
                ),
            ]),
        );
        vec![ProcessDef::new(&node_process(id), &["id"], body)]
    }

    /// Tail-call unfolding of the loop style: N receives a block, N1 draws a
    /// coin, N2 runs a voting phase, N3 reads the tally and N4 decides the
    /// third step.
    fn recursive_node(&self, id: Pid) -> Vec<ProcessDef> {
        let name = node_process(id);
        let [n, n1, n2, n3, n4] = ["", "_1", "_2", "_3", "_4"].map(|s| format!("{name}{s}"));
        let att = || var("attacking");
        let act = |d: Decision| match d {
            Decision::CommitProposed => Term::Seq(vec![
                Term::emit(COMMIT_PROPOSED_BLOCK, vec![]),
                Term::call(&n, vec![var("id")]),
            ]),
            Decision::CommitEmpty => Term::Seq(vec![
                Term::emit(COMMIT_EMPTY_BLOCK, vec![]),
                Term::call(&n, vec![var("id")]),
            ]),
            Decision::Continue(b, s) => Term::Seq(vec![
                self.fix_bit(b),
                self.set_bit(Expr::val(s)),
                Term::call(&n2, vec![var("id"), att(), Expr::val(s), var("B")]),
            ]),
            Decision::Flip(s) => Term::call(
                &n1,
                vec![var("id"), att(), Expr::val(s), Expr::val(Prob::HALF)],
            ),
        };
        let mut n3_arms = Vec::new();
        for s in [Step::ZERO, Step::ONE] {
            n3_arms.extend(self.decision_arms(s, Pattern::Is(s.into()), &act));
        }
        n3_arms.push(Arm::is(
            Step::TWO,
            Term::call(&n4, vec![var("id"), att(), var("k0"), var("k1")]),
        ));
        vec![
            ProcessDef::new(
                &n,
                &["id"],
                Term::Seq(vec![
                    self.receive(),
                    self.set_attacking(id),
                    Term::call(
                        &n1,
                        vec![
                            var("id"),
                            att(),
                            Expr::val(Step::ZERO),
                            Expr::val(self.cfg.ph),
                        ],
                    ),
                ]),
            ),
            ProcessDef::new(
                &n1,
                &["id", "attacking", "S", "P"],
                Term::Seq(vec![
                    self.coin(var("P")),
                    self.set_bit(var("S")),
                    Term::call(&n2, vec![var("id"), att(), var("S"), var("B")]),
                ]),
            ),
            ProcessDef::new(
                &n2,
                &["id", "attacking", "S", "B"],
                Term::Seq(vec![
                    self.phase(),
                    Term::call(&n3, vec![var("id"), att(), var("S")]),
                ]),
            ),
            ProcessDef::new(
                &n3,
                &["id", "attacking", "S"],
                Term::Seq(vec![self.tally(), Term::case(var("S"), n3_arms)]),
            ),
            ProcessDef::new(
                &n4,
                &["id", "attacking", "k0", "k1"],
                Term::case(
                    Expr::val(Step::TWO),
                    self.decision_arms(Step::TWO, Pattern::Any, &act),
                ),
            ),
        ]
    }

    fn count_vote(&self, on_zero: Term, on_one: Term) -> Term {
        Term::case(
            var("b"),
            vec![Arm::is(Bit::ZERO, on_zero), Arm::otherwise(on_one)],
        )
    }

    fn room(&self) -> Term {
        Term::Guard(var("K0").plus(var("K1")).lt(self.count(self.cfg.n)))
    }

    fn other_pids(&self, id: Pid) -> Vec<Value> {
        self.cfg
            .pids()
            .filter(|&p| p != id)
            .map(Value::from)
            .collect()
    }

    fn counter(&self, id: Pid) -> ProcessDef {
        let one = || self.count(1);
        let name = counter_process(id);
        let self_vote = Term::emit(SELF_PROPAGATE, vec![id_offer(), Offer::bind("b", bits())]);
        let other_vote = Term::emit(
            PROPAGATE,
            vec![
                Offer::bind("j", self.other_pids(id)),
                Offer::bind("b", bits()),
            ],
        );
        let tally = Term::emit(
            TALLY,
            vec![id_offer(), Offer::send(var("K0")), Offer::send(var("K1"))],
        );
        match self.cfg.style {
            Style::Loop => {
                let incr = || {
                    self.count_vote(
                        Term::assign("K0", var("K0").plus(one())),
                        Term::assign("K1", var("K1").plus(one())),
                    )
                };
                let reset = if self.faults.no_counter_reset {
                    Term::Seq(vec![])
                } else {
                    Term::Seq(vec![
                        Term::assign("K0", self.count(0)),
                        Term::assign("K1", self.count(0)),
                    ])
                };
                let body = Term::looping(
                    "votes",
                    Term::Alt(vec![
                        Term::Seq(vec![self.room(), self_vote, incr()]),
                        Term::Seq(vec![self.room(), other_vote, incr()]),
                        Term::Seq(vec![tally, reset]),
                    ]),
                );
                ProcessDef::new(&name, &["id", "K0", "K1"], body)
            }
            Style::Recursive => {
                let again = |k0: Expr, k1: Expr| Term::call(&name, vec![var("id"), k0, k1]);
                let incr = || {
                    self.count_vote(
                        again(var("K0").plus(one()), var("K1")),
                        again(var("K0"), var("K1").plus(one())),
                    )
                };
                let after_tally = if self.faults.no_counter_reset {
                    again(var("K0"), var("K1"))
                } else {
                    again(self.count(0), self.count(0))
                };
                let body = Term::Alt(vec![
                    Term::Seq(vec![self.room(), self_vote, incr()]),
                    Term::Seq(vec![self.room(), other_vote, incr()]),
                    Term::Seq(vec![tally, after_tally]),
                ]);
                ProcessDef::new(&name, &["id", "K0", "K1"], body)
            }
        }
    }

    fn node(&self, id: Pid) -> Vec<ProcessDef> {
        match self.cfg.style {
            Style::Loop => self.loop_node(id),
            Style::Recursive => self.recursive_node(id),
        }
    }
}

fn node_process(id: Pid) -> String {
    format!("NODE_{}", id.get())
}

fn counter_process(id: Pid) -> String {
    format!("COUNTER_{}", id.get())
}

/// Definitions of the node process `id`; the first one is its entry.
pub fn node_term(id: Pid, cfg: &Config) -> Vec<ProcessDef> {
    Builder {
        cfg,
        faults: Faults::default(),
    }
    .node(id)
}

pub fn counter_term(id: Pid, cfg: &Config) -> ProcessDef {
    Builder {
        cfg,
        faults: Faults::default(),
    }
    .counter(id)
}

/// Participation rule of every model gate.
pub const SYNC_TABLE: [(&str, SyncRule); 12] = [
    (SYNC, SyncRule::AllNodes),
    (RECEIVE_BLOCK_PROPOSAL, SyncRule::AllNodes),
    (COMMIT_PROPOSED_BLOCK, SyncRule::AllNodes),
    (COMMIT_EMPTY_BLOCK, SyncRule::AllNodes),
    (SELF_PROPAGATE, SyncRule::PairNodeCounter),
    (TALLY, SyncRule::PairNodeCounter),
    (PROPAGATE, SyncRule::NodeWithOtherCounters),
    (SET_BIT, SyncRule::Local),
    (P_IN, SyncRule::Local),
    (P_OUT, SyncRule::Local),
    (P_ZERO, SyncRule::Local),
    (P_ONE, SyncRule::Local),
];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// `n` nodes followed by `n` counters.
pub fn build_network(cfg: &Config) -> Result<ProcessNetwork, ModelError> {
    build_network_with_faults(cfg, Faults::default())
}

#[doc(hidden)]
pub fn build_network_with_faults(
    cfg: &Config,
    faults: Faults,
) -> Result<ProcessNetwork, ModelError> {
    cfg.validate()?;
    let b = Builder { cfg, faults };
    let mut defs = Vec::new();
    let mut instances = Vec::new();
    for id in cfg.pids() {
        defs.extend(b.node(id));
        instances.push(Instance::new(
            format!("node{}", id.get()),
            Role::Node(id),
            node_process(id),
            vec![id.into()],
        ));
    }
    for id in cfg.pids() {
        defs.push(b.counter(id));
        instances.push(Instance::new(
            format!("counter{}", id.get()),
            Role::Counter(id),
            counter_process(id),
            vec![id.into(), Value::Count(0), Value::Count(0)],
        ));
    }
    Ok(ProcessNetwork::new(defs, instances, &SYNC_TABLE)?)
}

fn local_table() -> Vec<(&'static str, SyncRule)> {
    SYNC_TABLE
        .iter()
        .map(|&(g, _)| (g, SyncRule::Local))
        .collect()
}

/// Node `id` on its own, every gate free: the environment answers any
/// tally with any pair of totals up to `n`.
pub fn node_component(cfg: &Config, id: Pid) -> Result<ProcessNetwork, ModelError> {
    cfg.validate()?;
    let b = Builder {
        cfg,
        faults: Faults::default(),
    };
    let inst = Instance::new(
        format!("node{}", id.get()),
        Role::Node(id),
        node_process(id),
        vec![id.into()],
    );
    Ok(ProcessNetwork::new(b.node(id), vec![inst], &local_table())?)
}

/// Counter `id` on its own, every gate free.
pub fn counter_component(cfg: &Config, id: Pid) -> Result<ProcessNetwork, ModelError> {
    cfg.validate()?;
    let b = Builder {
        cfg,
        faults: Faults::default(),
    };
    let inst = Instance::new(
        format!("counter{}", id.get()),
        Role::Counter(id),
        counter_process(id),
        vec![id.into(), Value::Count(0), Value::Count(0)],
    );
    Ok(ProcessNetwork::new(
        vec![b.counter(id)],
        vec![inst],
        &local_table(),
    )?)
}
