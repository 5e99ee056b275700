//! Property suite: reference LTSs, slice pipelines, an inevitability
//! checker and the suite runner.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::equiv::{equivalent, minimize, Relation};
use crate::explore::{bfs_tree, deadlocks, generate, ExploreError, Limits, Trace};
use crate::kernel::{
    Expr, Instance, KernelError, Offer, ProcessDef, ProcessNetwork, Role, SyncRule, Term,
};
use crate::lts::gates::{
    COMMIT_EMPTY_BLOCK, COMMIT_PROPOSED_BLOCK, PROPAGATE, P_IN, P_ONE, P_OUT, P_ZERO,
    RECEIVE_BLOCK_PROPOSAL, SELF_PROPAGATE, SYNC, TALLY,
};
use crate::lts::{
    hide, hide_all_but, parse_label, read_aut, rename, write_aut, AutError, Label, LabelMatcher,
    Lts, Pid, RenameRules, SliceError, Value, MAX_PID,
};
use crate::model::{build_network_with_faults, Config, Faults, ModelError, Style};

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("baseline {path}: {source}")]
    Baseline {
        path: String,
        #[source]
        source: AutError,
    },
    #[error("baseline {path}: {source}")]
    BaselineIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn label(text: &str) -> Label {
    parse_label(text).expect("reference labels are well formed")
}

/// `SYNC !BEGIN` followed by `SYNC !END`, forever.
pub fn ref_sync() -> Lts {
    Lts::new(
        2,
        0,
        [(0, label("SYNC !BEGIN"), 1), (1, label("SYNC !END"), 0)],
    )
    .expect("two states")
}

/// Every node tallies once, in any order, then the round starts over. States
/// are the proper subsets of `1..=n` that have tallied so far.
pub fn ref_hypercube(n: u8) -> Lts {
    assert!((1..=16).contains(&n), "hypercube dimension out of range");
    let full = (1usize << n) - 1;
    let mut ts = Vec::new();
    for set in 0..full {
        for i in 0..n {
            if set & (1 << i) == 0 {
                let next = set | (1 << i);
                let text = format!("TALLY !{} !X !X", i + 1);
                ts.push((set, label(&text), if next == full { 0 } else { next }));
            }
        }
    }
    crate::lts::normalize(&Lts::new(full, 0, ts).expect("subset indices are in range"))
}

const TAU_GATE: &str = "TAU";
const BARRIER: &str = "END_PAR";

/// `tau; alt tau [] tau; SELF_PROPAGATE !id !X end alt`.
fn selfprop_body() -> Term {
    let tau = || Term::emit(TAU_GATE, vec![Offer::send(Expr::var("id"))]);
    Term::Seq(vec![
        tau(),
        Term::Alt(vec![
            tau(),
            Term::Seq(vec![
                tau(),
                Term::emit(
                    SELF_PROPAGATE,
                    vec![
                        Offer::send(Expr::var("id")),
                        Offer::send(Expr::val(Value::x())),
                    ],
                ),
            ]),
        ]),
    ])
}

/// Nodes `first..=last`, each running `p(id)` once or in a loop whose
/// rounds are separated by a barrier over all of them.
fn selfprop_lts(first: u8, last: u8, looping: bool) -> Result<Lts, CheckError> {
    assert!(
        first >= 1 && last <= MAX_PID && first <= last,
        "node range out of bounds"
    );
    let body = if looping {
        Term::looping(
            "round",
            Term::Seq(vec![selfprop_body(), Term::emit(BARRIER, vec![])]),
        )
    } else {
        selfprop_body()
    };
    let defs = vec![ProcessDef::new("P", &["id"], body)];
    let instances = (first..=last)
        .map(|i| {
            let pid = Pid::new(u32::from(i)).expect("checked range");
            Instance::new(format!("p{i}"), Role::Node(pid), "P", vec![pid.into()])
        })
        .collect();
    let table = [
        (TAU_GATE, SyncRule::Local),
        (SELF_PROPAGATE, SyncRule::Local),
        (BARRIER, SyncRule::AllNodes),
    ];
    let net = ProcessNetwork::new(defs, instances, &table)?;
    let l = generate(&net, Limits::default())?;
    Ok(crate::lts::normalize(&hide(
        &l,
        &LabelMatcher::gates(&[TAU_GATE, BARRIER])?,
    )?))
}

/// Nodes `1..=n` each run [`selfprop_component`] in parallel; the round
/// restarts once all have finished.
pub fn ref_selfprop(n: u8) -> Result<Lts, CheckError> {
    selfprop_lts(1, n, true)
}

/// One round of `p(id)` alone, ending in a terminal state.
pub fn selfprop_component(id: u8) -> Result<Lts, CheckError> {
    selfprop_lts(id, id, false)
}

/// Observable interface of one round: a block proposal is received, then
/// the nodes internally settle on committing it or the empty block. In the
/// corrupted variant a proposal carrying bit 1 can only end empty.
pub fn ref_interface(corrupted: bool) -> Lts {
    let (start, deciding, proposed, empty) = (0, 1, 2, 3);
    let one_target = if corrupted { empty } else { deciding };
    Lts::new(
        4,
        start,
        [
            (start, label("RECEIVE_BLOCK_PROPOSAL !0"), deciding),
            (start, label("RECEIVE_BLOCK_PROPOSAL !1"), one_target),
            (deciding, Label::Tau, proposed),
            (deciding, Label::Tau, empty),
            (proposed, label("COMMIT_PROPOSED_BLOCK"), start),
            (empty, label("COMMIT_EMPTY_BLOCK"), start),
        ],
    )
    .map(|l| crate::lts::normalize(&l))
    .expect("four states")
}

/// Keeps the gates in `keep`, applies `renames`, and minimizes for
/// branching bisimulation.
pub fn slice(l: &Lts, keep: &[&str], renames: &[(&str, &str)]) -> Result<Lts, CheckError> {
    let hidden = hide_all_but(l, &LabelMatcher::gates(keep)?)?;
    let renamed = rename(&hidden, &RenameRules::new(renames)?)?;
    Ok(minimize(&crate::lts::normalize(&renamed), Relation::Branching).0)
}

pub fn sync_slice(l: &Lts) -> Result<Lts, CheckError> {
    slice(l, &[SYNC], &[])
}

pub fn tally_slice(l: &Lts) -> Result<Lts, CheckError> {
    slice(
        l,
        &[TALLY],
        &[(r"TALLY !(\d+) !\d+ !\d+", "TALLY !$1 !X !X")],
    )
}

pub fn selfprop_slice(l: &Lts) -> Result<Lts, CheckError> {
    slice(
        l,
        &[SELF_PROPAGATE],
        &[(r"SELF_PROPAGATE !(\d+) !\d", "SELF_PROPAGATE !$1 !X")],
    )
}

pub fn interface_slice(l: &Lts) -> Result<Lts, CheckError> {
    slice(
        l,
        &[
            RECEIVE_BLOCK_PROPOSAL,
            COMMIT_PROPOSED_BLOCK,
            COMMIT_EMPTY_BLOCK,
        ],
        &[],
    )
}

/// How the property of [`inevitable`] can be escaped after a trigger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Escape {
    /// A deadlock reached without a goal transition.
    Deadlock(Trace),
    /// A forbidden transition, the last label of the trace.
    Forbidden(Trace),
    /// A cycle that never meets a goal transition.
    Lasso { stem: Trace, cycle: Trace },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    /// Path from the initial state through the trigger transition.
    pub trigger: Trace,
    pub escape: Escape,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "after [{}]: ", self.trigger)?;
        match &self.escape {
            Escape::Deadlock(t) => write!(f, "deadlock after [{t}]"),
            Escape::Forbidden(t) => write!(f, "forbidden event in [{t}]"),
            Escape::Lasso { stem, cycle } => write!(f, "cycle [{cycle}] after [{stem}]"),
        }
    }
}

/// `None` when the property holds.
pub type Inevitability = Option<Counterexample>;

/// After every transition matching `x`, every maximal path must reach a
/// transition matching `z` with no transition matching `y` (and not `z`)
/// before it. Deadlocks and `z`-free cycles falsify the property.
pub fn inevitable<S: AsRef<str>>(
    l: &Lts,
    x: &[S],
    y: &[S],
    z: &[S],
) -> Result<Inevitability, CheckError> {
    let (x, y, z) = (
        LabelMatcher::new(x)?.mask(l)?,
        LabelMatcher::new(y)?.mask(l)?,
        LabelMatcher::new(z)?.mask(l)?,
    );
    let n = l.states();
    let forbidden = |lab: usize| y[lab] && !z[lab];
    // good: every maximal path from here meets z before any forbidden event
    let mut pending = vec![0usize; n];
    let mut blocked = vec![false; n];
    for s in 0..n {
        for t in l.outgoing(s) {
            if forbidden(t.label) {
                blocked[s] = true;
            } else if !z[t.label] {
                pending[s] += 1;
            }
        }
    }
    let mut good = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|&s| !blocked[s] && l.out_degree(s) > 0 && pending[s] == 0)
        .collect();
    for &s in &queue {
        good[s] = true;
    }
    let pred = l.predecessors();
    while let Some(s) = queue.pop_front() {
        for &(lab, p) in &pred[s] {
            if z[lab] || forbidden(lab) || good[p] || blocked[p] {
                continue;
            }
            pending[p] -= 1;
            if pending[p] == 0 {
                good[p] = true;
                queue.push_back(p);
            }
        }
    }
    let parent = bfs_tree(l);
    let path_to = |s: usize| -> Vec<usize> {
        let mut labels = Vec::new();
        let mut cur = s;
        while let Some((p, lab)) = parent[cur] {
            labels.push(lab);
            cur = p;
        }
        labels.reverse();
        labels
    };
    let mut triggers: Vec<(usize, usize, usize)> = l
        .transitions()
        .iter()
        .filter(|t| x[t.label] && !good[t.dst])
        .map(|t| (path_to(t.src).len(), t.src, t.label))
        .collect();
    triggers.sort_unstable();
    let Some(&(_, src, lab)) = triggers.first() else {
        return Ok(None);
    };
    let dst = l
        .outgoing(src)
        .iter()
        .find(|t| t.label == lab && !good[t.dst])
        .expect("trigger exists")
        .dst;
    let mut trigger = path_to(src);
    trigger.push(lab);
    let trace = |ids: &[usize]| Trace(ids.iter().map(|&i| l.label(i).clone()).collect());
    Ok(Some(Counterexample {
        trigger: trace(&trigger),
        escape: escape_from(l, dst, &good, &z, &forbidden, &trace),
    }))
}

fn escape_from(
    l: &Lts,
    start: usize,
    good: &[bool],
    z: &[bool],
    forbidden: &dyn Fn(usize) -> bool,
    trace: &dyn Fn(&[usize]) -> Trace,
) -> Escape {
    // nearest deadlock or forbidden event inside the bad region
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; l.states()];
    let mut seen = vec![false; l.states()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let back = |parent: &[Option<(usize, usize)>], mut s: usize| {
        let mut ids = Vec::new();
        while s != start {
            let (p, lab) = parent[s].expect("bfs parent");
            ids.push(lab);
            s = p;
        }
        ids.reverse();
        ids
    };
    while let Some(s) = queue.pop_front() {
        if l.is_deadlock(s) {
            return Escape::Deadlock(trace(&back(&parent, s)));
        }
        if let Some(t) = l.outgoing(s).iter().find(|t| forbidden(t.label)) {
            let mut ids = back(&parent, s);
            ids.push(t.label);
            return Escape::Forbidden(trace(&ids));
        }
        for t in l.outgoing(s) {
            if !z[t.label] && !good[t.dst] && !seen[t.dst] {
                seen[t.dst] = true;
                parent[t.dst] = Some((s, t.label));
                queue.push_back(t.dst);
            }
        }
    }
    // every bad state keeps a non-goal step into the bad region: walk to a repeat
    let mut order = vec![usize::MAX; l.states()];
    let mut states = vec![start];
    let mut labels = Vec::new();
    let mut s = start;
    loop {
        order[s] = states.len() - 1;
        let t = l
            .outgoing(s)
            .iter()
            .find(|t| !z[t.label] && !good[t.dst])
            .expect("a bad state without deadlock or forbidden event continues in the bad region");
        labels.push(t.label);
        s = t.dst;
        if order[s] != usize::MAX {
            let k = order[s];
            return Escape::Lasso {
                stem: trace(&labels[..k]),
                cycle: trace(&labels[k..]),
            };
        }
        states.push(s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub id: String,
    pub description: String,
    pub verdict: Outcome,
    pub diagnostic: Option<String>,
    pub seconds: f64,
    pub artifact: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub config: Config,
    pub states: Option<usize>,
    pub transitions: Option<usize>,
    pub properties: Vec<PropertyResult>,
    /// Set when the suite stopped early, e.g. on a generation limit.
    pub aborted: Option<String>,
}

impl PropertyReport {
    pub fn get(&self, id: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.id == id)
    }

    /// No property failed and the suite ran to the end.
    pub fn passed(&self) -> bool {
        self.aborted.is_none() && self.properties.iter().all(|p| p.verdict != Outcome::Fail)
    }

    pub fn table(&self) -> String {
        let width = self
            .properties
            .iter()
            .map(|p| p.id.len())
            .max()
            .unwrap_or(2)
            .max(2);
        let mut out = format!(
            "{:width$}  {:7}  {:>8}  description\n",
            "id", "verdict", "seconds"
        );
        for p in &self.properties {
            out.push_str(&format!(
                "{:width$}  {:7}  {:>8.2}  {}\n",
                p.id,
                p.verdict.to_string(),
                p.seconds,
                p.description
            ));
            if let Some(d) = &p.diagnostic {
                out.push_str(&format!("{:width$}  {d}\n", ""));
            }
        }
        if let Some(a) = &self.aborted {
            out.push_str(&format!("aborted: {a}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub limits: Limits,
    /// Directory of frozen slice baselines; without one those checks are skipped.
    pub baselines: Option<PathBuf>,
    /// Write missing baselines instead of skipping.
    pub freeze: bool,
    #[doc(hidden)]
    pub faults: Faults,
}

/// Slice families without a printed reference, checked against baselines.
const BASELINE_SLICES: [(&str, &str, &[&str]); 3] = [
    (
        "P4",
        "PROPAGATE slice matches its frozen baseline",
        &[PROPAGATE],
    ),
    (
        "P6",
        "P_IN/P_OUT slice matches its frozen baseline",
        &[P_IN, P_OUT],
    ),
    (
        "P7",
        "P_ZERO/P_ONE slice matches its frozen baseline",
        &[P_ZERO, P_ONE],
    ),
];

pub fn baseline_name(id: &str, cfg: &Config) -> String {
    format!("{id}_n{}_h{}_t{}.aut", cfg.n, cfg.h, cfg.t)
}

struct Outcomes(Vec<PropertyResult>);

impl Outcomes {
    fn record(
        &mut self,
        id: &str,
        description: &str,
        f: impl FnOnce() -> Result<Checked, CheckError>,
    ) {
        let start = Instant::now();
        let (verdict, diagnostic, artifact) = match f() {
            Ok(Checked {
                verdict,
                diagnostic,
                artifact,
            }) => (verdict, diagnostic, artifact),
            Err(e) => (Outcome::Fail, Some(e.to_string()), None),
        };
        self.0.push(PropertyResult {
            id: id.to_string(),
            description: description.to_string(),
            verdict,
            diagnostic,
            seconds: start.elapsed().as_secs_f64(),
            artifact,
        });
    }
}

struct Checked {
    verdict: Outcome,
    diagnostic: Option<String>,
    artifact: Option<String>,
}

impl Checked {
    fn from_bool(ok: bool, diagnostic: impl FnOnce() -> String) -> Checked {
        Checked {
            verdict: if ok { Outcome::Pass } else { Outcome::Fail },
            diagnostic: (!ok).then(diagnostic),
            artifact: None,
        }
    }
}

fn compare(slice: &Lts, reference: &Lts) -> Checked {
    let v = equivalent(slice, reference, Relation::Branching);
    Checked::from_bool(v.equal, || {
        format!(
            "slice has {} states, {} transitions; reference {} states; distinguishing trace [{}]",
            slice.states(),
            slice.transitions().len(),
            reference.states(),
            v.diagnostic_trace.unwrap_or_default().join("; ")
        )
    })
}

fn against_baseline(
    slice: &Lts,
    id: &str,
    cfg: &Config,
    opts: &SuiteOptions,
) -> Result<Checked, CheckError> {
    let Some(dir) = &opts.baselines else {
        return Ok(Checked {
            verdict: Outcome::Skipped,
            diagnostic: Some("no baseline directory".into()),
            artifact: None,
        });
    };
    let path = dir.join(baseline_name(id, cfg));
    let shown = path.display().to_string();
    if !path.exists() {
        if !opts.freeze {
            return Ok(Checked {
                verdict: Outcome::Skipped,
                diagnostic: Some(format!("baseline {shown} not found")),
                artifact: None,
            });
        }
        fs::create_dir_all(dir).map_err(|source| CheckError::BaselineIo {
            path: shown.clone(),
            source,
        })?;
        fs::write(&path, write_aut(slice)).map_err(|source| CheckError::BaselineIo {
            path: shown.clone(),
            source,
        })?;
        return Ok(Checked {
            verdict: Outcome::Skipped,
            diagnostic: Some(format!("baseline frozen to {shown}")),
            artifact: Some(shown),
        });
    }
    let text = fs::read_to_string(&path).map_err(|source| CheckError::BaselineIo {
        path: shown.clone(),
        source,
    })?;
    let frozen = read_aut(text.as_bytes()).map_err(|source| CheckError::Baseline {
        path: shown.clone(),
        source,
    })?;
    let mut c = compare(slice, &frozen);
    c.artifact = Some(shown);
    Ok(c)
}

fn p9_patterns(id: u8, step: u8) -> [Vec<String>; 3] {
    [
        vec![format!("SET_BIT !{id} !{step} !.*")],
        vec![
            "RECEIVE_BLOCK_PROPOSAL !.*".into(),
            format!("SET_BIT !{id} !.* !.*"),
        ],
        vec![
            "RECEIVE_BLOCK_PROPOSAL !.*".into(),
            format!("SET_BIT !{id} !{} !.*", step + 1),
        ],
    ]
}

/// The P9 instance for one node and step.
pub fn set_bit_progress(l: &Lts, id: u8, step: u8) -> Result<Inevitability, CheckError> {
    let [x, y, z] = p9_patterns(id, step);
    inevitable(l, &x, &y, &z)
}

pub fn run_suite(cfg: &Config) -> PropertyReport {
    run_suite_with(cfg, &SuiteOptions::default())
}

/// Runs every property in a fixed order. Failures are recorded, not
/// propagated; only a failed generation stops the suite.
pub fn run_suite_with(cfg: &Config, opts: &SuiteOptions) -> PropertyReport {
    let mut report = PropertyReport {
        config: cfg.clone(),
        states: None,
        transitions: None,
        properties: Vec::new(),
        aborted: None,
    };
    let l = match build_network_with_faults(cfg, opts.faults)
        .map_err(CheckError::from)
        .and_then(|net| Ok(generate(&net, opts.limits)?))
    {
        Ok(l) => l,
        Err(e) => {
            report.aborted = Some(e.to_string());
            return report;
        }
    };
    report.states = Some(l.states());
    report.transitions = Some(l.transitions().len());
    let mut out = Outcomes(Vec::new());
    out.record("P1", "no reachable deadlock", || {
        let d = deadlocks(&l);
        Ok(Checked::from_bool(d.is_empty(), || {
            format!("{} deadlocks, first after [{}]", d.len(), d[0].1)
        }))
    });
    out.record("P2", "SYNC slice alternates BEGIN and END", || {
        Ok(compare(&sync_slice(&l)?, &ref_sync()))
    });
    out.record("P3", "TALLY slice is the cyclic hypercube", || {
        Ok(compare(&tally_slice(&l)?, &ref_hypercube(cfg.n)))
    });
    let [p4, p6, p7] = BASELINE_SLICES;
    out.record(p4.0, p4.1, || {
        against_baseline(&slice(&l, p4.2, &[])?, p4.0, cfg, opts)
    });
    out.record(
        "P5",
        "SELF_PROPAGATE slice matches the reference composition",
        || Ok(compare(&selfprop_slice(&l)?, &ref_selfprop(cfg.n)?)),
    );
    for p in [p6, p7] {
        out.record(p.0, p.1, || {
            against_baseline(&slice(&l, p.2, &[])?, p.0, cfg, opts)
        });
    }
    let corrupted = cfg.h < cfg.t;
    let which = if corrupted { "corrupted" } else { "normal" };
    out.record(
        "P8",
        &format!("block interface matches the {which} reference"),
        || Ok(compare(&interface_slice(&l)?, &ref_interface(corrupted))),
    );
    for id in 1..=cfg.n {
        for step in 0..2 {
            out.record(
                &format!("P9.{id}.{step}"),
                &format!("after SET_BIT !{id} !{step}, SET_BIT !{id} !{} or a new proposal is inevitable", step + 1),
                || {
                    let cex = set_bit_progress(&l, id, step)?;
                    Ok(Checked::from_bool(cex.is_none(), || cex.map(|c| c.to_string()).unwrap_or_default()))
                },
            );
        }
    }
    out.record(
        "STYLE-EQ",
        "recursive and loop styles are strongly bisimilar",
        || {
            let other = Config {
                style: if cfg.style == Style::Loop {
                    Style::Recursive
                } else {
                    Style::Loop
                },
                ..cfg.clone()
            };
            let m = generate(
                &build_network_with_faults(&other, opts.faults)?,
                opts.limits,
            )?;
            let v = equivalent(&l, &m, Relation::Strong);
            Ok(Checked::from_bool(v.equal, || {
                format!(
                    "{} vs {} states; trace [{}]",
                    l.states(),
                    m.states(),
                    v.diagnostic_trace.unwrap_or_default().join("; ")
                )
            }))
        },
    );
    report.properties = out.0;
    report
}
