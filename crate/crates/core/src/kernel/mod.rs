//! Operational semantics of networks of sequential processes with
//! multiway, value-passing gate synchronization.
//!
//! Control steps (assignments, case analysis, guards, loops, calls) never
//! produce transitions of their own. After every event a process runs its
//! deterministic control steps eagerly until it reaches an event, a choice
//! or inaction, so each transition of the network carries a gate.

mod compile;
mod term;

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::lts::{Label, Pid, Value};
use compile::{CArm, CCond, CExpr, COffer, CmpOp, Node, NodeId, Program, STOP};

pub use term::{Arm, Cond, Expr, Offer, Pattern, ProcessDef, Term, Var};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("process `{0}` is defined twice")]
    DuplicateProcess(String),
    #[error("process `{process}` declares parameter `{param}` twice")]
    DuplicateParameter { process: String, param: String },
    #[error("process `{process}` calls unknown process `{callee}`")]
    UnknownProcess { process: String, callee: String },
    #[error("call to `{callee}` passes {found} arguments, expected {expected}")]
    CallArity {
        callee: String,
        expected: usize,
        found: usize,
    },
    #[error("process `{process}` calls `{callee}` outside tail position")]
    CallNotTail { process: String, callee: String },
    #[error("process `{process}` breaks out of `{loop_id}` outside that loop")]
    BreakOutsideLoop { process: String, loop_id: String },
    #[error("process `{process}` may read `{var}` before assigning it")]
    Unassigned { process: String, var: String },
    #[error("process `{process}` has a cycle of control steps without any event")]
    SilentCycle { process: String },
    #[error("gate `{gate}` used with {found} offers, elsewhere with {expected}")]
    GateArity {
        gate: String,
        expected: usize,
        found: usize,
    },
    #[error("gate `{gate}` has no synchronization rule")]
    MissingSync { gate: String },
    #[error("gate `{gate}` has two synchronization rules")]
    DuplicateSync { gate: String },
    #[error("gate `{gate}` selects participants by its first offer but has none")]
    SyncNeedsOffer { gate: String },
    #[error("rule of gate `{gate}` cannot resolve participants for id {pid}")]
    UnresolvedSync { gate: String, pid: u8 },
    #[error("two instances claim role {0}")]
    DuplicateRole(String),
    #[error("instance `{instance}` refers to unknown process `{process}`")]
    UnknownInstanceProcess { instance: String, process: String },
    #[error("instance `{instance}` passes {found} arguments, expected {expected}")]
    InstanceArity {
        instance: String,
        expected: usize,
        found: usize,
    },
    #[error("offer vectors of arity {expected} and {found} cannot synchronize")]
    OfferArity { expected: usize, found: usize },
    #[error("instance `{instance}`: {reason}")]
    Eval { instance: String, reason: String },
    #[error("instance `{instance}` exceeded the control step bound")]
    Divergence { instance: String },
}

/// Role of an instance in participation rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Node(Pid),
    Counter(Pid),
    Other,
}

/// Which instances take part in an event on a gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyncRule {
    /// The emitting instance alone.
    Local,
    /// Every node instance.
    AllNodes,
    /// The node and the counter whose id is the first offer.
    PairNodeCounter,
    /// The node whose id is the first offer and every other counter.
    NodeWithOtherCounters,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub name: String,
    pub role: Role,
    pub process: String,
    pub args: Vec<Value>,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        role: Role,
        process: impl Into<String>,
        args: Vec<Value>,
    ) -> Instance {
        Instance {
            name: name.into(),
            role,
            process: process.into(),
            args,
        }
    }
}

/// Offer of one participant at one position, with sends already evaluated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OfferVal {
    Send(Value),
    /// Sorted, duplicate-free domain.
    Bind(Arc<[Value]>),
}

impl OfferVal {
    pub fn bind(domain: impl IntoIterator<Item = Value>) -> OfferVal {
        let mut d: Vec<Value> = domain.into_iter().collect();
        d.sort();
        d.dedup();
        OfferVal::Bind(d.into())
    }

    fn admits(&self, v: &Value) -> bool {
        match self {
            OfferVal::Send(s) => s == v,
            OfferVal::Bind(d) => d.binary_search(v).is_ok(),
        }
    }
}

/// Solves one multiway synchronization. Each solution lists the agreed value
/// per offer position; every Bind of every participant receives the value
/// at its position. Solutions come in lexicographic value order.
pub fn unify_offers(vectors: &[Vec<OfferVal>]) -> Result<Vec<Vec<Value>>, KernelError> {
    let Some(first) = vectors.first() else {
        return Ok(Vec::new());
    };
    let arity = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != arity) {
        return Err(KernelError::OfferArity {
            expected: arity,
            found: v.len(),
        });
    }
    let mut choices: Vec<Vec<Value>> = Vec::with_capacity(arity);
    for pos in 0..arity {
        let column: Vec<&OfferVal> = vectors.iter().map(|v| &v[pos]).collect();
        let sent = column.iter().find_map(|o| match o {
            OfferVal::Send(v) => Some(v),
            OfferVal::Bind(_) => None,
        });
        let candidates: Vec<Value> = match sent {
            Some(v) => vec![v.clone()],
            None => match column[0] {
                OfferVal::Bind(d) => d.to_vec(),
                OfferVal::Send(_) => unreachable!(),
            },
        };
        let agreed: Vec<Value> = candidates
            .into_iter()
            .filter(|v| column.iter().all(|o| o.admits(v)))
            .collect();
        if agreed.is_empty() {
            return Ok(Vec::new());
        }
        choices.push(agreed);
    }
    Ok(cartesian(&choices))
}

fn cartesian<T: Clone>(choices: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::with_capacity(choices.len())];
    for c in choices {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                c.iter().map(move |x| {
                    let mut p = prefix.clone();
                    p.push(x.clone());
                    p
                })
            })
            .collect();
    }
    out
}

/// Control point and live valuation of one instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalState {
    pc: u32,
    vals: Box<[Value]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalState {
    locals: Box<[LocalState]>,
}

impl GlobalState {
    pub fn len(&self) -> usize {
        self.locals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locals.is_empty()
    }
}

type Env = Vec<Option<Value>>;

/// An event an instance is ready to take.
#[derive(Debug, Clone)]
struct Pending {
    gate: usize,
    offers: Vec<OfferVal>,
    binds: Vec<Option<usize>>,
    next: NodeId,
    env: Env,
}

/// Parallel composition of process instances with per-gate rules.
#[derive(Debug, Clone)]
pub struct ProcessNetwork {
    program: Program,
    instances: Vec<Instance>,
    inst_def: Vec<usize>,
    rules: Vec<SyncRule>,
    nodes: Vec<usize>,
    node_of: Vec<Option<usize>>,
    counter_of: Vec<Option<usize>>,
    counters: Vec<usize>,
}

impl ProcessNetwork {
    pub fn new(
        defs: Vec<ProcessDef>,
        instances: Vec<Instance>,
        sync: &[(&str, SyncRule)],
    ) -> Result<ProcessNetwork, KernelError> {
        let program = compile::compile(&defs)?;
        let mut rules: Vec<Option<SyncRule>> = vec![None; program.gates.len()];
        for (gate, rule) in sync {
            if let Some(g) = program.gate_index(gate) {
                if rules[g].replace(*rule).is_some() {
                    return Err(KernelError::DuplicateSync {
                        gate: gate.to_string(),
                    });
                }
            }
        }
        let rules: Vec<SyncRule> = rules
            .into_iter()
            .enumerate()
            .map(|(g, r)| {
                r.ok_or_else(|| KernelError::MissingSync {
                    gate: program.gates[g].to_string(),
                })
            })
            .collect::<Result<_, _>>()?;

        let slots = usize::from(crate::lts::MAX_PID) + 1;
        let mut node_of = vec![None; slots];
        let mut counter_of = vec![None; slots];
        let mut inst_def = Vec::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            let def = program.def_index(&inst.process).ok_or_else(|| {
                KernelError::UnknownInstanceProcess {
                    instance: inst.name.clone(),
                    process: inst.process.clone(),
                }
            })?;
            let expected = program.defs[def].params.len();
            if expected != inst.args.len() {
                return Err(KernelError::InstanceArity {
                    instance: inst.name.clone(),
                    expected,
                    found: inst.args.len(),
                });
            }
            inst_def.push(def);
            let slot = match inst.role {
                Role::Node(p) => Some(&mut node_of[usize::from(p.get())]),
                Role::Counter(p) => Some(&mut counter_of[usize::from(p.get())]),
                Role::Other => None,
            };
            if let Some(slot) = slot {
                if slot.replace(i).is_some() {
                    return Err(KernelError::DuplicateRole(format!("{:?}", inst.role)));
                }
            }
        }
        let nodes: Vec<usize> = node_of.iter().flatten().copied().collect();
        let counters: Vec<usize> = counter_of.iter().flatten().copied().collect();
        for (g, rule) in rules.iter().enumerate() {
            let gate = program.gates[g].to_string();
            if matches!(
                rule,
                SyncRule::PairNodeCounter | SyncRule::NodeWithOtherCounters
            ) {
                if program.gate_arity[g] == 0 {
                    return Err(KernelError::SyncNeedsOffer { gate });
                }
                if *rule == SyncRule::PairNodeCounter {
                    for (pid, n) in node_of.iter().enumerate() {
                        if n.is_some() && counter_of[pid].is_none() {
                            return Err(KernelError::UnresolvedSync {
                                gate,
                                pid: pid as u8,
                            });
                        }
                    }
                }
            }
        }
        Ok(ProcessNetwork {
            program,
            instances,
            inst_def,
            rules,
            nodes,
            node_of,
            counter_of,
            counters,
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    /// Gates used by the network, sorted.
    pub fn gates(&self) -> impl Iterator<Item = &str> {
        self.program.gates.iter().map(|g| &**g)
    }

    pub fn rule(&self, gate: &str) -> Option<SyncRule> {
        self.program.gate_index(gate).map(|g| self.rules[g])
    }

    /// Number of nodes of the compiled control graph.
    pub fn control_size(&self) -> usize {
        self.program.nodes.len()
    }

    pub fn initial_state(&self) -> Result<GlobalState, KernelError> {
        let mut locals = Vec::with_capacity(self.instances.len());
        for (i, inst) in self.instances.iter().enumerate() {
            let def = &self.program.defs[self.inst_def[i]];
            let mut env: Env = vec![None; self.program.vars.len()];
            for (&p, a) in def.params.iter().zip(&inst.args) {
                env[p] = Some(a.clone());
            }
            let pc = self.settle(i, def.entry, &mut env)?;
            locals.push(self.pack(i, pc, &env)?);
        }
        Ok(GlobalState {
            locals: locals.into(),
        })
    }

    /// Live valuation of instance `i`, by variable name.
    pub fn valuation(&self, s: &GlobalState, i: usize) -> Vec<(Var, Value)> {
        let l = &s.locals[i];
        self.program.live[l.pc as usize]
            .iter()
            .zip(l.vals.iter())
            .map(|(&v, val)| (self.program.vars[v].1.clone(), val.clone()))
            .collect()
    }

    /// Whether instance `i` can never move again on its own.
    pub fn is_stopped(&self, s: &GlobalState, i: usize) -> bool {
        s.locals[i].pc as usize == STOP
    }

    /// All transitions enabled in `s`, in a fixed order.
    pub fn successors(&self, s: &GlobalState) -> Result<Vec<(Label, GlobalState)>, KernelError> {
        let mut pending: Vec<Vec<Pending>> = Vec::with_capacity(self.instances.len());
        for (i, l) in s.locals.iter().enumerate() {
            let env = self.expand(l);
            pending.push(self.offers(i, l.pc as usize, env)?);
        }
        let on = |i: usize, g: usize| -> Vec<&Pending> {
            pending[i].iter().filter(|p| p.gate == g).collect()
        };
        let mut out = Vec::new();
        for (g, rule) in self.rules.iter().enumerate() {
            match rule {
                SyncRule::Local => {
                    for i in 0..self.instances.len() {
                        for p in on(i, g) {
                            for sol in unify_offers(std::slice::from_ref(&p.offers))? {
                                out.push(self.fire(s, g, &[(i, p)], sol)?);
                            }
                        }
                    }
                }
                SyncRule::AllNodes => {
                    if !self.nodes.is_empty() {
                        self.joint(s, g, &self.nodes, &on, None, &mut out)?;
                    }
                }
                SyncRule::PairNodeCounter | SyncRule::NodeWithOtherCounters => {
                    let mut keys = BTreeSet::new();
                    for ps in &pending {
                        for p in ps.iter().filter(|p| p.gate == g) {
                            match &p.offers[0] {
                                OfferVal::Send(v) => {
                                    keys.insert(v.clone());
                                }
                                OfferVal::Bind(d) => keys.extend(d.iter().cloned()),
                            }
                        }
                    }
                    for key in keys {
                        let Value::Pid(pid) = key else { continue };
                        let Some(parts) = self.resolve(*rule, pid) else {
                            continue;
                        };
                        self.joint(s, g, &parts, &on, Some(&key), &mut out)?;
                    }
                }
            }
        }
        Ok(out)
    }

    fn resolve(&self, rule: SyncRule, pid: Pid) -> Option<Vec<usize>> {
        let p = usize::from(pid.get());
        let node = self.node_of[p]?;
        match rule {
            SyncRule::PairNodeCounter => {
                let counter = self.counter_of[p]?;
                Some(vec![node, counter])
            }
            SyncRule::NodeWithOtherCounters => {
                let mut parts = vec![node];
                parts.extend(
                    self.counters
                        .iter()
                        .copied()
                        .filter(|&c| Some(c) != self.counter_of[p]),
                );
                Some(parts)
            }
            SyncRule::Local | SyncRule::AllNodes => None,
        }
    }

    #[allow(clippy::type_complexity)]
    fn joint<'a>(
        &self,
        s: &GlobalState,
        g: usize,
        parts: &[usize],
        on: &impl Fn(usize, usize) -> Vec<&'a Pending>,
        key: Option<&Value>,
        out: &mut Vec<(Label, GlobalState)>,
    ) -> Result<(), KernelError> {
        let lists: Vec<Vec<&Pending>> = parts.iter().map(|&i| on(i, g)).collect();
        if lists.iter().any(Vec::is_empty) {
            return Ok(());
        }
        for combo in cartesian(&lists) {
            let vectors: Vec<Vec<OfferVal>> = combo.iter().map(|p| p.offers.clone()).collect();
            for sol in unify_offers(&vectors)? {
                if key.is_some_and(|k| &sol[0] != k) {
                    continue;
                }
                let chosen: Vec<(usize, &Pending)> =
                    parts.iter().copied().zip(combo.iter().copied()).collect();
                out.push(self.fire(s, g, &chosen, sol)?);
            }
        }
        Ok(())
    }

    fn fire(
        &self,
        s: &GlobalState,
        g: usize,
        parts: &[(usize, &Pending)],
        sol: Vec<Value>,
    ) -> Result<(Label, GlobalState), KernelError> {
        let mut locals = s.locals.to_vec();
        for &(i, p) in parts {
            let mut env = p.env.clone();
            for (pos, b) in p.binds.iter().enumerate() {
                if let Some(v) = b {
                    env[*v] = Some(sol[pos].clone());
                }
            }
            let pc = self.settle(i, p.next, &mut env)?;
            locals[i] = self.pack(i, pc, &env)?;
        }
        let label = Label::new(self.program.gates[g].clone(), sol);
        Ok((
            label,
            GlobalState {
                locals: locals.into(),
            },
        ))
    }

    fn expand(&self, l: &LocalState) -> Env {
        let mut env: Env = vec![None; self.program.vars.len()];
        for (&v, val) in self.program.live[l.pc as usize].iter().zip(l.vals.iter()) {
            env[v] = Some(val.clone());
        }
        env
    }

    fn pack(&self, i: usize, pc: NodeId, env: &Env) -> Result<LocalState, KernelError> {
        let vals = self.program.live[pc]
            .iter()
            .map(|&v| {
                env[v].clone().ok_or_else(|| KernelError::Eval {
                    instance: self.instances[i].name.clone(),
                    reason: format!("live variable `{}` is unassigned", self.program.vars[v].1),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(LocalState {
            pc: pc as u32,
            vals,
        })
    }

    /// Runs control steps from `pc` until an event, a choice or inaction.
    /// A failed guard or an unmatched case parks the instance at `STOP`.
    fn settle(&self, i: usize, mut pc: NodeId, env: &mut Env) -> Result<NodeId, KernelError> {
        // Static checks rule out control cycles, so the bound is never hit.
        for _ in 0..=self.program.nodes.len() {
            match &self.program.nodes[pc] {
                Node::Stop | Node::Emit { .. } | Node::Alt(_) => return Ok(pc),
                Node::Assign { var, expr, next } => {
                    env[*var] = Some(self.eval(i, expr, env)?);
                    pc = *next;
                }
                Node::Guard { cond, next } => {
                    if !self.test(i, cond, env)? {
                        return Ok(STOP);
                    }
                    pc = *next;
                }
                Node::Goto(t) => pc = *t,
                Node::Case { scrutinee, arms } => {
                    let v = self.eval(i, scrutinee, env)?;
                    pc = match self.select(i, &v, arms, env)? {
                        Some(t) => t,
                        None => return Ok(STOP),
                    };
                }
                Node::Call { def, args } => {
                    let d = &self.program.defs[*def];
                    let vals = args
                        .iter()
                        .map(|a| self.eval(i, a, env))
                        .collect::<Result<Vec<_>, _>>()?;
                    env.iter_mut().for_each(|x| *x = None);
                    for (&p, v) in d.params.iter().zip(vals) {
                        env[p] = Some(v);
                    }
                    pc = d.entry;
                }
            }
        }
        Err(KernelError::Divergence {
            instance: self.instances[i].name.clone(),
        })
    }

    fn select(
        &self,
        i: usize,
        v: &Value,
        arms: &[CArm],
        env: &Env,
    ) -> Result<Option<NodeId>, KernelError> {
        for a in arms {
            if a.pattern.as_ref().is_some_and(|p| p != v) {
                continue;
            }
            if let Some(g) = &a.guard {
                if !self.test(i, g, env)? {
                    continue;
                }
            }
            return Ok(Some(a.target));
        }
        Ok(None)
    }

    /// Events instance `i` offers from the settled point `pc`.
    fn offers(&self, i: usize, pc: NodeId, env: Env) -> Result<Vec<Pending>, KernelError> {
        match &self.program.nodes[pc] {
            Node::Stop => Ok(Vec::new()),
            Node::Emit { gate, offers, next } => {
                let mut vals = Vec::with_capacity(offers.len());
                let mut binds = Vec::with_capacity(offers.len());
                for o in offers {
                    match o {
                        COffer::Send(e) => {
                            vals.push(OfferVal::Send(self.eval(i, e, &env)?));
                            binds.push(None);
                        }
                        COffer::Bind(v, d) => {
                            vals.push(OfferVal::Bind(d.clone()));
                            binds.push(Some(*v));
                        }
                    }
                }
                Ok(vec![Pending {
                    gate: *gate,
                    offers: vals,
                    binds,
                    next: *next,
                    env,
                }])
            }
            Node::Alt(branches) => {
                let mut out = Vec::new();
                for &b in branches {
                    let mut e = env.clone();
                    let p = self.settle(i, b, &mut e)?;
                    out.extend(self.offers(i, p, e)?);
                }
                Ok(out)
            }
            _ => unreachable!("offers is only asked at settled points"),
        }
    }

    fn eval_err(&self, i: usize, reason: String) -> KernelError {
        KernelError::Eval {
            instance: self.instances[i].name.clone(),
            reason,
        }
    }

    fn eval(&self, i: usize, e: &CExpr, env: &Env) -> Result<Value, KernelError> {
        match e {
            CExpr::Const(v) => Ok(v.clone()),
            CExpr::Var(x) => env[*x].clone().ok_or_else(|| {
                self.eval_err(
                    i,
                    format!(
                        "variable `{}` read before assignment",
                        self.program.vars[*x].1
                    ),
                )
            }),
            CExpr::Add(a, b) | CExpr::Sub(a, b) => {
                let (va, vb) = (self.eval(i, a, env)?, self.eval(i, b, env)?);
                let (x, y) = self.ints(i, &va, &vb)?;
                let r = if matches!(e, CExpr::Add(..)) {
                    x + y
                } else {
                    x - y
                };
                va.with_int(r)
                    .ok_or_else(|| self.eval_err(i, format!("{va} and {vb} give out-of-range {r}")))
            }
            CExpr::OneMinus(a) => match self.eval(i, a, env)? {
                Value::Prob(p) => Ok(Value::Prob(p.one_minus())),
                v => Err(self.eval_err(i, format!("one_minus applied to non-probability {v}"))),
            },
        }
    }

    fn ints(&self, i: usize, a: &Value, b: &Value) -> Result<(i64, i64), KernelError> {
        match (a.as_int(), b.as_int()) {
            (Some(x), Some(y)) if a.kind() == b.kind() => Ok((x, y)),
            _ => Err(self.eval_err(
                i,
                format!(
                    "cannot combine {a} ({:?}) with {b} ({:?})",
                    a.kind(),
                    b.kind()
                ),
            )),
        }
    }

    fn test(&self, i: usize, c: &CCond, env: &Env) -> Result<bool, KernelError> {
        Ok(match c {
            CCond::True => true,
            CCond::Cmp(op, a, b) => {
                let (va, vb) = (self.eval(i, a, env)?, self.eval(i, b, env)?);
                match op {
                    CmpOp::Eq => va == vb,
                    CmpOp::Ne => va != vb,
                    _ => {
                        let (x, y) = self.ints(i, &va, &vb)?;
                        match op {
                            CmpOp::Lt => x < y,
                            CmpOp::Le => x <= y,
                            CmpOp::Gt => x > y,
                            _ => x >= y,
                        }
                    }
                }
            }
            CCond::And(a, b) => self.test(i, a, env)? && self.test(i, b, env)?,
            CCond::Or(a, b) => self.test(i, a, env)? || self.test(i, b, env)?,
            CCond::Not(a) => !self.test(i, a, env)?,
        })
    }
}
