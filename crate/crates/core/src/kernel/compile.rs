//! Compilation of process definitions into one flat control graph, with the
//! static checks that keep the reachable control space finite.

use std::collections::HashMap;
use std::sync::Arc;

use super::term::{Cond, Expr, Offer, Pattern, ProcessDef, Term, Var};
use super::KernelError;
use crate::lts::Value;

pub(crate) type NodeId = usize;

/// Shared inaction node; blocked processes are parked here.
pub(crate) const STOP: NodeId = 0;

#[derive(Debug, Clone)]
pub(crate) enum CExpr {
    Const(Value),
    Var(usize),
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    OneMinus(Box<CExpr>),
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) enum CCond {
    True,
    Cmp(CmpOp, CExpr, CExpr),
    And(Box<CCond>, Box<CCond>),
    Or(Box<CCond>, Box<CCond>),
    Not(Box<CCond>),
}

#[derive(Debug, Clone)]
pub(crate) enum COffer {
    Send(CExpr),
    Bind(usize, Arc<[Value]>),
}

#[derive(Debug, Clone)]
pub(crate) struct CArm {
    pub pattern: Option<Value>,
    pub guard: Option<CCond>,
    pub target: NodeId,
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Stop,
    Emit {
        gate: usize,
        offers: Vec<COffer>,
        next: NodeId,
    },
    Alt(Vec<NodeId>),
    Assign {
        var: usize,
        expr: CExpr,
        next: NodeId,
    },
    Case {
        scrutinee: CExpr,
        arms: Vec<CArm>,
    },
    Guard {
        cond: CCond,
        next: NodeId,
    },
    Goto(NodeId),
    Call {
        def: usize,
        args: Vec<CExpr>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct DefInfo {
    pub name: Arc<str>,
    pub params: Vec<usize>,
    pub entry: NodeId,
}

#[derive(Debug, Clone)]
pub(crate) struct Program {
    pub nodes: Vec<Node>,
    pub defs: Vec<DefInfo>,
    /// Variable table: owning definition and name.
    pub vars: Vec<(usize, Var)>,
    /// Gate names, sorted.
    pub gates: Vec<Arc<str>>,
    pub gate_arity: Vec<usize>,
    /// Variables live on entry to each node, ascending.
    pub live: Vec<Vec<usize>>,
}

impl Program {
    pub fn def_index(&self, name: &str) -> Option<usize> {
        self.defs.iter().position(|d| &*d.name == name)
    }

    pub fn gate_index(&self, name: &str) -> Option<usize> {
        self.gates.binary_search_by(|g| (**g).cmp(name)).ok()
    }
}

pub(crate) fn compile(defs: &[ProcessDef]) -> Result<Program, KernelError> {
    let mut def_index = HashMap::new();
    for (i, d) in defs.iter().enumerate() {
        if def_index.insert(d.name.clone(), i).is_some() {
            return Err(KernelError::DuplicateProcess(d.name.to_string()));
        }
    }
    let mut gate_names = Vec::new();
    for d in defs {
        collect_gates(&d.body, &mut gate_names);
    }
    gate_names.sort();
    gate_names.dedup();
    let mut c = Compiler {
        nodes: vec![Node::Stop],
        owner: vec![usize::MAX],
        def_index,
        defs,
        gate_arity: vec![None; gate_names.len()],
        gates: gate_names,
        vars: Vec::new(),
        var_index: HashMap::new(),
        cur: 0,
        loops: Vec::new(),
    };
    let mut infos = Vec::with_capacity(defs.len());
    for (i, d) in defs.iter().enumerate() {
        c.cur = i;
        let mut params = Vec::new();
        for p in &d.params {
            if c.var_index.contains_key(&(i, p.clone())) {
                return Err(KernelError::DuplicateParameter {
                    process: d.name.to_string(),
                    param: p.to_string(),
                });
            }
            params.push(c.var(p));
        }
        let entry = c.term(&d.body, STOP, true)?;
        infos.push(DefInfo {
            name: d.name.clone(),
            params,
            entry,
        });
    }
    let Compiler {
        nodes,
        owner,
        gates,
        gate_arity,
        vars,
        ..
    } = c;
    let mut prog = Program {
        nodes,
        defs: infos,
        vars,
        gate_arity: gate_arity.into_iter().map(|a| a.unwrap_or(0)).collect(),
        gates,
        live: Vec::new(),
    };
    check_silent_cycles(&prog, &owner)?;
    check_definite_assignment(&prog, &owner)?;
    prog.live = liveness(&prog);
    Ok(prog)
}

fn collect_gates(t: &Term, out: &mut Vec<Arc<str>>) {
    match t {
        Term::Emit { gate, .. } => out.push(gate.clone()),
        Term::Seq(ts) | Term::Alt(ts) => ts.iter().for_each(|t| collect_gates(t, out)),
        Term::Case { arms, .. } => arms.iter().for_each(|a| collect_gates(&a.body, out)),
        Term::Loop(_, body) => collect_gates(body, out),
        Term::Stop | Term::Assign(..) | Term::Guard(_) | Term::Break(_) | Term::Call(..) => {}
    }
}

struct Compiler<'a> {
    nodes: Vec<Node>,
    owner: Vec<usize>,
    def_index: HashMap<Arc<str>, usize>,
    defs: &'a [ProcessDef],
    gates: Vec<Arc<str>>,
    gate_arity: Vec<Option<usize>>,
    vars: Vec<(usize, Var)>,
    var_index: HashMap<(usize, Var), usize>,
    cur: usize,
    loops: Vec<(Arc<str>, NodeId)>,
}

impl Compiler<'_> {
    fn push(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        self.owner.push(self.cur);
        self.nodes.len() - 1
    }

    fn var(&mut self, name: &Var) -> usize {
        let key = (self.cur, name.clone());
        if let Some(&v) = self.var_index.get(&key) {
            return v;
        }
        self.vars.push(key.clone());
        self.var_index.insert(key, self.vars.len() - 1);
        self.vars.len() - 1
    }

    fn process_name(&self) -> String {
        self.defs[self.cur].name.to_string()
    }

    fn expr(&mut self, e: &Expr) -> CExpr {
        match e {
            Expr::Const(v) => CExpr::Const(v.clone()),
            Expr::Var(x) => CExpr::Var(self.var(x)),
            Expr::Add(a, b) => CExpr::Add(Box::new(self.expr(a)), Box::new(self.expr(b))),
            Expr::Sub(a, b) => CExpr::Sub(Box::new(self.expr(a)), Box::new(self.expr(b))),
            Expr::OneMinus(a) => CExpr::OneMinus(Box::new(self.expr(a))),
        }
    }

    fn cond(&mut self, c: &Cond) -> CCond {
        let mut cmp = |op, a: &Expr, b: &Expr| CCond::Cmp(op, self.expr(a), self.expr(b));
        match c {
            Cond::True => CCond::True,
            Cond::Eq(a, b) => cmp(CmpOp::Eq, a, b),
            Cond::Ne(a, b) => cmp(CmpOp::Ne, a, b),
            Cond::Lt(a, b) => cmp(CmpOp::Lt, a, b),
            Cond::Le(a, b) => cmp(CmpOp::Le, a, b),
            Cond::Gt(a, b) => cmp(CmpOp::Gt, a, b),
            Cond::Ge(a, b) => cmp(CmpOp::Ge, a, b),
            Cond::And(a, b) => CCond::And(Box::new(self.cond(a)), Box::new(self.cond(b))),
            Cond::Or(a, b) => CCond::Or(Box::new(self.cond(a)), Box::new(self.cond(b))),
            Cond::Not(a) => CCond::Not(Box::new(self.cond(a))),
        }
    }

    /// Compiles `t` so that it continues at `next`; returns its entry node.
    /// `tail` tells whether nothing follows `t` in its process body.
    fn term(&mut self, t: &Term, next: NodeId, tail: bool) -> Result<NodeId, KernelError> {
        Ok(match t {
            Term::Stop => STOP,
            Term::Emit { gate, offers } => {
                let g = self.gates.binary_search(gate).expect("gate collected");
                match self.gate_arity[g] {
                    Some(a) if a != offers.len() => {
                        return Err(KernelError::GateArity {
                            gate: gate.to_string(),
                            expected: a,
                            found: offers.len(),
                        })
                    }
                    _ => self.gate_arity[g] = Some(offers.len()),
                }
                let offers = offers
                    .iter()
                    .map(|o| match o {
                        Offer::Send(e) => COffer::Send(self.expr(e)),
                        Offer::Bind(x, dom) => {
                            let mut dom = dom.clone();
                            dom.sort();
                            dom.dedup();
                            COffer::Bind(self.var(x), dom.into())
                        }
                    })
                    .collect();
                self.push(Node::Emit {
                    gate: g,
                    offers,
                    next,
                })
            }
            Term::Seq(ts) => {
                let mut k = next;
                for (i, t) in ts.iter().enumerate().rev() {
                    k = self.term(t, k, tail && i + 1 == ts.len())?;
                }
                k
            }
            Term::Alt(bs) => {
                let entries = bs
                    .iter()
                    .map(|b| self.term(b, next, tail))
                    .collect::<Result<_, _>>()?;
                self.push(Node::Alt(entries))
            }
            Term::Assign(x, e) => {
                let expr = self.expr(e);
                let var = self.var(x);
                self.push(Node::Assign { var, expr, next })
            }
            Term::Case { scrutinee, arms } => {
                let scrutinee = self.expr(scrutinee);
                let mut carms = Vec::with_capacity(arms.len());
                for a in arms {
                    let guard = a.guard.as_ref().map(|g| self.cond(g));
                    let target = self.term(&a.body, next, tail)?;
                    let pattern = match &a.pattern {
                        Pattern::Any => None,
                        Pattern::Is(v) => Some(v.clone()),
                    };
                    carms.push(CArm {
                        pattern,
                        guard,
                        target,
                    });
                }
                self.push(Node::Case {
                    scrutinee,
                    arms: carms,
                })
            }
            Term::Guard(c) => {
                let cond = self.cond(c);
                self.push(Node::Guard { cond, next })
            }
            Term::Loop(id, body) => {
                let head = self.push(Node::Goto(usize::MAX));
                self.loops.push((id.clone(), next));
                let entry = self.term(body, head, false);
                self.loops.pop();
                self.nodes[head] = Node::Goto(entry?);
                head
            }
            Term::Break(id) => match self.loops.iter().rev().find(|(l, _)| l == id) {
                Some(&(_, exit)) => exit,
                None => {
                    return Err(KernelError::BreakOutsideLoop {
                        process: self.process_name(),
                        loop_id: id.to_string(),
                    })
                }
            },
            Term::Call(p, args) => {
                if !tail {
                    return Err(KernelError::CallNotTail {
                        process: self.process_name(),
                        callee: p.to_string(),
                    });
                }
                let def = *self
                    .def_index
                    .get(p)
                    .ok_or_else(|| KernelError::UnknownProcess {
                        process: self.process_name(),
                        callee: p.to_string(),
                    })?;
                let expected = self.defs[def].params.len();
                if expected != args.len() {
                    return Err(KernelError::CallArity {
                        callee: p.to_string(),
                        expected,
                        found: args.len(),
                    });
                }
                let args = args.iter().map(|a| self.expr(a)).collect();
                self.push(Node::Call { def, args })
            }
        })
    }
}

/// Control successors of `n`, with the variables written on each edge.
/// Call edges are excluded: a callee starts from its parameters alone.
pub(crate) fn edges(n: &Node) -> Vec<(NodeId, Vec<usize>)> {
    match n {
        Node::Stop | Node::Call { .. } => vec![],
        Node::Emit { offers, next, .. } => {
            let binds = offers
                .iter()
                .filter_map(|o| match o {
                    COffer::Bind(v, _) => Some(*v),
                    COffer::Send(_) => None,
                })
                .collect();
            vec![(*next, binds)]
        }
        Node::Alt(bs) => bs.iter().map(|&b| (b, vec![])).collect(),
        Node::Assign { var, next, .. } => vec![(*next, vec![*var])],
        Node::Case { arms, .. } => arms.iter().map(|a| (a.target, vec![])).collect(),
        Node::Guard { next, .. } | Node::Goto(next) => vec![(*next, vec![])],
    }
}

fn expr_vars(e: &CExpr, out: &mut Vec<usize>) {
    match e {
        CExpr::Const(_) => {}
        CExpr::Var(v) => out.push(*v),
        CExpr::Add(a, b) | CExpr::Sub(a, b) => {
            expr_vars(a, out);
            expr_vars(b, out);
        }
        CExpr::OneMinus(a) => expr_vars(a, out),
    }
}

fn cond_vars(c: &CCond, out: &mut Vec<usize>) {
    match c {
        CCond::True => {}
        CCond::Cmp(_, a, b) => {
            expr_vars(a, out);
            expr_vars(b, out);
        }
        CCond::And(a, b) | CCond::Or(a, b) => {
            cond_vars(a, out);
            cond_vars(b, out);
        }
        CCond::Not(a) => cond_vars(a, out),
    }
}

/// Variables read by `n` itself.
pub(crate) fn uses(n: &Node) -> Vec<usize> {
    let mut out = Vec::new();
    match n {
        Node::Stop | Node::Alt(_) | Node::Goto(_) => {}
        Node::Emit { offers, .. } => {
            for o in offers {
                if let COffer::Send(e) = o {
                    expr_vars(e, &mut out);
                }
            }
        }
        Node::Assign { expr, .. } => expr_vars(expr, &mut out),
        Node::Case { scrutinee, arms } => {
            expr_vars(scrutinee, &mut out);
            for a in arms {
                if let Some(g) = &a.guard {
                    cond_vars(g, &mut out);
                }
            }
        }
        Node::Guard { cond, .. } => cond_vars(cond, &mut out),
        Node::Call { args, .. } => args.iter().for_each(|a| expr_vars(a, &mut out)),
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Every cycle of control steps must pass through an Emit, otherwise the
/// absorption of control steps between two events could run forever.
fn check_silent_cycles(p: &Program, owner: &[usize]) -> Result<(), KernelError> {
    let succ = |n: NodeId| -> Vec<NodeId> {
        match &p.nodes[n] {
            Node::Emit { .. } => vec![],
            Node::Call { def, .. } => vec![p.defs[*def].entry],
            other => edges(other).into_iter().map(|(s, _)| s).collect(),
        }
    };
    // 0 unvisited, 1 on stack, 2 done
    let mut colour = vec![0u8; p.nodes.len()];
    for root in 0..p.nodes.len() {
        if colour[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, succ(root), 0usize)];
        colour[root] = 1;
        while let Some((n, ss, i)) = stack.last_mut() {
            if *i < ss.len() {
                let s = ss[*i];
                *i += 1;
                match colour[s] {
                    0 => {
                        colour[s] = 1;
                        let next = succ(s);
                        stack.push((s, next, 0));
                    }
                    1 => {
                        let def = owner[s];
                        return Err(KernelError::SilentCycle {
                            process: p.defs[def].name.to_string(),
                        });
                    }
                    _ => {}
                }
            } else {
                colour[*n] = 2;
                stack.pop();
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn empty(n: usize) -> Self {
        BitSet(vec![0; n.div_ceil(64)])
    }

    fn full(n: usize) -> Self {
        let mut s = BitSet(vec![u64::MAX; n.div_ceil(64)]);
        if !n.is_multiple_of(64) {
            if let Some(last) = s.0.last_mut() {
                *last = (1u64 << (n % 64)) - 1;
            }
        }
        s
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    fn intersect(&mut self, o: &BitSet) {
        self.0.iter_mut().zip(&o.0).for_each(|(a, b)| *a &= b);
    }
}

/// Forward must-analysis: every read happens after a write on all paths
/// from the entry of its definition.
fn check_definite_assignment(p: &Program, owner: &[usize]) -> Result<(), KernelError> {
    let nv = p.vars.len();
    let mut preds: Vec<Vec<(NodeId, Vec<usize>)>> = vec![Vec::new(); p.nodes.len()];
    for (n, node) in p.nodes.iter().enumerate() {
        for (s, w) in edges(node) {
            preds[s].push((n, w));
        }
    }
    let mut entry_sets: HashMap<NodeId, BitSet> = HashMap::new();
    for d in &p.defs {
        let mut s = BitSet::empty(nv);
        d.params.iter().for_each(|&v| s.insert(v));
        // A shared entry (e.g. a body that is just `Stop`) reads nothing.
        entry_sets
            .entry(d.entry)
            .and_modify(|e| e.intersect(&s))
            .or_insert(s);
    }
    let mut assigned = vec![BitSet::full(nv); p.nodes.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for n in 0..p.nodes.len() {
            let mut acc = entry_sets
                .get(&n)
                .cloned()
                .unwrap_or_else(|| BitSet::full(nv));
            for (pr, w) in &preds[n] {
                let mut out = assigned[*pr].clone();
                w.iter().for_each(|&v| out.insert(v));
                acc.intersect(&out);
            }
            if acc != assigned[n] {
                assigned[n] = acc;
                changed = true;
            }
        }
    }
    for (n, node) in p.nodes.iter().enumerate() {
        for v in uses(node) {
            if !assigned[n].contains(v) {
                let (def, name) = &p.vars[v];
                debug_assert_eq!(*def, owner[n]);
                return Err(KernelError::Unassigned {
                    process: p.defs[*def].name.to_string(),
                    var: name.to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Backward may-analysis of live variables.
fn liveness(p: &Program) -> Vec<Vec<usize>> {
    let use_sets: Vec<Vec<usize>> = p.nodes.iter().map(uses).collect();
    let succs: Vec<Vec<(NodeId, Vec<usize>)>> = p.nodes.iter().map(edges).collect();
    let mut live: Vec<Vec<usize>> = vec![Vec::new(); p.nodes.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for n in (0..p.nodes.len()).rev() {
            let mut set = use_sets[n].clone();
            for (s, w) in &succs[n] {
                set.extend(live[*s].iter().filter(|v| !w.contains(v)));
            }
            set.sort_unstable();
            set.dedup();
            if set != live[n] {
                live[n] = set;
                changed = true;
            }
        }
    }
    live
}
