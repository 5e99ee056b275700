//! Behaviour syntax of one sequential process.

use std::sync::Arc;

use crate::lts::Value;

pub type Var = Arc<str>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Const(Value),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    /// `1 - p` on probabilities.
    OneMinus(Box<Expr>),
}

impl Expr {
    pub fn val(v: impl Into<Value>) -> Expr {
        Expr::Const(v.into())
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(Arc::from(name))
    }

    pub fn plus(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }

    pub fn minus(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn one_minus(self) -> Expr {
        Expr::OneMinus(Box::new(self))
    }

    pub fn eq(self, rhs: Expr) -> Cond {
        Cond::Eq(self, rhs)
    }

    pub fn ne(self, rhs: Expr) -> Cond {
        Cond::Ne(self, rhs)
    }

    pub fn lt(self, rhs: Expr) -> Cond {
        Cond::Lt(self, rhs)
    }

    pub fn le(self, rhs: Expr) -> Cond {
        Cond::Le(self, rhs)
    }

    pub fn gt(self, rhs: Expr) -> Cond {
        Cond::Gt(self, rhs)
    }

    pub fn ge(self, rhs: Expr) -> Cond {
        Cond::Ge(self, rhs)
    }
}

/// Boolean conditions. Orderings compare integer payloads of the same kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cond {
    True,
    Eq(Expr, Expr),
    Ne(Expr, Expr),
    Lt(Expr, Expr),
    Le(Expr, Expr),
    Gt(Expr, Expr),
    Ge(Expr, Expr),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
}

impl Cond {
    pub fn and(self, rhs: Cond) -> Cond {
        Cond::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: Cond) -> Cond {
        Cond::Or(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Cond {
        Cond::Not(Box::new(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Offer {
    /// `!e`: the value of `e` is offered.
    Send(Expr),
    /// `?x`: any value of the finite domain is accepted and bound to `x`.
    Bind(Var, Vec<Value>),
}

impl Offer {
    pub fn send(e: Expr) -> Offer {
        Offer::Send(e)
    }

    pub fn bind(var: &str, domain: impl IntoIterator<Item = Value>) -> Offer {
        Offer::Bind(Arc::from(var), domain.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Any,
    Is(Value),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arm {
    pub pattern: Pattern,
    pub guard: Option<Cond>,
    pub body: Term,
}

impl Arm {
    pub fn new(pattern: Pattern, guard: Option<Cond>, body: Term) -> Arm {
        Arm {
            pattern,
            guard,
            body,
        }
    }

    pub fn is(v: impl Into<Value>, body: Term) -> Arm {
        Arm::new(Pattern::Is(v.into()), None, body)
    }

    pub fn when(v: impl Into<Value>, guard: Cond, body: Term) -> Arm {
        Arm::new(Pattern::Is(v.into()), Some(guard), body)
    }

    pub fn otherwise(body: Term) -> Arm {
        Arm::new(Pattern::Any, None, body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    /// Inaction.
    Stop,
    Emit {
        gate: Arc<str>,
        offers: Vec<Offer>,
    },
    /// Sequential composition; the empty sequence does nothing.
    Seq(Vec<Term>),
    /// Nondeterministic choice, resolved by the first event of a branch.
    Alt(Vec<Term>),
    Assign(Var, Expr),
    /// First arm whose pattern and guard hold is taken; no match blocks.
    Case {
        scrutinee: Expr,
        arms: Vec<Arm>,
    },
    /// Blocks unless the condition holds.
    Guard(Cond),
    Loop(Arc<str>, Box<Term>),
    Break(Arc<str>),
    /// Tail call.
    Call(Arc<str>, Vec<Expr>),
}

impl Term {
    pub fn emit(gate: &str, offers: Vec<Offer>) -> Term {
        Term::Emit {
            gate: Arc::from(gate),
            offers,
        }
    }

    pub fn assign(var: &str, e: Expr) -> Term {
        Term::Assign(Arc::from(var), e)
    }

    pub fn case(scrutinee: Expr, arms: Vec<Arm>) -> Term {
        Term::Case { scrutinee, arms }
    }

    /// `if c then a else b`.
    pub fn ite(c: Cond, then: Term, otherwise: Term) -> Term {
        Term::case(
            Expr::val(crate::lts::Bit::ONE),
            vec![
                Arm::new(Pattern::Any, Some(c), then),
                Arm::otherwise(otherwise),
            ],
        )
    }

    pub fn looping(id: &str, body: Term) -> Term {
        Term::Loop(Arc::from(id), Box::new(body))
    }

    pub fn brk(id: &str) -> Term {
        Term::Break(Arc::from(id))
    }

    pub fn call(process: &str, args: Vec<Expr>) -> Term {
        Term::Call(Arc::from(process), args)
    }
}

/// A named process with value parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessDef {
    pub name: Arc<str>,
    pub params: Vec<Var>,
    pub body: Term,
}

impl ProcessDef {
    pub fn new(name: &str, params: &[&str], body: Term) -> ProcessDef {
        ProcessDef {
            name: Arc::from(name),
            params: params.iter().map(|p| Arc::from(*p)).collect(),
            body,
        }
    }
}
