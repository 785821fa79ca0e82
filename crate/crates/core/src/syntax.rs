//! Core term and clause representation.
//!
//! Everything here is immutable after construction and freely shareable
//! between threads. Variables carry globally unique identifiers, so renamed
//! variants never capture.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// A sort: integers, booleans, or a (ground) algebraic data type referenced
/// by its instantiated name, e.g. `list(int)` or `tree(int)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Sort {
    Int,
    Bool,
    Adt(Arc<str>),
}

impl Sort {
    pub fn is_basic(&self) -> bool {
        matches!(self, Sort::Int | Sort::Bool)
    }

    pub fn is_adt(&self) -> bool {
        matches!(self, Sort::Adt(_))
    }

    pub fn adt(name: &str) -> Sort {
        Sort::Adt(Arc::from(name))
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Int => write!(f, "int"),
            Sort::Bool => write!(f, "bool"),
            Sort::Adt(n) => write!(f, "{}", n),
        }
    }
}

/// A constructor signature of an ADT sort.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constructor {
    pub name: String,
    pub args: Vec<Sort>,
}

impl Constructor {
    /// True when no argument refers back to an ADT sort, i.e. this
    /// constructor can terminate a structure.
    pub fn is_base(&self) -> bool {
        self.args.iter().all(|s| s.is_basic())
    }
}

/// A ground ADT sort definition: name plus constructor signatures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdtDef {
    pub name: Arc<str>,
    pub constructors: Vec<Constructor>,
}

/// Registry of the ADT sorts in scope for one program.
#[derive(Clone, Debug, Default)]
pub struct SortEnv {
    defs: Vec<AdtDef>,
}

impl SortEnv {
    pub fn new() -> Self {
        SortEnv::default()
    }

    pub fn insert(&mut self, def: AdtDef) {
        if self.lookup(&def.name).is_none() {
            self.defs.push(def);
        }
    }

    /// Insert, overwriting any existing definition with the same name.
    pub fn replace(&mut self, def: AdtDef) {
        if let Some(d) = self.defs.iter_mut().find(|d| d.name == def.name) {
            *d = def;
        } else {
            self.defs.push(def);
        }
    }

    pub fn lookup(&self, name: &str) -> Option<&AdtDef> {
        self.defs.iter().find(|d| &*d.name == name)
    }

    pub fn defs(&self) -> &[AdtDef] {
        &self.defs
    }

    /// Constructor signature lookup by name within a given ADT sort.
    pub fn constructor(&self, sort: &str, cons: &str) -> Option<&Constructor> {
        self.lookup(sort)
            .and_then(|d| d.constructors.iter().find(|c| c.name == cons))
    }
}

static NEXT_VAR_ID: AtomicU64 = AtomicU64::new(1);

/// A logic variable. Identity (equality, hashing, ordering) is by the unique
/// id only; the name is kept for readable printing.
#[derive(Clone, Debug)]
pub struct Var {
    pub id: u64,
    pub name: Arc<str>,
    pub sort: Sort,
}

impl Var {
    pub fn fresh(name: &str, sort: Sort) -> Var {
        Var {
            id: NEXT_VAR_ID.fetch_add(1, Ordering::Relaxed),
            name: Arc::from(name),
            sort,
        }
    }

    /// A fresh variable with the same printable name and sort.
    pub fn renamed(&self) -> Var {
        Var::fresh(&self.name, self.sort.clone())
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Var {}
impl std::hash::Hash for Var {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}
impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Var {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.id.cmp(&other.id)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.name, self.id)
    }
}

/// Relational operators of the constraint language.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RelOp {
    Eq,
    Ge,
    Gt,
    Le,
    Lt,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Ge => ">=",
            RelOp::Gt => ">",
            RelOp::Le => "=<",
            RelOp::Lt => "<",
        }
    }
}

/// First order terms: variables, constants, ADT constructor applications,
/// linear integer expressions, and if-then-else.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Term {
    Var(Var),
    Int(i64),
    Bool(bool),
    /// Constructor application; the sort is the ADT sort it builds.
    Cons(Arc<str>, Sort, Vec<Term>),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    /// Multiplication by an integer literal, keeping terms linear.
    Mul(i64, Box<Term>),
    Ite(Box<Constraint>, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(v: &Var) -> Term {
        Term::Var(v.clone())
    }

    pub fn sort(&self) -> Sort {
        match self {
            Term::Var(v) => v.sort.clone(),
            Term::Int(_) => Sort::Int,
            Term::Bool(_) => Sort::Bool,
            Term::Cons(_, s, _) => s.clone(),
            Term::Add(..) | Term::Sub(..) | Term::Neg(..) | Term::Mul(..) => Sort::Int,
            Term::Ite(_, t, _) => t.sort(),
        }
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn free_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Int(_) | Term::Bool(_) => {}
            Term::Cons(_, _, args) => args.iter().for_each(|t| t.free_vars(out)),
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Term::Neg(a) | Term::Mul(_, a) => a.free_vars(out),
            Term::Ite(c, t, e) => {
                c.free_vars(out);
                t.free_vars(out);
                e.free_vars(out);
            }
        }
    }
}

/// Quantifier-free constraints over integers and booleans.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Constraint {
    True,
    False,
    /// A boolean variable used as an atomic formula.
    BoolVar(Var),
    Rel(RelOp, Term, Term),
    Not(Box<Constraint>),
    And(Box<Constraint>, Box<Constraint>),
    Or(Box<Constraint>, Box<Constraint>),
    Implies(Box<Constraint>, Box<Constraint>),
    /// Boolean equality (`c1 = c2` on formulas).
    Iff(Box<Constraint>, Box<Constraint>),
    Ite(Box<Constraint>, Box<Constraint>, Box<Constraint>),
}

impl Constraint {
    pub fn and(self, other: Constraint) -> Constraint {
        match (self, other) {
            (Constraint::True, c) | (c, Constraint::True) => c,
            (a, b) => Constraint::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn not(self) -> Constraint {
        Constraint::Not(Box::new(self))
    }

    /// Conjunction of a list of constraints, `true` if empty.
    pub fn conj(cs: impl IntoIterator<Item = Constraint>) -> Constraint {
        cs.into_iter().fold(Constraint::True, |acc, c| acc.and(c))
    }

    /// The top-level conjunct list; non-conjunctive structure stays whole.
    pub fn conjuncts(&self) -> Vec<&Constraint> {
        let mut out = Vec::new();
        fn walk<'a>(c: &'a Constraint, out: &mut Vec<&'a Constraint>) {
            match c {
                Constraint::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Constraint::True => {}
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn free_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Constraint::True | Constraint::False => {}
            Constraint::BoolVar(v) => {
                out.insert(v.clone());
            }
            Constraint::Rel(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Constraint::Not(c) => c.free_vars(out),
            Constraint::And(a, b)
            | Constraint::Or(a, b)
            | Constraint::Implies(a, b)
            | Constraint::Iff(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Constraint::Ite(c, t, e) => {
                c.free_vars(out);
                t.free_vars(out);
                e.free_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.free_vars(&mut s);
        s
    }
}

/// A predicate application.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Atom {
    pub pred: Arc<str>,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Atom {
        Atom {
            pred: Arc::from(pred),
            args,
        }
    }

    pub fn free_vars(&self, out: &mut BTreeSet<Var>) {
        self.args.iter().for_each(|t| t.free_vars(out));
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.free_vars(&mut s);
        s
    }

    /// Variables of ADT sort occurring anywhere in the arguments.
    pub fn adt_vars(&self) -> BTreeSet<Var> {
        self.vars().into_iter().filter(|v| v.sort.is_adt()).collect()
    }

    /// Variables of basic sort occurring anywhere in the arguments.
    pub fn basic_vars(&self) -> BTreeSet<Var> {
        self.vars().into_iter().filter(|v| v.sort.is_basic()).collect()
    }
}

/// Clause head: an atom for definite clauses, `false` for goals.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Head {
    Atom(Atom),
    False,
}

impl Head {
    pub fn as_atom(&self) -> Option<&Atom> {
        match self {
            Head::Atom(a) => Some(a),
            Head::False => None,
        }
    }
}

/// Provenance of a clause.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Origin {
    /// Parsed from source at the given line.
    Source(u32),
    /// Translation of the contract for the named predicate.
    ContractGoal(Arc<str>),
    /// Produced by a transformation step.
    Derived(u32),
}

/// A constrained Horn clause `head <- constraint, body`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Clause {
    pub head: Head,
    pub constraint: Constraint,
    pub body: Vec<Atom>,
    pub origin: Origin,
}

impl Clause {
    pub fn is_goal(&self) -> bool {
        matches!(self.head, Head::False)
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        if let Head::Atom(a) = &self.head {
            a.free_vars(&mut s);
        }
        self.constraint.free_vars(&mut s);
        self.body.iter().for_each(|a| a.free_vars(&mut s));
        s
    }

    /// Head predicate name, if any.
    pub fn head_pred(&self) -> Option<&str> {
        self.head.as_atom().map(|a| &*a.pred)
    }
}

/// Partition the variables of a group of atoms by sort kind.
pub fn var_partition(atoms: &[Atom]) -> (BTreeSet<Var>, BTreeSet<Var>) {
    let mut basic = BTreeSet::new();
    let mut adt = BTreeSet::new();
    for a in atoms {
        for v in a.vars() {
            if v.sort.is_adt() {
                adt.insert(v);
            } else {
                basic.insert(v);
            }
        }
    }
    (basic, adt)
}

/// Built-in parametric sorts: `list(T)` with `[]`/`cons`, `tree(T)` with
/// `leaf`/`node`. Instantiated on demand by the sort inferencer.
pub fn instantiate_builtin(base: &str, elem: &Sort) -> Option<AdtDef> {
    let name: Arc<str> = Arc::from(format!("{}({})", base, elem));
    let self_sort = Sort::Adt(name.clone());
    match base {
        "list" => Some(AdtDef {
            name,
            constructors: vec![
                Constructor {
                    name: "[]".into(),
                    args: vec![],
                },
                Constructor {
                    name: "cons".into(),
                    args: vec![elem.clone(), self_sort],
                },
            ],
        }),
        "tree" => Some(AdtDef {
            name,
            constructors: vec![
                Constructor {
                    name: "leaf".into(),
                    args: vec![],
                },
                Constructor {
                    name: "node".into(),
                    args: vec![self_sort.clone(), elem.clone(), self_sort],
                },
            ],
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn var_identity_is_by_id() {
        let a = Var::fresh("X", Sort::Int);
        let b = Var::fresh("X", Sort::Int);
        assert_ne!(a, b);
        assert_eq!(a, a.clone());
    }

    #[test]
    fn conjunct_decomposition_flattens_ands() {
        let x = Var::fresh("X", Sort::Bool);
        let y = Var::fresh("Y", Sort::Bool);
        let c = Constraint::BoolVar(x.clone())
            .and(Constraint::BoolVar(y.clone()).not())
            .and(Constraint::True);
        let parts = c.conjuncts();
        assert_eq!(parts.len(), 2);
        // A disjunction stays a single conjunct.
        let d = Constraint::Or(
            Box::new(Constraint::BoolVar(x)),
            Box::new(Constraint::BoolVar(y)),
        );
        assert_eq!(d.conjuncts().len(), 1);
    }

    #[test]
    fn var_partition_splits_by_sort() {
        let l = Var::fresh("L", Sort::adt("list(int)"));
        let bl = Var::fresh("BL", Sort::Bool);
        let a = Atom::new("is_asorted", vec![Term::var(&l), Term::var(&bl)]);
        let (basic, adt) = var_partition(std::slice::from_ref(&a));
        assert_eq!(basic.into_iter().collect::<Vec<_>>(), vec![bl]);
        assert_eq!(adt.into_iter().collect::<Vec<_>>(), vec![l]);
    }
}
