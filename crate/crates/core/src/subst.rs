//! Substitutions and syntactic unification.

use crate::syntax::{Atom, Clause, Constraint, Head, Term, Var};
use std::collections::BTreeMap;

/// A sort-preserving, idempotent map from variables to terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Subst {
    map: BTreeMap<Var, Term>,
}

impl Subst {
    pub fn new() -> Subst {
        Subst::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.map.iter()
    }

    /// Bind `v` to `t`, normalizing existing bindings so the result stays
    /// idempotent. `t` must not contain `v`.
    pub fn bind(&mut self, v: Var, t: Term) {
        debug_assert_eq!(v.sort, t.sort(), "substitution must preserve sorts");
        let t = self.apply_term(&t);
        let mut single = Subst::new();
        single.map.insert(v.clone(), t.clone());
        for val in self.map.values_mut() {
            *val = single.apply_term(val);
        }
        self.map.insert(v, t);
    }

    pub fn apply_term(&self, t: &Term) -> Term {
        match t {
            Term::Var(v) => self.map.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::Int(_) | Term::Bool(_) => t.clone(),
            Term::Cons(c, s, args) => Term::Cons(
                c.clone(),
                s.clone(),
                args.iter().map(|a| self.apply_term(a)).collect(),
            ),
            Term::Add(a, b) => Term::Add(
                Box::new(self.apply_term(a)),
                Box::new(self.apply_term(b)),
            ),
            Term::Sub(a, b) => Term::Sub(
                Box::new(self.apply_term(a)),
                Box::new(self.apply_term(b)),
            ),
            Term::Neg(a) => Term::Neg(Box::new(self.apply_term(a))),
            Term::Mul(k, a) => Term::Mul(*k, Box::new(self.apply_term(a))),
            Term::Ite(c, a, b) => Term::Ite(
                Box::new(self.apply_constraint(c)),
                Box::new(self.apply_term(a)),
                Box::new(self.apply_term(b)),
            ),
        }
    }

    pub fn apply_constraint(&self, c: &Constraint) -> Constraint {
        match c {
            Constraint::True | Constraint::False => c.clone(),
            Constraint::BoolVar(v) => match self.map.get(v) {
                None => c.clone(),
                Some(Term::Var(w)) => Constraint::BoolVar(w.clone()),
                Some(Term::Bool(true)) => Constraint::True,
                Some(Term::Bool(false)) => Constraint::False,
                // A boolean variable replaced by a non-variable boolean term
                // (only an ite can produce one) becomes an equality with true.
                Some(t) => Constraint::Rel(
                    crate::syntax::RelOp::Eq,
                    t.clone(),
                    Term::Bool(true),
                ),
            },
            Constraint::Rel(op, a, b) => {
                Constraint::Rel(*op, self.apply_term(a), self.apply_term(b))
            }
            Constraint::Not(a) => self.apply_constraint(a).not(),
            Constraint::And(a, b) => Constraint::And(
                Box::new(self.apply_constraint(a)),
                Box::new(self.apply_constraint(b)),
            ),
            Constraint::Or(a, b) => Constraint::Or(
                Box::new(self.apply_constraint(a)),
                Box::new(self.apply_constraint(b)),
            ),
            Constraint::Implies(a, b) => Constraint::Implies(
                Box::new(self.apply_constraint(a)),
                Box::new(self.apply_constraint(b)),
            ),
            Constraint::Iff(a, b) => Constraint::Iff(
                Box::new(self.apply_constraint(a)),
                Box::new(self.apply_constraint(b)),
            ),
            Constraint::Ite(c0, a, b) => Constraint::Ite(
                Box::new(self.apply_constraint(c0)),
                Box::new(self.apply_constraint(a)),
                Box::new(self.apply_constraint(b)),
            ),
        }
    }

    pub fn apply_atom(&self, a: &Atom) -> Atom {
        Atom {
            pred: a.pred.clone(),
            args: a.args.iter().map(|t| self.apply_term(t)).collect(),
        }
    }

    pub fn apply_clause(&self, c: &Clause) -> Clause {
        Clause {
            head: match &c.head {
                Head::False => Head::False,
                Head::Atom(a) => Head::Atom(self.apply_atom(a)),
            },
            constraint: self.apply_constraint(&c.constraint),
            body: c.body.iter().map(|a| self.apply_atom(a)).collect(),
            origin: c.origin.clone(),
        }
    }
}

fn occurs(v: &Var, t: &Term) -> bool {
    match t {
        Term::Var(w) => v == w,
        Term::Int(_) | Term::Bool(_) => false,
        Term::Cons(_, _, args) => args.iter().any(|a| occurs(v, a)),
        Term::Add(a, b) | Term::Sub(a, b) => occurs(v, a) || occurs(v, b),
        Term::Neg(a) | Term::Mul(_, a) => occurs(v, a),
        Term::Ite(_, a, b) => occurs(v, a) || occurs(v, b),
    }
}

fn unify_terms(a: &Term, b: &Term, s: &mut Subst) -> bool {
    let a = s.apply_term(a);
    let b = s.apply_term(b);
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => true,
        (Term::Var(x), t) | (t, Term::Var(x)) => {
            if x.sort != t.sort() || occurs(x, t) {
                return false;
            }
            s.bind(x.clone(), t.clone());
            true
        }
        (Term::Int(i), Term::Int(j)) => i == j,
        (Term::Bool(i), Term::Bool(j)) => i == j,
        (Term::Cons(c1, s1, a1), Term::Cons(c2, s2, a2)) => {
            c1 == c2
                && s1 == s2
                && a1.len() == a2.len()
                && a1.iter().zip(a2).all(|(x, y)| unify_terms(x, y, s))
        }
        (Term::Add(x1, y1), Term::Add(x2, y2)) | (Term::Sub(x1, y1), Term::Sub(x2, y2)) => {
            unify_terms(x1, x2, s) && unify_terms(y1, y2, s)
        }
        (Term::Neg(x), Term::Neg(y)) => unify_terms(x, y, s),
        (Term::Mul(k1, x), Term::Mul(k2, y)) => k1 == k2 && unify_terms(x, y, s),
        _ => false,
    }
}

/// Most general unifier of two atoms, if the predicates match and the
/// argument terms unify. The result is idempotent and sort-preserving.
pub fn mgu(a: &Atom, b: &Atom) -> Option<Subst> {
    if a.pred != b.pred || a.args.len() != b.args.len() {
        return None;
    }
    let mut s = Subst::new();
    for (x, y) in a.args.iter().zip(&b.args) {
        if !unify_terms(x, y, &mut s) {
            return None;
        }
    }
    Some(s)
}

/// A fresh variant of a clause: every variable consistently renamed to a new
/// one with the same printable name and sort.
pub fn rename_clause(c: &Clause) -> Clause {
    let mut s = Subst::new();
    for v in c.vars() {
        s.bind(v.clone(), Term::Var(v.renamed()));
    }
    s.apply_clause(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::Sort;

    fn list_int() -> Sort {
        Sort::adt("list(int)")
    }

    fn nil() -> Term {
        Term::Cons("[]".into(), list_int(), vec![])
    }

    fn cons(h: Term, t: Term) -> Term {
        Term::Cons("cons".into(), list_int(), vec![h, t])
    }

    #[test]
    fn mgu_matches_empty_list_head() {
        // rev(L,R) against rev([],[]) binds both variables to nil.
        let l = Var::fresh("L", list_int());
        let r = Var::fresh("R", list_int());
        let a = Atom::new("rev", vec![Term::var(&l), Term::var(&r)]);
        let b = Atom::new("rev", vec![nil(), nil()]);
        let s = mgu(&a, &b).expect("unifiable");
        assert_eq!(s.get(&l), Some(&nil()));
        assert_eq!(s.get(&r), Some(&nil()));
    }

    #[test]
    fn mgu_matches_cons_pattern_head() {
        // rev(L,R) against rev([H|T],R2): L binds to the pattern, R to R2.
        let l = Var::fresh("L", list_int());
        let r = Var::fresh("R", list_int());
        let h = Var::fresh("H", Sort::Int);
        let t = Var::fresh("T", list_int());
        let r2 = Var::fresh("R2", list_int());
        let a = Atom::new("rev", vec![Term::var(&l), Term::var(&r)]);
        let b = Atom::new(
            "rev",
            vec![cons(Term::var(&h), Term::var(&t)), Term::var(&r2)],
        );
        let s = mgu(&a, &b).expect("unifiable");
        assert_eq!(s.get(&l), Some(&cons(Term::var(&h), Term::var(&t))));
        assert_eq!(s.get(&r), Some(&Term::var(&r2)));
        // Applying the unifier to a body atom of the second clause leaves it alone.
        let body = Atom::new("snoc", vec![Term::var(&t), Term::var(&h), Term::var(&r2)]);
        assert_eq!(s.apply_atom(&body), body);
    }

    #[test]
    fn mgu_fails_on_constant_clash() {
        // p(X,X) against p(0,1) has no unifier.
        let x = Var::fresh("X", Sort::Int);
        let a = Atom::new("p", vec![Term::var(&x), Term::var(&x)]);
        let b = Atom::new("p", vec![Term::Int(0), Term::Int(1)]);
        assert!(mgu(&a, &b).is_none());
    }

    #[test]
    fn mgu_fails_on_occurs_check() {
        let x = Var::fresh("X", list_int());
        let h = Var::fresh("H", Sort::Int);
        let a = Atom::new("p", vec![Term::var(&x)]);
        let b = Atom::new("p", vec![cons(Term::var(&h), Term::var(&x))]);
        assert!(mgu(&a, &b).is_none());
    }

    #[test]
    fn subst_application_is_simultaneous() {
        // {X -> Y} on p(X,Y) gives p(Y,Y).
        let x = Var::fresh("X", Sort::Int);
        let y = Var::fresh("Y", Sort::Int);
        let mut s = Subst::new();
        s.bind(x.clone(), Term::var(&y));
        let a = Atom::new("p", vec![Term::var(&x), Term::var(&y)]);
        let out = s.apply_atom(&a);
        assert_eq!(out.args, vec![Term::var(&y), Term::var(&y)]);
    }

    #[test]
    fn computed_mgu_is_idempotent() {
        let l = Var::fresh("L", list_int());
        let r = Var::fresh("R", list_int());
        let h = Var::fresh("H", Sort::Int);
        let t = Var::fresh("T", list_int());
        let a = Atom::new("rev", vec![Term::var(&l), Term::var(&r)]);
        let b = Atom::new(
            "rev",
            vec![cons(Term::var(&h), Term::var(&t)), cons(Term::var(&h), nil())],
        );
        let s = mgu(&a, &b).expect("unifiable");
        let once = s.apply_atom(&a);
        let twice = s.apply_atom(&once);
        assert_eq!(once, twice);
    }
}
