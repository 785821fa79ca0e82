//! Decision services over basic-sorted constraints: satisfiability,
//! entailment, projection and widening, backed by an [`SmtSession`].
//!
//! Projection is literal filtering plus one round of equality propagation;
//! widening keeps the conjuncts of the left constraint that the right one
//! entails. Both return sound over-approximations, which is all the
//! transformation needs. Entailment answers of `unknown` are treated as
//! "not entailed" by callers that need soundness.

use crate::error::Result;
use crate::smt::{SatResult, SmtSession};
use crate::subst::Subst;
use crate::syntax::{Constraint, RelOp, Sort, Term, Var};
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

/// Three-valued entailment verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entailment {
    Yes,
    No,
    Unknown,
}

/// Render a term in SMT-LIB syntax. Variables print as `v<id>`.
pub fn smt_term(t: &Term, out: &mut String) {
    match t {
        Term::Var(v) => {
            let _ = write!(out, "v{}", v.id);
        }
        Term::Int(i) => {
            if *i < 0 {
                let _ = write!(out, "(- {})", -i);
            } else {
                let _ = write!(out, "{}", i);
            }
        }
        Term::Bool(b) => {
            let _ = write!(out, "{}", b);
        }
        Term::Cons(..) => unreachable!("ADT term in a basic constraint"),
        Term::Add(a, b) => {
            out.push_str("(+ ");
            smt_term(a, out);
            out.push(' ');
            smt_term(b, out);
            out.push(')');
        }
        Term::Sub(a, b) => {
            out.push_str("(- ");
            smt_term(a, out);
            out.push(' ');
            smt_term(b, out);
            out.push(')');
        }
        Term::Neg(a) => {
            out.push_str("(- ");
            smt_term(a, out);
            out.push(')');
        }
        Term::Mul(k, a) => {
            let _ = write!(out, "(* {} ", k);
            smt_term(a, out);
            out.push(')');
        }
        Term::Ite(c, a, b) => {
            out.push_str("(ite ");
            smt_constraint(c, out);
            out.push(' ');
            smt_term(a, out);
            out.push(' ');
            smt_term(b, out);
            out.push(')');
        }
    }
}

/// Render a constraint in SMT-LIB syntax.
pub fn smt_constraint(c: &Constraint, out: &mut String) {
    match c {
        Constraint::True => out.push_str("true"),
        Constraint::False => out.push_str("false"),
        Constraint::BoolVar(v) => {
            let _ = write!(out, "v{}", v.id);
        }
        Constraint::Rel(op, a, b) => {
            let sym = match op {
                RelOp::Eq => "=",
                RelOp::Ge => ">=",
                RelOp::Gt => ">",
                RelOp::Le => "<=",
                RelOp::Lt => "<",
            };
            let _ = write!(out, "({} ", sym);
            smt_term(a, out);
            out.push(' ');
            smt_term(b, out);
            out.push(')');
        }
        Constraint::Not(a) => {
            out.push_str("(not ");
            smt_constraint(a, out);
            out.push(')');
        }
        Constraint::And(a, b) => {
            out.push_str("(and ");
            smt_constraint(a, out);
            out.push(' ');
            smt_constraint(b, out);
            out.push(')');
        }
        Constraint::Or(a, b) => {
            out.push_str("(or ");
            smt_constraint(a, out);
            out.push(' ');
            smt_constraint(b, out);
            out.push(')');
        }
        Constraint::Implies(a, b) => {
            out.push_str("(=> ");
            smt_constraint(a, out);
            out.push(' ');
            smt_constraint(b, out);
            out.push(')');
        }
        Constraint::Iff(a, b) => {
            out.push_str("(= ");
            smt_constraint(a, out);
            out.push(' ');
            smt_constraint(b, out);
            out.push(')');
        }
        Constraint::Ite(c0, a, b) => {
            out.push_str("(ite ");
            smt_constraint(c0, out);
            out.push(' ');
            smt_constraint(a, out);
            out.push(' ');
            smt_constraint(b, out);
            out.push(')');
        }
    }
}

fn smt_sort(s: &Sort) -> &'static str {
    match s {
        Sort::Int => "Int",
        Sort::Bool => "Bool",
        Sort::Adt(_) => unreachable!("ADT variable in a basic constraint"),
    }
}

fn declarations(vars: &BTreeSet<Var>, out: &mut String) {
    for v in vars {
        let _ = writeln!(out, "(declare-const v{} {})", v.id, smt_sort(&v.sort));
    }
}

/// Constraint decision services with a per-run answer cache.
pub struct ConstraintSolver {
    session: SmtSession,
    cache: HashMap<String, SatResult>,
}

impl ConstraintSolver {
    pub fn new(session: SmtSession) -> ConstraintSolver {
        ConstraintSolver {
            session,
            cache: HashMap::new(),
        }
    }

    pub fn default_solver() -> Result<ConstraintSolver> {
        Ok(ConstraintSolver::new(SmtSession::default_session()?))
    }

    pub fn stats(&self) -> &crate::smt::SessionStats {
        &self.session.stats
    }

    fn cached_check(&mut self, script: String) -> Result<SatResult> {
        if let Some(r) = self.cache.get(&script) {
            return Ok(*r);
        }
        let r = self.session.check_sat_scoped(&script)?;
        // Unknown answers are not cached; a later identical query may be
        // luckier after a restart.
        if r != SatResult::Unknown {
            self.cache.insert(script, r);
        }
        Ok(r)
    }

    /// Satisfiability of the existential closure of `c`.
    pub fn is_sat(&mut self, c: &Constraint) -> Result<SatResult> {
        if *c == Constraint::True {
            return Ok(SatResult::Sat);
        }
        if *c == Constraint::False {
            return Ok(SatResult::Unsat);
        }
        let mut script = String::new();
        declarations(&c.vars(), &mut script);
        script.push_str("(assert ");
        smt_constraint(c, &mut script);
        script.push_str(")");
        self.cached_check(script)
    }

    /// Validity of `forall (c -> d)`: yes iff `c & ~d` is unsatisfiable.
    pub fn entails(&mut self, c: &Constraint, d: &Constraint) -> Result<Entailment> {
        if *d == Constraint::True || c == d {
            return Ok(Entailment::Yes);
        }
        let mut vars = c.vars();
        d.free_vars(&mut vars);
        let mut script = String::new();
        declarations(&vars, &mut script);
        script.push_str("(assert ");
        smt_constraint(c, &mut script);
        script.push_str(")\n(assert (not ");
        smt_constraint(d, &mut script);
        script.push_str("))");
        Ok(match self.cached_check(script)? {
            SatResult::Unsat => Entailment::Yes,
            SatResult::Sat => Entailment::No,
            SatResult::Unknown => Entailment::Unknown,
        })
    }

    /// Validity of `forall (c -> exists zs. d)`.
    pub fn entails_exists(
        &mut self,
        c: &Constraint,
        zs: &[Var],
        d: &Constraint,
    ) -> Result<Entailment> {
        if zs.is_empty() {
            return self.entails(c, d);
        }
        let mut vars = c.vars();
        d.free_vars(&mut vars);
        for z in zs {
            vars.remove(z);
        }
        let mut script = String::new();
        declarations(&vars, &mut script);
        script.push_str("(assert ");
        smt_constraint(c, &mut script);
        script.push_str(")\n(assert (not (exists (");
        for z in zs {
            let _ = write!(script, "(v{} {})", z.id, smt_sort(&z.sort));
        }
        script.push_str(") ");
        smt_constraint(d, &mut script);
        script.push_str(")))");
        Ok(match self.cached_check(script)? {
            SatResult::Unsat => Entailment::Yes,
            SatResult::Sat => Entailment::No,
            SatResult::Unknown => Entailment::Unknown,
        })
    }

    /// Projection of `c` onto the variables in `keep`: an entailed constraint
    /// mentioning only those variables. One round of equality propagation
    /// rewrites conjuncts before filtering.
    pub fn project(&self, c: &Constraint, keep: &BTreeSet<Var>) -> Constraint {
        let conjuncts = c.conjuncts();
        // Directed bindings X -> t for variables outside `keep` whose
        // replacement only mentions kept variables.
        let mut subst = Subst::new();
        for lit in &conjuncts {
            match lit {
                Constraint::Rel(RelOp::Eq, a, b) => {
                    for (x, t) in [(a, b), (b, a)] {
                        if let Term::Var(v) = x {
                            if !keep.contains(v) && subst.get(v).is_none() {
                                let mut tv = BTreeSet::new();
                                t.free_vars(&mut tv);
                                if tv.iter().all(|w| keep.contains(w)) && !tv.contains(v) {
                                    subst.bind(v.clone(), (*t).clone());
                                    break;
                                }
                            }
                        }
                    }
                }
                Constraint::Iff(a, b) => {
                    for (x, t) in [(a, b), (b, a)] {
                        if let Constraint::BoolVar(v) = &**x {
                            if !keep.contains(v) && subst.get(v).is_none() {
                                if let Constraint::BoolVar(w) = &**t {
                                    if keep.contains(w) {
                                        subst.bind(v.clone(), Term::Var(w.clone()));
                                        break;
                                    }
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        let mut kept = Vec::new();
        for lit in conjuncts {
            let rewritten = if subst.is_empty() {
                lit.clone()
            } else {
                subst.apply_constraint(lit)
            };
            if rewritten == Constraint::True {
                continue;
            }
            if rewritten.vars().iter().all(|v| keep.contains(v)) {
                // Skip trivial artifacts of propagation such as x = x.
                if let Constraint::Rel(RelOp::Eq, a, b) = &rewritten {
                    if a == b {
                        continue;
                    }
                }
                kept.push(rewritten);
            }
        }
        Constraint::conj(kept)
    }

    /// Widening: the conjuncts of `c1` that `c2` entails. The result is
    /// entailed by both arguments, and iterated widening stabilizes because
    /// the conjunct set only shrinks.
    pub fn widen(&mut self, c1: &Constraint, c2: &Constraint) -> Result<Constraint> {
        let mut kept = Vec::new();
        for lit in c1.conjuncts() {
            if self.entails(c2, lit)? == Entailment::Yes {
                kept.push(lit.clone());
            }
        }
        Ok(Constraint::conj(kept))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver() -> ConstraintSolver {
        ConstraintSolver::default_solver().expect("solver")
    }

    fn int(name: &str) -> Var {
        Var::fresh(name, Sort::Int)
    }

    fn boolv(name: &str) -> Var {
        Var::fresh(name, Sort::Bool)
    }

    fn gt(v: &Var, k: i64) -> Constraint {
        Constraint::Rel(RelOp::Gt, Term::var(v), Term::Int(k))
    }

    fn lt(v: &Var, k: i64) -> Constraint {
        Constraint::Rel(RelOp::Lt, Term::var(v), Term::Int(k))
    }

    fn eq(v: &Var, k: i64) -> Constraint {
        Constraint::Rel(RelOp::Eq, Term::var(v), Term::Int(k))
    }

    #[test]
    fn sat_examples() {
        let mut s = solver();
        let x = int("X");
        // X>0 & X<0 is unsatisfiable.
        let c = gt(&x, 0).and(lt(&x, 0));
        assert_eq!(s.is_sat(&c).unwrap(), SatResult::Unsat);
        // B & ~B2 & (B2=B) is unsatisfiable.
        let b = boolv("B");
        let b2 = boolv("B2");
        let c = Constraint::BoolVar(b.clone())
            .and(Constraint::BoolVar(b2.clone()).not())
            .and(Constraint::Iff(
                Box::new(Constraint::BoolVar(b2)),
                Box::new(Constraint::BoolVar(b)),
            ));
        assert_eq!(s.is_sat(&c).unwrap(), SatResult::Unsat);
        // The constraint of the first recursive resolvent in the reverse
        // derivation, A=(G=>((D=<H)&I)), is satisfiable.
        let (a, g, d, h, i) = (boolv("A"), boolv("G"), int("D"), int("H"), boolv("I"));
        let c = Constraint::Iff(
            Box::new(Constraint::BoolVar(a)),
            Box::new(Constraint::Implies(
                Box::new(Constraint::BoolVar(g)),
                Box::new(
                    Constraint::Rel(RelOp::Le, Term::var(&d), Term::var(&h))
                        .and(Constraint::BoolVar(i)),
                ),
            )),
        );
        assert_eq!(s.is_sat(&c).unwrap(), SatResult::Sat);
    }

    #[test]
    fn entailment_examples() {
        let mut s = solver();
        let x = int("X");
        assert_eq!(s.entails(&eq(&x, 1), &gt(&x, 0)).unwrap(), Entailment::Yes);
        assert_eq!(
            s.entails(&Constraint::True, &gt(&x, 0)).unwrap(),
            Entailment::No
        );
        // Existential right-hand side.
        let y = int("Y");
        let d = Constraint::Rel(RelOp::Gt, Term::var(&y), Term::Int(5));
        assert_eq!(
            s.entails_exists(&Constraint::True, &[y.clone()], &d).unwrap(),
            Entailment::Yes
        );
    }

    #[test]
    fn projection_uses_equality_propagation() {
        let s = solver();
        let x = int("X");
        let y = int("Y");
        // project(X=Y & Y>0, {X}) keeps X>0 after substituting Y by X.
        let c = Constraint::Rel(RelOp::Eq, Term::var(&x), Term::var(&y)).and(gt(&y, 0));
        let keep: BTreeSet<Var> = [x.clone()].into_iter().collect();
        let p = s.project(&c, &keep);
        assert_eq!(p, gt(&x, 0));
        // Projection onto the empty tuple gives true.
        let p = s.project(&c, &BTreeSet::new());
        assert_eq!(p, Constraint::True);
        assert_eq!(s.project(&Constraint::True, &BTreeSet::new()), Constraint::True);
    }

    #[test]
    fn projection_is_entailed(){
        let mut s = solver();
        let x = int("X");
        let y = int("Y");
        let c = Constraint::Rel(RelOp::Eq, Term::var(&x), Term::var(&y))
            .and(gt(&y, 0))
            .and(lt(&x, 10));
        let keep: BTreeSet<Var> = [x.clone()].into_iter().collect();
        let p = s.project(&c, &keep);
        assert!(p.vars().iter().all(|v| keep.contains(v)));
        assert_eq!(s.entails(&c, &p).unwrap(), Entailment::Yes);
    }

    #[test]
    fn widening_examples() {
        let mut s = solver();
        let x = int("X");
        // widen(X>0 & X<5, X>0 & X<7) keeps X>0 only.
        let c1 = gt(&x, 0).and(lt(&x, 5));
        let c2 = gt(&x, 0).and(lt(&x, 7));
        let w = s.widen(&c1, &c2).unwrap();
        assert_eq!(w, gt(&x, 0));
        // widen(c,c) = c up to literal order (here: identical).
        let w = s.widen(&c1, &c1).unwrap();
        assert_eq!(w, c1);
        // widen(X=1, X=2) = true.
        let w = s.widen(&eq(&x, 1), &eq(&x, 2)).unwrap();
        assert_eq!(w, Constraint::True);
    }

    #[test]
    fn widening_chain_stabilizes_within_literal_bound() {
        let mut s = solver();
        let x = int("X");
        let y = int("Y");
        let d0 = gt(&x, 0).and(lt(&x, 5)).and(gt(&y, 2)).and(lt(&y, 9));
        let chain = [
            gt(&x, 0).and(lt(&x, 7)).and(gt(&y, 2)),
            gt(&x, 0).and(gt(&y, 2)).and(lt(&y, 20)),
            gt(&x, 0).and(gt(&y, 1)),
            gt(&x, 0),
            Constraint::True,
            gt(&x, 0),
        ];
        let bound = d0.conjuncts().len() + 1;
        let mut w = d0;
        let mut stable_at = None;
        for (i, d) in chain.iter().enumerate() {
            let next = s.widen(&w, d).unwrap();
            if next == w {
                stable_at = Some(i);
                break;
            }
            // The literal set only shrinks.
            assert!(next.conjuncts().len() <= w.conjuncts().len());
            w = next;
        }
        // After `true` enters the chain the widening is `true` and fixed.
        assert!(stable_at.unwrap_or(chain.len()) <= bound);
    }
}
