//! Serialization: Prolog-like surface syntax and SMT-LIB HORN scripts.
//!
//! Output is deterministic: variables are renamed A, B, C, ... per clause in
//! first-occurrence order (head, then constraint, then body atoms), so two
//! runs over the same input produce byte-identical files.

use crate::syntax::{
    Atom, Clause, Constraint, Head, RelOp, Sort, SortEnv, Term, Var,
};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Canonical variable naming
// ---------------------------------------------------------------------------

fn canonical_name(i: usize) -> String {
    let letter = (b'A' + (i % 26) as u8) as char;
    if i < 26 {
        letter.to_string()
    } else {
        format!("{}{}", letter, i / 26)
    }
}

/// First-occurrence naming map for a clause.
pub fn name_map(c: &Clause) -> BTreeMap<Var, String> {
    let mut order: Vec<Var> = Vec::new();
    let mut seen: BTreeSet<Var> = BTreeSet::new();
    let push = |v: &Var, order: &mut Vec<Var>, seen: &mut BTreeSet<Var>| {
        if seen.insert(v.clone()) {
            order.push(v.clone());
        }
    };
    fn walk_term(t: &Term, push: &mut dyn FnMut(&Var)) {
        match t {
            Term::Var(v) => push(v),
            Term::Int(_) | Term::Bool(_) => {}
            Term::Cons(_, _, args) => args.iter().for_each(|a| walk_term(a, push)),
            Term::Add(a, b) | Term::Sub(a, b) => {
                walk_term(a, push);
                walk_term(b, push);
            }
            Term::Neg(a) | Term::Mul(_, a) => walk_term(a, push),
            Term::Ite(c, a, b) => {
                walk_constraint(c, push);
                walk_term(a, push);
                walk_term(b, push);
            }
        }
    }
    fn walk_constraint(c: &Constraint, push: &mut dyn FnMut(&Var)) {
        match c {
            Constraint::True | Constraint::False => {}
            Constraint::BoolVar(v) => push(v),
            Constraint::Rel(_, a, b) => {
                walk_term(a, push);
                walk_term(b, push);
            }
            Constraint::Not(a) => walk_constraint(a, push),
            Constraint::And(a, b)
            | Constraint::Or(a, b)
            | Constraint::Implies(a, b)
            | Constraint::Iff(a, b) => {
                walk_constraint(a, push);
                walk_constraint(b, push);
            }
            Constraint::Ite(c0, a, b) => {
                walk_constraint(c0, push);
                walk_constraint(a, push);
                walk_constraint(b, push);
            }
        }
    }
    {
        let mut cb = |v: &Var| push(v, &mut order, &mut seen);
        if let Head::Atom(a) = &c.head {
            a.args.iter().for_each(|t| walk_term(t, &mut cb));
        }
        walk_constraint(&c.constraint, &mut cb);
        for a in &c.body {
            a.args.iter().for_each(|t| walk_term(t, &mut cb));
        }
    }
    order
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, canonical_name(i)))
        .collect()
}

// ---------------------------------------------------------------------------
// Prolog-like surface printing
// ---------------------------------------------------------------------------

const P_IMPLIES: u8 = 1;
const P_OR: u8 = 2;
const P_AND: u8 = 3;
const P_NOT: u8 = 4;
const P_CMP: u8 = 5;
const P_ADD: u8 = 6;
const P_MUL: u8 = 7;
const P_ATOMIC: u8 = 10;

fn show_term(t: &Term, names: &BTreeMap<Var, String>, prec: u8, out: &mut String) {
    match t {
        Term::Var(v) => {
            match names.get(v) {
                Some(n) => out.push_str(n),
                None => {
                    let _ = write!(out, "{}_{}", v.name, v.id);
                }
            };
        }
        Term::Int(i) => {
            if *i < 0 && prec > P_ADD {
                let _ = write!(out, "({})", i);
            } else {
                let _ = write!(out, "{}", i);
            }
        }
        Term::Bool(b) => {
            let _ = write!(out, "{}", b);
        }
        Term::Cons(name, _, args) => show_cons(name, args, names, out),
        Term::Add(a, b) => {
            let wrap = prec > P_ADD;
            if wrap {
                out.push('(');
            }
            show_term(a, names, P_ADD, out);
            out.push('+');
            show_term(b, names, P_ADD + 1, out);
            if wrap {
                out.push(')');
            }
        }
        Term::Sub(a, b) => {
            let wrap = prec > P_ADD;
            if wrap {
                out.push('(');
            }
            show_term(a, names, P_ADD, out);
            out.push('-');
            show_term(b, names, P_ADD + 1, out);
            if wrap {
                out.push(')');
            }
        }
        Term::Neg(a) => {
            let wrap = prec > P_MUL;
            if wrap {
                out.push('(');
            }
            out.push('-');
            show_term(a, names, P_ATOMIC, out);
            if wrap {
                out.push(')');
            }
        }
        Term::Mul(k, a) => {
            let wrap = prec > P_MUL;
            if wrap {
                out.push('(');
            }
            let _ = write!(out, "{}*", k);
            show_term(a, names, P_MUL + 1, out);
            if wrap {
                out.push(')');
            }
        }
        Term::Ite(c, a, b) => {
            out.push_str("ite(");
            show_constraint(c, names, P_IMPLIES, out);
            out.push(',');
            show_term(a, names, P_IMPLIES, out);
            out.push(',');
            show_term(b, names, P_IMPLIES, out);
            out.push(')');
        }
    }
}

fn show_cons(name: &str, args: &[Term], names: &BTreeMap<Var, String>, out: &mut String) {
    // Lists print in bracket notation.
    if name == "[]" {
        out.push_str("[]");
        return;
    }
    if name == "cons" && args.len() == 2 {
        out.push('[');
        let mut head = &args[0];
        let mut tail = &args[1];
        loop {
            show_term(head, names, P_AND, out);
            match tail {
                Term::Cons(n, _, a) if &**n == "cons" && a.len() == 2 => {
                    out.push(',');
                    head = &a[0];
                    tail = &a[1];
                }
                Term::Cons(n, _, _) if &**n == "[]" => break,
                other => {
                    out.push('|');
                    show_term(other, names, P_AND, out);
                    break;
                }
            }
        }
        out.push(']');
        return;
    }
    out.push_str(name);
    if !args.is_empty() {
        out.push('(');
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            show_term(a, names, P_IMPLIES, out);
        }
        out.push(')');
    }
}

fn show_constraint(c: &Constraint, names: &BTreeMap<Var, String>, prec: u8, out: &mut String) {
    match c {
        Constraint::True => out.push_str("true"),
        Constraint::False => out.push_str("false"),
        Constraint::BoolVar(v) => match names.get(v) {
            Some(n) => out.push_str(n),
            None => {
                let _ = write!(out, "{}_{}", v.name, v.id);
            }
        },
        Constraint::Rel(op, a, b) => {
            let wrap = prec > P_CMP;
            if wrap {
                out.push('(');
            }
            show_term(a, names, P_CMP + 1, out);
            out.push_str(op.symbol());
            show_term(b, names, P_CMP + 1, out);
            if wrap {
                out.push(')');
            }
        }
        Constraint::Not(a) => {
            let wrap = prec > P_NOT;
            if wrap {
                out.push('(');
            }
            out.push('~');
            show_constraint(a, names, P_NOT + 1, out);
            if wrap {
                out.push(')');
            }
        }
        Constraint::And(a, b) => {
            let wrap = prec > P_AND;
            if wrap {
                out.push('(');
            }
            show_constraint(a, names, P_AND, out);
            out.push_str(" & ");
            show_constraint(b, names, P_AND + 1, out);
            if wrap {
                out.push(')');
            }
        }
        Constraint::Or(a, b) => {
            let wrap = prec > P_OR;
            if wrap {
                out.push('(');
            }
            show_constraint(a, names, P_OR, out);
            out.push_str(" | ");
            show_constraint(b, names, P_OR + 1, out);
            if wrap {
                out.push(')');
            }
        }
        Constraint::Implies(a, b) => {
            let wrap = prec > P_IMPLIES;
            if wrap {
                out.push('(');
            }
            show_constraint(a, names, P_IMPLIES + 1, out);
            out.push_str(" => ");
            show_constraint(b, names, P_IMPLIES, out);
            if wrap {
                out.push(')');
            }
        }
        Constraint::Iff(a, b) => {
            let wrap = prec > P_CMP;
            if wrap {
                out.push('(');
            }
            show_constraint(a, names, P_CMP + 1, out);
            out.push_str(" = ");
            show_constraint(b, names, P_CMP + 1, out);
            if wrap {
                out.push(')');
            }
        }
        Constraint::Ite(c0, a, b) => {
            out.push_str("ite(");
            show_constraint(c0, names, P_IMPLIES, out);
            out.push(',');
            show_constraint(a, names, P_IMPLIES, out);
            out.push(',');
            show_constraint(b, names, P_IMPLIES, out);
            out.push(')');
        }
    }
}

fn show_atom(a: &Atom, names: &BTreeMap<Var, String>, out: &mut String) {
    out.push_str(&a.pred);
    if !a.args.is_empty() {
        out.push('(');
        for (i, t) in a.args.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            show_term(t, names, P_IMPLIES, out);
        }
        out.push(')');
    }
}

/// Render one clause in the surface syntax with canonical variable names.
pub fn display_clause(c: &Clause) -> String {
    let names = name_map(c);
    let mut out = String::new();
    match &c.head {
        Head::False => out.push_str("false"),
        Head::Atom(a) => show_atom(a, &names, &mut out),
    }
    let has_constraint = c.constraint != Constraint::True;
    if has_constraint || !c.body.is_empty() {
        out.push_str(" :- ");
        let mut first = true;
        if has_constraint {
            show_constraint(&c.constraint, &names, P_IMPLIES, &mut out);
            first = false;
        }
        for a in &c.body {
            if !first {
                out.push_str(", ");
            }
            show_atom(a, &names, &mut out);
            first = false;
        }
    }
    out.push('.');
    out
}

/// Serialize clauses (and data declarations for non-builtin sorts) in the
/// surface syntax; reparsing yields alpha-equivalent clauses.
pub fn emit_prolog(clauses: &[Clause], sorts: &SortEnv) -> String {
    let mut out = String::new();
    for def in sorts.defs() {
        let base = def.name.split('(').next().unwrap_or("");
        if base == "list" || base == "tree" {
            continue;
        }
        let _ = write!(out, ":- data {} = ", def.name);
        for (i, c) in def.constructors.iter().enumerate() {
            if i > 0 {
                out.push_str(" | ");
            }
            out.push_str(&c.name);
            if !c.args.is_empty() {
                out.push('(');
                for (j, s) in c.args.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{}", s);
                }
                out.push(')');
            }
        }
        out.push_str(".\n");
    }
    for c in clauses {
        out.push_str(&display_clause(c));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// SMT-LIB emission
// ---------------------------------------------------------------------------

fn sanitize(name: &str) -> String {
    let mut s = String::new();
    for ch in name.chars() {
        match ch {
            '(' | ',' => s.push('_'),
            ')' | ' ' => {}
            '[' => s.push_str("nil"),
            ']' => {}
            c => s.push(c),
        }
    }
    s
}

fn smt_sort_name(s: &Sort) -> String {
    match s {
        Sort::Int => "Int".into(),
        Sort::Bool => "Bool".into(),
        Sort::Adt(n) => sanitize(n),
    }
}

fn smt_ctor_name(sort: &Sort, ctor: &str) -> String {
    format!("{}_{}", sanitize(ctor), smt_sort_name(sort))
}

struct SmtPrinter<'a> {
    names: &'a BTreeMap<Var, String>,
}

impl<'a> SmtPrinter<'a> {
    fn term(&self, t: &Term, out: &mut String) {
        match t {
            Term::Var(v) => out.push_str(&self.names[v]),
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
            Term::Cons(name, sort, args) => {
                if args.is_empty() {
                    out.push_str(&smt_ctor_name(sort, name));
                } else {
                    let _ = write!(out, "({}", smt_ctor_name(sort, name));
                    for a in args {
                        out.push(' ');
                        self.term(a, out);
                    }
                    out.push(')');
                }
            }
            Term::Add(a, b) => self.binop("+", a, b, out),
            Term::Sub(a, b) => self.binop("-", a, b, out),
            Term::Neg(a) => {
                out.push_str("(- ");
                self.term(a, out);
                out.push(')');
            }
            Term::Mul(k, a) => {
                let _ = write!(out, "(* {} ", k);
                self.term(a, out);
                out.push(')');
            }
            Term::Ite(c, a, b) => {
                out.push_str("(ite ");
                self.constraint(c, out);
                out.push(' ');
                self.term(a, out);
                out.push(' ');
                self.term(b, out);
                out.push(')');
            }
        }
    }

    fn binop(&self, op: &str, a: &Term, b: &Term, out: &mut String) {
        let _ = write!(out, "({} ", op);
        self.term(a, out);
        out.push(' ');
        self.term(b, out);
        out.push(')');
    }

    fn constraint(&self, c: &Constraint, out: &mut String) {
        match c {
            Constraint::True => out.push_str("true"),
            Constraint::False => out.push_str("false"),
            Constraint::BoolVar(v) => out.push_str(&self.names[v]),
            Constraint::Rel(op, a, b) => {
                let sym = match op {
                    RelOp::Eq => "=",
                    RelOp::Ge => ">=",
                    RelOp::Gt => ">",
                    RelOp::Le => "<=",
                    RelOp::Lt => "<",
                };
                let _ = write!(out, "({} ", sym);
                self.term(a, out);
                out.push(' ');
                self.term(b, out);
                out.push(')');
            }
            Constraint::Not(a) => {
                out.push_str("(not ");
                self.constraint(a, out);
                out.push(')');
            }
            Constraint::And(a, b) => self.cbin("and", a, b, out),
            Constraint::Or(a, b) => self.cbin("or", a, b, out),
            Constraint::Implies(a, b) => self.cbin("=>", a, b, out),
            Constraint::Iff(a, b) => self.cbin("=", a, b, out),
            Constraint::Ite(c0, a, b) => {
                out.push_str("(ite ");
                self.constraint(c0, out);
                out.push(' ');
                self.constraint(a, out);
                out.push(' ');
                self.constraint(b, out);
                out.push(')');
            }
        }
    }

    fn cbin(&self, op: &str, a: &Constraint, b: &Constraint, out: &mut String) {
        let _ = write!(out, "({} ", op);
        self.constraint(a, out);
        out.push(' ');
        self.constraint(b, out);
        out.push(')');
    }

    fn atom(&self, a: &Atom, out: &mut String) {
        if a.args.is_empty() {
            out.push_str(&sanitize(&a.pred));
        } else {
            let _ = write!(out, "({}", sanitize(&a.pred));
            for t in &a.args {
                out.push(' ');
                self.term(t, out);
            }
            out.push(')');
        }
    }
}

/// Infer predicate signatures from clause occurrences.
fn collect_signatures(clauses: &[Clause]) -> BTreeMap<String, Vec<Sort>> {
    let mut sigs: BTreeMap<String, Vec<Sort>> = BTreeMap::new();
    let mut visit = |a: &Atom| {
        sigs.entry(a.pred.to_string())
            .or_insert_with(|| a.args.iter().map(|t| t.sort()).collect());
    };
    for c in clauses {
        if let Head::Atom(a) = &c.head {
            visit(a);
        }
        c.body.iter().for_each(&mut visit);
    }
    sigs
}

/// Emit a HORN-logic SMT-LIB script for a clause set.
///
/// With `declare_adts` set (baseline mode, clauses still mention ADT terms)
/// the used ADT sorts are emitted as `declare-datatypes`; otherwise the
/// clauses must be basic-sorted.
pub fn emit_smtlib(clauses: &[Clause], sorts: &SortEnv, declare_adts: bool) -> String {
    let mut out = String::new();
    out.push_str("(set-logic HORN)\n");

    if declare_adts {
        // Emit every ADT sort that occurs in the clauses.
        let mut used: BTreeSet<String> = BTreeSet::new();
        fn scan_term(t: &Term, used: &mut BTreeSet<String>) {
            if let Term::Cons(_, Sort::Adt(n), args) = t {
                used.insert(n.to_string());
                args.iter().for_each(|a| scan_term(a, used));
            }
        }
        for c in clauses {
            for v in c.vars() {
                if let Sort::Adt(n) = &v.sort {
                    used.insert(n.to_string());
                }
            }
            if let Head::Atom(a) = &c.head {
                a.args.iter().for_each(|t| scan_term(t, &mut used));
            }
            for a in &c.body {
                a.args.iter().for_each(|t| scan_term(t, &mut used));
            }
        }
        for name in &used {
            let Some(def) = sorts.lookup(name) else {
                continue;
            };
            let sname = smt_sort_name(&Sort::adt(name));
            let _ = write!(out, "(declare-datatypes (({} 0)) ((", sname);
            for ctor in &def.constructors {
                let cname = smt_ctor_name(&Sort::adt(name), &ctor.name);
                if ctor.args.is_empty() {
                    let _ = write!(out, "({})", cname);
                } else {
                    let _ = write!(out, "({}", cname);
                    for (i, s) in ctor.args.iter().enumerate() {
                        let _ = write!(out, " ({}_{} {})", cname, i, smt_sort_name(s));
                    }
                    out.push(')');
                }
            }
            out.push_str(")))\n");
        }
    }

    for (pred, sig) in collect_signatures(clauses) {
        let _ = write!(out, "(declare-fun {} (", sanitize(&pred));
        for (i, s) in sig.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&smt_sort_name(s));
        }
        out.push_str(") Bool)\n");
    }

    for c in clauses {
        let names: BTreeMap<Var, String> = name_map(c);
        let printer = SmtPrinter { names: &names };
        // Deterministic binder order: recover the first-occurrence index
        // from the canonical name.
        let mut vars: Vec<(&Var, &String)> = names.iter().collect();
        vars.sort_by_key(|(_, n)| {
            let bytes = n.as_bytes();
            let letter = (bytes[0] - b'A') as usize;
            let suffix: usize = n[1..].parse().unwrap_or(0);
            suffix * 26 + letter
        });
        out.push_str("(assert ");
        let close_forall = if vars.is_empty() {
            false
        } else {
            out.push_str("(forall (");
            for (v, n) in &vars {
                let _ = write!(out, "({} {})", n, smt_sort_name(&v.sort));
            }
            out.push_str(")\n  ");
            true
        };
        // Body: conjunction of the constraint and the atoms.
        let mut parts: Vec<String> = Vec::new();
        if c.constraint != Constraint::True {
            let mut s = String::new();
            printer.constraint(&c.constraint, &mut s);
            parts.push(s);
        }
        for a in &c.body {
            let mut s = String::new();
            printer.atom(a, &mut s);
            parts.push(s);
        }
        let body = match parts.len() {
            0 => "true".to_string(),
            1 => parts.pop().unwrap(),
            _ => format!("(and {})", parts.join(" ")),
        };
        let head = match &c.head {
            Head::False => "false".to_string(),
            Head::Atom(a) => {
                let mut s = String::new();
                printer.atom(a, &mut s);
                s
            }
        };
        let _ = write!(out, "(=> {} {})", body, head);
        if close_forall {
            out.push(')');
        }
        out.push_str(")\n");
    }
    out.push_str("(check-sat)\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    #[test]
    fn clause_display_uses_canonical_names() {
        let p = parse_program("rev([H|T],R) :- rev(T,S), snoc(S,H,R).").unwrap();
        let s = display_clause(&p.clauses[0]);
        assert_eq!(s, "rev([A|B],C) :- rev(B,D), snoc(D,A,C).");
    }

    #[test]
    fn prolog_roundtrip_is_alpha_equivalent() {
        let text = r#"
rev([],[]).
rev([H|T],R) :- rev(T,S), snoc(S,H,R).
is_asorted([H|T],Res) :- Res = (I => (H=<Hd & RT)), hd(T,I,Hd), is_asorted(T,RT).
count(X,[H|T],N) :- count(X,T,NT), N = ite(X=H,NT+1,NT).
p(X,B) :- (B | X>0) & ~(X<3), q(X).
q(X).
false :- (BL & ~BR), rev(L,R).
"#;
        let p1 = parse_program(text).expect("parse 1");
        let emitted = emit_prolog(&p1.clauses, &p1.sorts);
        let p2 = parse_program(&emitted).expect("parse 2");
        assert_eq!(p1.clauses.len(), p2.clauses.len());
        let again = emit_prolog(&p2.clauses, &p2.sorts);
        // Canonical naming makes alpha-equivalence plain string equality.
        assert_eq!(emitted, again);
    }

    #[test]
    fn custom_data_roundtrips() {
        let text = ":- data nat = zero | succ(nat).\nlen(zero,N) :- N=0.\nlen(succ(M),N) :- len(M,K), N=K+1.\n";
        let p1 = parse_program(text).unwrap();
        let emitted = emit_prolog(&p1.clauses, &p1.sorts);
        assert!(emitted.contains(":- data nat = zero | succ(nat)."));
        let p2 = parse_program(&emitted).unwrap();
        assert_eq!(emit_prolog(&p2.clauses, &p2.sorts), emitted);
    }

    #[test]
    fn smtlib_emission_is_deterministic_and_wellformed() {
        let text = r#"
p(X,B) :- B = (X>0), q(X).
q(X) :- X >= 0.
false :- B & X<0, p(X,B).
"#;
        let p = parse_program(text).unwrap();
        let s1 = emit_smtlib(&p.clauses, &p.sorts, false);
        let s2 = emit_smtlib(&p.clauses, &p.sorts, false);
        assert_eq!(s1, s2);
        assert!(s1.starts_with("(set-logic HORN)\n"));
        assert!(s1.contains("(declare-fun p (Int Bool) Bool)"));
        assert!(s1.contains("(check-sat)"));
        assert!(s1.contains("(=> (and"));
    }

    #[test]
    fn empty_clause_set_is_trivially_sat_script() {
        let s = emit_smtlib(&[], &SortEnv::new(), false);
        assert_eq!(s, "(set-logic HORN)\n(check-sat)\n");
    }

    #[test]
    fn baseline_mode_declares_datatypes() {
        let p = parse_program(crate::parse::REVERSE_WITH_GOALS).unwrap();
        let s = emit_smtlib(&p.clauses, &p.sorts, true);
        assert!(s.contains("(declare-datatypes ((list_int 0))"));
        assert!(s.contains("cons_list_int"));
        assert!(s.contains("(declare-fun rev (list_int list_int) Bool)"));
    }
}
