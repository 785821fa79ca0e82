//! The clause transformation engine: definition introduction, unfolding,
//! contract application, and folding, producing ADT-free clauses.
//!
//! Each contract goal is processed as its own chain with a fresh definition
//! registry (predicate name counters are shared across chains, so the union
//! of the chain outputs has disjoint new predicates). Within a chain the
//! worklist loop introduces definitions until every derived clause is
//! foldable, then the final fold removes program atoms and catamorphism
//! atoms together.
//!
//! Definitions are keyed by program predicate *and* the constructor pattern
//! shape of the atom they define (programs whose clause bodies pattern-match
//! sub-structures, such as tree deletion, need one definition per shape);
//! for pattern-free programs this coincides with one maximal definition per
//! predicate.

use crate::cata::Classification;
use crate::constraints::{ConstraintSolver, Entailment};
use crate::emit::display_clause;
use crate::error::{Error, Result};
use crate::parse::{contract_to_goal, Contract, SourceProgram};
use crate::smt::SatResult;
use crate::subst::{mgu, rename_clause, Subst};
use crate::syntax::{Atom, Clause, Constraint, Head, Origin, RelOp, Sort, Term, Var};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

/// A definition `newp(U) <- c, A, Catas` introduced by the Define procedure.
#[derive(Clone, Debug)]
pub struct Definition {
    pub new_pred: Arc<str>,
    /// The basic-sorted head variable tuple U, in first-occurrence order
    /// over the body.
    pub head_vars: Vec<Var>,
    pub constraint: Constraint,
    pub program_atom: Atom,
    pub catas: Vec<Atom>,
    pub for_predicate: Arc<str>,
    /// Canonical shape of the program atom's arguments.
    pub pattern: String,
    pub is_maximal: bool,
}

impl Definition {
    pub fn clause(&self) -> Clause {
        let mut body = vec![self.program_atom.clone()];
        body.extend(self.catas.iter().cloned());
        Clause {
            head: Head::Atom(Atom {
                pred: self.new_pred.clone(),
                args: self.head_vars.iter().map(Term::var).collect(),
            }),
            constraint: self.constraint.clone(),
            body,
            origin: Origin::Derived(0),
        }
    }

    fn rename(&self) -> Definition {
        let mut s = Subst::new();
        let mut vars: BTreeSet<Var> = BTreeSet::new();
        self.program_atom.free_vars(&mut vars);
        self.catas.iter().for_each(|a| a.free_vars(&mut vars));
        self.constraint.free_vars(&mut vars);
        vars.extend(self.head_vars.iter().cloned());
        for v in vars {
            s.bind(v.clone(), Term::Var(v.renamed()));
        }
        Definition {
            new_pred: self.new_pred.clone(),
            head_vars: self
                .head_vars
                .iter()
                .map(|v| match s.get(v) {
                    Some(Term::Var(w)) => w.clone(),
                    _ => v.clone(),
                })
                .collect(),
            constraint: s.apply_constraint(&self.constraint),
            program_atom: s.apply_atom(&self.program_atom),
            catas: self.catas.iter().map(|a| s.apply_atom(a)).collect(),
            for_predicate: self.for_predicate.clone(),
            pattern: self.pattern.clone(),
            is_maximal: self.is_maximal,
        }
    }
}

/// Canonical shape of an atom's arguments: variables print as `_`,
/// constructor structure is kept.
pub fn pattern_key(atom: &Atom) -> String {
    fn term_shape(t: &Term, out: &mut String) {
        match t {
            Term::Cons(name, _, args) => {
                out.push_str(name);
                if !args.is_empty() {
                    out.push('(');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        term_shape(a, out);
                    }
                    out.push(')');
                }
            }
            _ => out.push('_'),
        }
    }
    let mut out = format!("{}(", atom.pred);
    for (i, t) in atom.args.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        term_shape(t, &mut out);
    }
    out.push(')');
    out
}

/// The catamorphism atoms of `body` sharing an ADT variable with `atom`.
pub fn cata_neighborhood(atom: &Atom, body: &[Atom], cls: &Classification) -> Vec<Atom> {
    let avars = atom.adt_vars();
    body.iter()
        .filter(|b| {
            cls.is_cata(&b.pred) && b.adt_vars().iter().any(|v| avars.contains(v))
        })
        .cloned()
        .collect()
}

// ---------------------------------------------------------------------------
// One-way matching of a definition body onto a clause fragment
// ---------------------------------------------------------------------------

fn match_term(def_t: &Term, clause_t: &Term, theta: &mut Subst, def_vars: &BTreeSet<Var>) -> bool {
    let def_t = theta.apply_term(def_t);
    match (&def_t, clause_t) {
        (t, s) if t == s => true,
        (Term::Var(v), t) if def_vars.contains(v) => {
            // Only the definition's own (unbound) variables may bind;
            // clause-side variables introduced by earlier bindings must
            // already be syntactically equal, handled above.
            if v.sort != t.sort() {
                return false;
            }
            theta.bind(v.clone(), t.clone());
            true
        }
        (Term::Cons(c1, s1, a1), Term::Cons(c2, s2, a2)) => {
            c1 == c2
                && s1 == s2
                && a1.len() == a2.len()
                && a1
                    .iter()
                    .zip(a2.iter())
                    .all(|(x, y)| match_term(x, y, theta, def_vars))
        }
        _ => false,
    }
}

fn match_atom(
    def_a: &Atom,
    clause_a: &Atom,
    theta: &mut Subst,
    def_vars: &BTreeSet<Var>,
) -> bool {
    def_a.pred == clause_a.pred
        && def_a.args.len() == clause_a.args.len()
        && def_a
            .args
            .iter()
            .zip(&clause_a.args)
            .all(|(x, y)| match_term(x, y, theta, def_vars))
}

/// A successful match of a (renamed) definition onto a clause's program atom
/// and its catamorphism neighborhood.
struct DefMatch {
    /// Bindings for the definition's variables; unmatched definition
    /// variables are bound to fresh clause-side variables.
    theta: Subst,
    /// Definition catamorphisms that found no counterpart in the clause.
    unmatched_def_catas: Vec<Atom>,
}

/// Match `def`'s program atom onto `atom` and its catamorphisms onto the
/// neighborhood (injectively on atoms, by backtracking). When `exact` is
/// set, every neighborhood atom must be covered.
fn match_definition(
    def: &Definition,
    atom: &Atom,
    neighborhood: &[Atom],
    exact: bool,
) -> Option<DefMatch> {
    let mut def_vars: BTreeSet<Var> = BTreeSet::new();
    def.program_atom.free_vars(&mut def_vars);
    def.catas.iter().for_each(|a| a.free_vars(&mut def_vars));
    def.constraint.free_vars(&mut def_vars);
    def_vars.extend(def.head_vars.iter().cloned());

    let mut theta = Subst::new();
    if !match_atom(&def.program_atom, atom, &mut theta, &def_vars) {
        return None;
    }
    // Backtracking assignment of neighborhood atoms to definition catas.
    fn assign(
        i: usize,
        neighborhood: &[Atom],
        def_catas: &[Atom],
        used: &mut Vec<bool>,
        theta: &Subst,
        def_vars: &BTreeSet<Var>,
    ) -> Option<(Subst, Vec<bool>)> {
        if i == neighborhood.len() {
            return Some((theta.clone(), used.clone()));
        }
        let target = &neighborhood[i];
        for (j, cand) in def_catas.iter().enumerate() {
            if used[j] || cand.pred != target.pred {
                continue;
            }
            let mut t2 = theta.clone();
            if match_atom(cand, target, &mut t2, def_vars) {
                used[j] = true;
                if let Some(ok) = assign(i + 1, neighborhood, def_catas, used, &t2, def_vars) {
                    return Some(ok);
                }
                used[j] = false;
            }
        }
        None
    }
    let mut used = vec![false; def.catas.len()];
    let (mut theta, used) = if neighborhood.is_empty() {
        (theta, used)
    } else {
        match assign(0, neighborhood, &def.catas, &mut used, &theta, &def_vars) {
            Some(r) => r,
            None => {
                if exact {
                    return None;
                }
                // Partial mode: greedily match what we can, one atom at a time.
                let mut used = vec![false; def.catas.len()];
                let mut th = theta;
                for target in neighborhood {
                    for (j, cand) in def.catas.iter().enumerate() {
                        if used[j] || cand.pred != target.pred {
                            continue;
                        }
                        let mut t2 = th.clone();
                        if match_atom(cand, target, &mut t2, &def_vars) {
                            used[j] = true;
                            th = t2;
                            break;
                        }
                    }
                }
                (th, used)
            }
        }
    };
    // Freshen any unbound definition variable (outputs of unmatched catas).
    for v in &def_vars {
        if theta.get(v).is_none() {
            theta.bind(v.clone(), Term::Var(v.renamed()));
        }
    }
    let unmatched: Vec<Atom> = def
        .catas
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(a, _)| theta.apply_atom(a))
        .collect();
    Some(DefMatch {
        theta,
        unmatched_def_catas: unmatched,
    })
}

// ---------------------------------------------------------------------------
// Transformation state
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct TransformOptions {
    pub iteration_cap: u32,
    pub trace: bool,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions {
            iteration_cap: 1000,
            trace: false,
        }
    }
}

/// The output of one goal's transformation chain.
#[derive(Clone, Debug)]
pub struct ChainResult {
    /// The contract predicate (or `goal` for explicit goals).
    pub source: Arc<str>,
    pub clauses: Vec<Clause>,
    pub defs: Vec<Definition>,
    pub iterations: u32,
}

/// The complete transformation output.
#[derive(Debug, Default)]
pub struct TransformResult {
    pub chains: Vec<ChainResult>,
    pub trace: String,
}

impl TransformResult {
    /// The union of the chain outputs.
    pub fn clauses(&self) -> Vec<Clause> {
        self.chains
            .iter()
            .flat_map(|c| c.clauses.iter().cloned())
            .collect()
    }
}

struct Chain<'a> {
    program: &'a [Clause],
    contracts: &'a BTreeMap<String, Contract>,
    cls: &'a Classification,
    solver: &'a mut ConstraintSolver,
    defs: Vec<Definition>,
    pred_counter: &'a mut u32,
    clause_counter: &'a mut u32,
    trace: &'a mut String,
    tracing: bool,
}

impl<'a> Chain<'a> {
    fn log(&mut self, line: &str) {
        if self.tracing {
            self.trace.push_str(line);
            self.trace.push('\n');
        }
    }

    fn new_clause_id(&mut self) -> u32 {
        *self.clause_counter += 1;
        *self.clause_counter
    }

    fn log_clause(&mut self, c: &Clause) -> u32 {
        let id = self.new_clause_id();
        if self.tracing {
            let line = format!("clause c{} := {}", id, display_clause(c));
            self.trace.push_str(&line);
            self.trace.push('\n');
        }
        id
    }

    fn is_program_atom(&self, a: &Atom) -> bool {
        self.cls.is_program(&a.pred)
    }

    /// The foldable test for one program atom of a clause: some definition
    /// covers the atom's neighborhood and the clause constraint entails the
    /// definition constraint.
    fn atom_foldable(&mut self, clause: &Clause, atom: &Atom) -> Result<bool> {
        let neighborhood = cata_neighborhood(atom, &clause.body, self.cls);
        for i in 0..self.defs.len() {
            if self.defs[i].for_predicate != atom.pred {
                continue;
            }
            let def = self.defs[i].rename();
            if let Some(m) = match_definition(&def, atom, &neighborhood, true) {
                let d = m.theta.apply_constraint(&def.constraint);
                if self.solver.entails(&clause.constraint, &d)? == Entailment::Yes {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    fn clause_foldable(&mut self, clause: &Clause) -> Result<bool> {
        for atom in clause.body.clone() {
            if self.is_program_atom(&atom) && !self.atom_foldable(clause, &atom)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Basic-sorted variables of an atom list in first-occurrence order.
    fn bvars_ordered(atoms: &[&Atom]) -> Vec<Var> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for a in atoms {
            let mut vars = BTreeSet::new();
            a.free_vars(&mut vars);
            // Argument order, not set order.
            for t in &a.args {
                let mut tv = BTreeSet::new();
                t.free_vars(&mut tv);
                for v in term_vars_ordered(t) {
                    if v.sort.is_basic() && seen.insert(v.clone()) {
                        out.push(v);
                    }
                }
                let _ = tv;
            }
            let _ = vars;
        }
        out
    }

    /// The Define procedure over a worklist of clauses. Returns the new
    /// definitions; afterwards every input clause is foldable.
    fn define(&mut self, in_cls: &[(u32, Clause)]) -> Result<Vec<Definition>> {
        let mut new_defs = Vec::new();
        for (cid, clause) in in_cls {
            for atom in clause.body.clone() {
                if !self.is_program_atom(&atom) {
                    continue;
                }
                if self.atom_foldable(clause, &atom)? {
                    self.log(&format!("define.skip c{} atom={}", cid, atom.pred));
                    continue;
                }
                let neighborhood = cata_neighborhood(&atom, &clause.body, self.cls);
                let pattern = pattern_key(&atom);
                let maximal_idx = self
                    .defs
                    .iter()
                    .position(|d| d.is_maximal && d.for_predicate == atom.pred && d.pattern == pattern);
                let def = if let Some(idx) = maximal_idx {
                    // Extend: union the catamorphism sets and widen the constraint.
                    let old = self.defs[idx].rename();
                    let m = match_definition(&old, &atom, &neighborhood, false)
                        .ok_or_else(|| {
                            Error::Internal(format!(
                                "maximal definition for {} does not match its own pattern",
                                atom.pred
                            ))
                        })?;
                    let mut catas: Vec<Atom> = neighborhood.clone();
                    for extra in &m.unmatched_def_catas {
                        if !catas.contains(extra) {
                            catas.push(extra.clone());
                        }
                    }
                    let widened = self.solver.widen(
                        &m.theta.apply_constraint(&old.constraint),
                        &clause.constraint,
                    )?;
                    *self.pred_counter += 1;
                    let name: Arc<str> = Arc::from(format!("ext{}", self.pred_counter));
                    self.defs[idx].is_maximal = false;
                    let mut body_atoms: Vec<&Atom> = vec![&atom];
                    body_atoms.extend(catas.iter());
                    let head_vars = Self::bvars_ordered(&body_atoms);
                    let d = Definition {
                        new_pred: name.clone(),
                        head_vars,
                        constraint: widened,
                        program_atom: atom.clone(),
                        catas,
                        for_predicate: atom.pred.clone(),
                        pattern,
                        is_maximal: true,
                    };
                    self.log(&format!(
                        "define.extend {} for={} supersedes={} from=c{}",
                        name, atom.pred, old.new_pred, cid
                    ));
                    d
                } else {
                    // Project: a first definition for this atom shape.
                    let mut inputs: BTreeSet<Var> = atom.basic_vars();
                    for cata in &neighborhood {
                        if let Some(info) = self.cls.catamorphisms.get(&*cata.pred) {
                            for i in &info.input_positions {
                                if let Some(v) = cata.args[*i].as_var() {
                                    inputs.insert(v.clone());
                                }
                            }
                        }
                    }
                    let projected = self.solver.project(&clause.constraint, &inputs);
                    *self.pred_counter += 1;
                    let name: Arc<str> = Arc::from(format!("new{}", self.pred_counter));
                    let mut body_atoms: Vec<&Atom> = vec![&atom];
                    body_atoms.extend(neighborhood.iter());
                    let head_vars = Self::bvars_ordered(&body_atoms);
                    let d = Definition {
                        new_pred: name.clone(),
                        head_vars,
                        constraint: projected,
                        program_atom: atom.clone(),
                        catas: neighborhood,
                        for_predicate: atom.pred.clone(),
                        pattern,
                        is_maximal: true,
                    };
                    self.log(&format!(
                        "define.project {} for={} from=c{}",
                        name, atom.pred, cid
                    ));
                    d
                };
                let dc = def.clause();
                self.log_clause(&dc);
                if std::env::var("CATA_DEBUG").is_ok() {
                    eprintln!("DEF {}", display_clause(&dc));
                }
                self.defs.push(def.clone());
                new_defs.push(def);
            }
        }
        Ok(new_defs)
    }

    /// Resolvents of `clause` on the body atom at `pos` against the program,
    /// dropping those with unsatisfiable constraints.
    fn unfold_step(&mut self, clause: &Clause, pos: usize) -> Result<Vec<Clause>> {
        let atom = &clause.body[pos];
        let mut out = Vec::new();
        for pc in self.program {
            let Some(head) = pc.head.as_atom() else {
                continue;
            };
            if head.pred != atom.pred || head.args.len() != atom.args.len() {
                continue;
            }
            let pc = rename_clause(pc);
            let phead = pc.head.as_atom().unwrap();
            let Some(theta) = mgu(atom, phead) else {
                continue;
            };
            let constraint = theta
                .apply_constraint(&clause.constraint)
                .and(theta.apply_constraint(&pc.constraint));
            if self.solver.is_sat(&constraint)? == SatResult::Unsat {
                continue;
            }
            let mut body = Vec::with_capacity(clause.body.len() - 1 + pc.body.len());
            for (i, b) in clause.body.iter().enumerate() {
                if i == pos {
                    body.extend(pc.body.iter().map(|a| theta.apply_atom(a)));
                } else {
                    body.push(theta.apply_atom(b));
                }
            }
            out.push(Clause {
                head: match &clause.head {
                    Head::False => Head::False,
                    Head::Atom(a) => Head::Atom(theta.apply_atom(a)),
                },
                constraint,
                body,
                origin: Origin::Derived(0),
            });
        }
        Ok(out)
    }

    /// Unfold steps 2 and 3: decompose catamorphism atoms with constructor
    /// ADT arguments, then merge duplicate catamorphism applications by
    /// functionality.
    fn unfold_catas_and_merge(&mut self, clause: Clause) -> Result<Vec<Clause>> {
        // Step 2 fixpoint.
        let mut work = vec![clause];
        let mut done: Vec<Clause> = Vec::new();
        while let Some(c) = work.pop() {
            let target = c.body.iter().position(|a| {
                self.cls
                    .catamorphisms
                    .get(&*a.pred)
                    .is_some_and(|info| !a.args[info.adt_position].is_var())
            });
            match target {
                None => done.push(c),
                Some(pos) => {
                    let resolvents = self.unfold_step(&c, pos)?;
                    work.extend(resolvents);
                }
            }
        }
        // Step 3: functionality merge per clause.
        let mut out = Vec::new();
        for mut c in done {
            let mut i = 0;
            while i < c.body.len() {
                if let Some(info) = self.cls.catamorphisms.get(&*c.body[i].pred) {
                    let key = info.adt_position + 1;
                    let mut j = i + 1;
                    while j < c.body.len() {
                        if c.body[j].pred == c.body[i].pred
                            && c.body[j].args[..key] == c.body[i].args[..key]
                        {
                            // Equate outputs and drop the duplicate.
                            for (x, y) in c.body[i].args[key..]
                                .iter()
                                .zip(&c.body[j].args[key..])
                            {
                                if x != y {
                                    let eq = match x.sort() {
                                        Sort::Bool => {
                                            // Boolean output pair.
                                            Constraint::Iff(
                                                Box::new(bool_term(x)),
                                                Box::new(bool_term(y)),
                                            )
                                        }
                                        _ => Constraint::Rel(
                                            RelOp::Eq,
                                            x.clone(),
                                            y.clone(),
                                        ),
                                    };
                                    c.constraint = c.constraint.and(eq);
                                }
                            }
                            c.body.remove(j);
                        } else {
                            j += 1;
                        }
                    }
                }
                i += 1;
            }
            if self.solver.is_sat(&c.constraint)? != SatResult::Unsat {
                out.push(c);
            }
        }
        Ok(out)
    }

    /// The Unfold procedure: resolve each fresh definition's program atom
    /// against the program, decompose catamorphism atoms with constructor
    /// arguments, and merge duplicate catamorphism applications.
    fn unfold(&mut self, new_defs: &[Definition]) -> Result<Vec<(u32, Clause)>> {
        let mut out = Vec::new();
        for def in new_defs {
            let dc = def.clause();
            // Step 1: the single program atom sits at body position 0.
            let resolvents = self.unfold_step(&dc, 0)?;
            let mut ids = String::new();
            for r in resolvents {
                for c in self.unfold_catas_and_merge(r)? {
                    let id = self.log_clause(&c);
                    let _ = write!(ids, " c{}", id);
                    out.push((id, c));
                }
            }
            self.log(&format!("unfold {} ->{}", def.new_pred, ids));
        }
        Ok(out)
    }

    /// The Apply-Contracts procedure: for each program atom, instantiate its
    /// contract, reuse or add the catamorphism atoms, then add the pre- and
    /// postconditions when the precondition instance is entailed.
    fn apply_contracts(&mut self, clauses: Vec<(u32, Clause)>) -> Result<Vec<(u32, Clause)>> {
        let mut out = Vec::new();
        for (cid, mut clause) in clauses {
            let mut pres: Vec<Constraint> = Vec::new();
            let mut posts: Vec<Constraint> = Vec::new();
            let program_atoms: Vec<Atom> = clause
                .body
                .iter()
                .filter(|a| self.is_program_atom(a))
                .cloned()
                .collect();
            for atom in &program_atoms {
                let Some(k) = self.contracts.get(&*atom.pred) else {
                    return Err(Error::MissingContract(atom.pred.to_string()));
                };
                // Fresh instance of the contract; bind Z to the atom's
                // argument terms. The remaining contract variables are free
                // until an existing atom binds them.
                let (params, pre, catas, post) = rename_contract(k);
                let mut bindable: BTreeSet<Var> = BTreeSet::new();
                pre.free_vars(&mut bindable);
                post.free_vars(&mut bindable);
                for ca in &catas {
                    bindable.extend(ca.inputs.iter().cloned());
                    bindable.extend(ca.outputs.iter().cloned());
                }
                let mut sigma = Subst::new();
                for (z, t) in params.iter().zip(&atom.args) {
                    sigma.bind(z.clone(), t.clone());
                }
                for ca in &catas {
                    let inputs: Vec<Term> = ca.inputs.iter().map(Term::var).collect();
                    let outputs: Vec<Term> = ca.outputs.iter().map(Term::var).collect();
                    let adt = sigma.apply_term(&Term::var(&ca.adt_var));
                    self.materialize_cata(
                        &ca.pred,
                        &inputs,
                        &adt,
                        &outputs,
                        &mut bindable,
                        &mut sigma,
                        &mut clause,
                        cid,
                    )?;
                }
                let pre = sigma.apply_constraint(&pre);
                let post = sigma.apply_constraint(&post);
                if pre != Constraint::True {
                    pres.push(pre);
                }
                if post != Constraint::True {
                    posts.push(post);
                }
            }
            // Constraint addition, guarded by entailment of the preconditions.
            if !pres.is_empty() || !posts.is_empty() {
                let pre_conj = Constraint::conj(pres.clone());
                let clause_vars = clause.vars();
                let zs: Vec<Var> = pre_conj
                    .vars()
                    .into_iter()
                    .filter(|v| !clause_vars.contains(v))
                    .collect();
                let guard = self
                    .solver
                    .entails_exists(&clause.constraint, &zs, &pre_conj)?;
                if guard == Entailment::Yes {
                    let mut c = clause.constraint.clone();
                    for p in pres {
                        c = c.and(p);
                    }
                    for p in posts {
                        c = c.and(p);
                    }
                    clause.constraint = c;
                    self.log(&format!("ac.constraints c{} guard=yes", cid));
                } else {
                    self.log(&format!("ac.constraints c{} guard=no (kept)", cid));
                }
            }
            // A final decomposition/functionality pass over the additions.
            for c in self.unfold_catas_and_merge(clause)? {
                let id = self.log_clause(&c);
                out.push((id, c));
            }
        }
        Ok(out)
    }

    /// Realize one contract catamorphism instance `pred(inputs, adt, outputs)`
    /// inside a clause.
    ///
    /// A variable ADT argument either reuses an existing input-compatible
    /// atom (binding still-free contract variables, equating outputs by
    /// functionality) or appends a new atom. A constructor ADT argument is
    /// decomposed through the catamorphism's defining clause, recursing on
    /// the substructure atoms so existing sub-instances are reused instead of
    /// spawning parallel chains.
    #[allow(clippy::too_many_arguments)]
    fn materialize_cata(
        &mut self,
        pred: &Arc<str>,
        inputs: &[Term],
        adt: &Term,
        outputs: &[Term],
        bindable: &mut BTreeSet<Var>,
        sigma: &mut Subst,
        clause: &mut Clause,
        cid: u32,
    ) -> Result<()> {
        let adt = sigma.apply_term(adt);
        match &adt {
            Term::Var(_) => {
                let adt_pos = inputs.len();
                let cands: Vec<Atom> = clause
                    .body
                    .iter()
                    .filter(|b| b.pred == *pred && b.args.get(adt_pos) == Some(&adt))
                    .cloned()
                    .collect();
                'cands: for cand in &cands {
                    let mut trial = sigma.clone();
                    for (x, t) in inputs.iter().zip(&cand.args) {
                        let xt = trial.apply_term(x);
                        if xt == *t {
                            continue;
                        }
                        match &xt {
                            Term::Var(v) if bindable.contains(v) => {
                                trial.bind(v.clone(), t.clone());
                            }
                            _ => continue 'cands,
                        }
                    }
                    let mut equalities = Vec::new();
                    for (y, t) in outputs.iter().zip(&cand.args[adt_pos + 1..]) {
                        let yt = trial.apply_term(y);
                        if yt == *t {
                            continue;
                        }
                        match &yt {
                            Term::Var(v) if bindable.contains(v) => {
                                trial.bind(v.clone(), t.clone());
                            }
                            other => equalities.push(output_equality(other, t)),
                        }
                    }
                    *sigma = trial;
                    for e in equalities {
                        clause.constraint = clause.constraint.and(e);
                    }
                    return Ok(());
                }
                // No reusable atom: append one. Its still-free variables
                // become ordinary clause variables.
                let mut args: Vec<Term> = Vec::with_capacity(inputs.len() + 1 + outputs.len());
                for x in inputs {
                    let t = sigma.apply_term(x);
                    freeze(&t, bindable);
                    args.push(t);
                }
                args.push(adt.clone());
                for y in outputs {
                    let t = sigma.apply_term(y);
                    freeze(&t, bindable);
                    args.push(t);
                }
                let a = Atom {
                    pred: pred.clone(),
                    args,
                };
                self.log(&format!("ac.add c{} {}", cid, a.pred));
                clause.body.push(a);
                Ok(())
            }
            Term::Cons(cname, _, _) => {
                // Decompose one constructor level through the defining clause.
                let adt_pos = inputs.len();
                let cata_clause = self
                    .program
                    .iter()
                    .find(|c| {
                        c.head_pred() == Some(&**pred)
                            && matches!(
                                c.head.as_atom().and_then(|h| h.args.get(adt_pos)),
                                Some(Term::Cons(n, _, _)) if n == cname
                            )
                    })
                    .cloned()
                    .ok_or_else(|| {
                        Error::Internal(format!(
                            "no clause of `{}` for constructor {}",
                            pred, cname
                        ))
                    })?;
                let cc = rename_clause(&cata_clause);
                let chead = cc.head.as_atom().unwrap().clone();
                let cc_vars = cc.vars();
                let mut theta = Subst::new();
                for (i, harg) in chead.args.iter().enumerate() {
                    let target: Term = if i < adt_pos {
                        sigma.apply_term(&inputs[i])
                    } else if i == adt_pos {
                        adt.clone()
                    } else {
                        sigma.apply_term(&outputs[i - adt_pos - 1])
                    };
                    if !match_term(harg, &target, &mut theta, &cc_vars) {
                        return Err(Error::Internal(format!(
                            "cannot align `{}` onto its {} clause",
                            pred, cname
                        )));
                    }
                }
                clause.constraint = clause
                    .constraint
                    .clone()
                    .and(theta.apply_constraint(&cc.constraint));
                for sub in &cc.body {
                    let Some(sub_info) = self.cls.catamorphisms.get(&*sub.pred).cloned() else {
                        return Err(Error::Internal(format!(
                            "non-catamorphism atom `{}` in a catamorphism clause",
                            sub.pred
                        )));
                    };
                    let sp = sub_info.adt_position;
                    let sub_inputs: Vec<Term> =
                        sub.args[..sp].iter().map(|t| theta.apply_term(t)).collect();
                    let sub_adt = theta.apply_term(&sub.args[sp]);
                    let sub_outputs: Vec<Term> = sub.args[sp + 1..]
                        .iter()
                        .map(|t| theta.apply_term(t))
                        .collect();
                    // The sub-atom's output variables are fresh locals the
                    // recursion may bind to existing atoms.
                    for t in &sub_outputs {
                        if let Term::Var(v) = t {
                            bindable.insert(v.clone());
                        }
                    }
                    let sub_pred = sub.pred.clone();
                    self.materialize_cata(
                        &sub_pred,
                        &sub_inputs,
                        &sub_adt,
                        &sub_outputs,
                        bindable,
                        sigma,
                        clause,
                        cid,
                    )?;
                }
                Ok(())
            }
            other => Err(Error::Internal(format!(
                "catamorphism applied to non-ADT term {:?}",
                other
            ))),
        }
    }

    /// The final Fold: keep goals and clauses of maximal definitions, replace
    /// each program atom by its maximal definition's head, drop all
    /// catamorphism atoms.
    fn fold(&mut self, out_cls: &[(u32, Clause)]) -> Result<Vec<Clause>> {
        let maximal_preds: BTreeSet<Arc<str>> = self
            .defs
            .iter()
            .filter(|d| d.is_maximal)
            .map(|d| d.new_pred.clone())
            .collect();
        let mut result = Vec::new();
        for (cid, clause) in out_cls {
            let keep = match &clause.head {
                Head::False => true,
                Head::Atom(a) => maximal_preds.contains(&a.pred),
            };
            if !keep {
                self.log(&format!("fold.drop c{} (superseded head)", cid));
                continue;
            }
            let mut new_body: Vec<Atom> = Vec::new();
            for atom in &clause.body {
                if !self.is_program_atom(atom) {
                    continue;
                }
                let neighborhood = cata_neighborhood(atom, &clause.body, self.cls);
                let pattern = pattern_key(atom);
                let def = self
                    .defs
                    .iter()
                    .find(|d| {
                        d.is_maximal && d.for_predicate == atom.pred && d.pattern == pattern
                    })
                    .cloned()
                    .ok_or_else(|| {
                        Error::Internal(format!(
                            "no maximal definition for {} at fold time",
                            atom.pred
                        ))
                    })?;
                let renamed = def.rename();
                let m = match_definition(&renamed, atom, &neighborhood, true)
                    .ok_or_else(|| {
                        Error::Internal(format!(
                            "clause marked foldable but {} does not match its definition",
                            atom.pred
                        ))
                    })?;
                let inst = m.theta.apply_constraint(&renamed.constraint);
                if self.solver.entails(&clause.constraint, &inst)? != Entailment::Yes {
                    return Err(Error::Internal(format!(
                        "clause marked foldable but the constraint of {} is not entailed",
                        renamed.new_pred
                    )));
                }
                new_body.push(Atom {
                    pred: renamed.new_pred.clone(),
                    args: renamed
                        .head_vars
                        .iter()
                        .map(|v| m.theta.apply_term(&Term::var(v)))
                        .collect(),
                });
            }
            let folded = Clause {
                head: clause.head.clone(),
                constraint: clause.constraint.clone(),
                body: new_body,
                origin: clause.origin.clone(),
            };
            // The fold must have removed every ADT variable.
            if folded.vars().iter().any(|v| v.sort.is_adt()) {
                return Err(Error::Internal(format!(
                    "folded clause still mentions ADT variables: {}",
                    display_clause(&folded)
                )));
            }
            let id = self.log_clause(&folded);
            self.log(&format!("fold c{} -> c{}", cid, id));
            result.push(folded);
        }
        Ok(result)
    }

    /// The main worklist loop for one goal.
    fn run(&mut self, goal: Clause, cap: u32) -> Result<(Vec<Clause>, u32)> {
        let gid = self.log_clause(&goal);
        let mut in_cls: Vec<(u32, Clause)> = vec![(gid, goal)];
        let mut out_cls: Vec<(u32, Clause)> = Vec::new();
        let mut iterations = 0u32;
        while !in_cls.is_empty() {
            iterations += 1;
            if iterations > cap {
                return Err(Error::IterationCap(cap));
            }
            let new_defs = self.define(&in_cls)?;
            // After Define, every worklist clause is foldable; it joins the
            // output set.
            for (cid, c) in &in_cls {
                debug_assert!(self.clause_foldable(c)?);
                out_cls.push((*cid, c.clone()));
            }
            let unfolded = self.unfold(&new_defs)?;
            let rcls = self.apply_contracts(unfolded)?;
            let mut next = Vec::new();
            for (cid, c) in rcls {
                if self.clause_foldable(&c)? {
                    self.log(&format!("split c{} foldable", cid));
                    out_cls.push((cid, c));
                } else {
                    self.log(&format!("split c{} pending", cid));
                    next.push((cid, c));
                }
            }
            in_cls = next;
        }
        let folded = self.fold(&out_cls)?;
        Ok((folded, iterations))
    }
}

fn term_vars_ordered(t: &Term) -> Vec<Var> {
    let mut out = Vec::new();
    fn walk(t: &Term, out: &mut Vec<Var>) {
        match t {
            Term::Var(v) => out.push(v.clone()),
            Term::Int(_) | Term::Bool(_) => {}
            Term::Cons(_, _, args) => args.iter().for_each(|a| walk(a, out)),
            Term::Add(a, b) | Term::Sub(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Term::Neg(a) | Term::Mul(_, a) => walk(a, out),
            Term::Ite(_, a, b) => {
                walk(a, out);
                walk(b, out);
            }
        }
    }
    walk(t, &mut out);
    out
}

fn bool_term(t: &Term) -> Constraint {
    match t {
        Term::Var(v) => Constraint::BoolVar(v.clone()),
        Term::Bool(true) => Constraint::True,
        Term::Bool(false) => Constraint::False,
        other => Constraint::Rel(RelOp::Eq, other.clone(), Term::Bool(true)),
    }
}


fn output_equality(x: &Term, y: &Term) -> Constraint {
    match x.sort() {
        Sort::Bool => Constraint::Iff(Box::new(bool_term(x)), Box::new(bool_term(y))),
        _ => Constraint::Rel(RelOp::Eq, x.clone(), y.clone()),
    }
}

fn freeze(t: &Term, bindable: &mut BTreeSet<Var>) {
    let mut vars = BTreeSet::new();
    t.free_vars(&mut vars);
    for v in vars {
        bindable.remove(&v);
    }
}

fn rename_contract(k: &Contract) -> (Vec<Var>, Constraint, Vec<crate::parse::CataAtom>, Constraint) {
    let mut s = Subst::new();
    let mut vars: BTreeSet<Var> = k.params.iter().cloned().collect();
    k.pre.free_vars(&mut vars);
    k.post.free_vars(&mut vars);
    for c in &k.catas {
        vars.extend(c.inputs.iter().cloned());
        vars.insert(c.adt_var.clone());
        vars.extend(c.outputs.iter().cloned());
    }
    for v in &vars {
        s.bind(v.clone(), Term::Var(v.renamed()));
    }
    let rv = |v: &Var| match s.get(v) {
        Some(Term::Var(w)) => w.clone(),
        _ => v.clone(),
    };
    let params = k.params.iter().map(rv).collect();
    let catas = k
        .catas
        .iter()
        .map(|c| crate::parse::CataAtom {
            pred: c.pred.clone(),
            inputs: c.inputs.iter().map(rv).collect(),
            adt_var: rv(&c.adt_var),
            outputs: c.outputs.iter().map(rv).collect(),
        })
        .collect();
    (
        params,
        s.apply_constraint(&k.pre),
        catas,
        s.apply_constraint(&k.post),
    )
}

/// Run the whole transformation: one chain per contract goal (and per
/// explicit goal), unioned.
pub fn run_tcata(
    p: &SourceProgram,
    cls: &Classification,
    solver: &mut ConstraintSolver,
    opts: TransformOptions,
) -> Result<TransformResult> {
    let program: Vec<Clause> = p.definite_clauses();
    let mut contracts: BTreeMap<String, Contract> = BTreeMap::new();
    for k in &p.contracts {
        contracts.insert(k.pred.to_string(), k.clone());
    }
    // Every program predicate reachable during transformation needs its
    // contract; check the reachable set up front.
    for pred in &cls.program_preds {
        if !contracts.contains_key(pred) {
            return Err(Error::MissingContract(pred.clone()));
        }
    }

    let mut result = TransformResult::default();
    let mut pred_counter = 0u32;
    let mut clause_counter = 0u32;
    let mut trace = String::new();

    let mut goals: Vec<(Arc<str>, Clause)> = Vec::new();
    for k in &p.contracts {
        if let Some(g) = contract_to_goal(k) {
            goals.push((k.pred.clone(), g));
        }
    }
    for g in p.clauses.iter().filter(|c| c.is_goal()) {
        goals.push((Arc::from("goal"), g.clone()));
    }

    for (source, goal) in goals {
        if opts.trace {
            let _ = writeln!(trace, "chain {}", source);
        }
        let mut chain = Chain {
            program: &program,
            contracts: &contracts,
            cls,
            solver,
            defs: Vec::new(),
            pred_counter: &mut pred_counter,
            clause_counter: &mut clause_counter,
            trace: &mut trace,
            tracing: opts.trace,
        };
        let (clauses, iterations) = chain.run(goal, opts.iteration_cap)?;
        let defs = chain.defs;
        result.chains.push(ChainResult {
            source,
            clauses,
            defs,
            iterations,
        });
    }
    result.trace = trace;
    Ok(result)
}
