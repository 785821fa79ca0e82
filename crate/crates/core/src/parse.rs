//! Concrete syntax: lexer, parser, sort inference and contract elaboration.
//!
//! The accepted language is Prolog-like. `%` starts a line comment and
//! `/* ... */` a block comment. Clauses are `head.` or `head :- body.` with a
//! comma-separated body mixing constraint conjuncts and predicate atoms.
//! `list(T)` and `tree(T)` sorts are built in (`[]`, `[H|T]`, `leaf`,
//! `node(L,N,R)`); other data types are declared with
//! `:- data name = c1(sorts) | c2(sorts).`
//! Contracts are written `:- spec p(Z) ==> pre-and-catas => post.`
//!
//! Operator precedence, loosest to tightest: `=>`, `|`, `&`, `~`,
//! comparisons (`=`, `=<`, `<`, `>`, `>=`), `+ -`, `*`, unary minus.
//! `ite(C,T,E)` is a ternary functor. A top-level `=>` inside a spec body
//! must be parenthesized; the unparenthesized one separates body from
//! postcondition.

use crate::error::{Error, Result};
use crate::syntax::{
    instantiate_builtin, AdtDef, Atom, Clause, Constraint, Constructor, Head, Origin, RelOp, Sort,
    SortEnv, Term, Var,
};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Public data types
// ---------------------------------------------------------------------------

/// One catamorphism application inside a contract: `cata(X.., T, Y..)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CataAtom {
    pub pred: Arc<str>,
    pub inputs: Vec<Var>,
    pub adt_var: Var,
    pub outputs: Vec<Var>,
}

impl CataAtom {
    pub fn to_atom(&self) -> Atom {
        let mut args: Vec<Term> = self.inputs.iter().map(Term::var).collect();
        args.push(Term::var(&self.adt_var));
        args.extend(self.outputs.iter().map(Term::var));
        Atom {
            pred: self.pred.clone(),
            args,
        }
    }
}

/// A pre/postcondition contract for one program predicate.
#[derive(Clone, Debug)]
pub struct Contract {
    pub pred: Arc<str>,
    /// The head variable tuple Z (distinct variables).
    pub params: Vec<Var>,
    pub pre: Constraint,
    pub catas: Vec<CataAtom>,
    pub post: Constraint,
    pub line: u32,
}

impl Contract {
    pub fn head_atom(&self) -> Atom {
        Atom {
            pred: self.pred.clone(),
            args: self.params.iter().map(Term::var).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Diagnostic {
    pub line: u32,
    pub message: String,
}

/// A parsed, sort-annotated, normalized program.
#[derive(Clone, Debug, Default)]
pub struct SourceProgram {
    pub clauses: Vec<Clause>,
    pub contracts: Vec<Contract>,
    pub sorts: SortEnv,
    /// Inferred argument sorts per predicate.
    pub sigs: BTreeMap<String, Vec<Sort>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl SourceProgram {
    pub fn definite_clauses(&self) -> Vec<Clause> {
        self.clauses.iter().filter(|c| !c.is_goal()).cloned().collect()
    }

    pub fn goals(&self) -> Vec<Clause> {
        self.clauses.iter().filter(|c| c.is_goal()).cloned().collect()
    }

    pub fn signature(&self, pred: &str) -> Option<&[Sort]> {
        self.sigs.get(pred).map(|v| v.as_slice())
    }

    pub fn contract_for(&self, pred: &str) -> Option<&Contract> {
        self.contracts.iter().find(|c| &*c.pred == pred)
    }
}

/// Translate a contract into its violation goal
/// `false <- ~post, pre, pred(Z), catas`, on a fresh variable instance.
/// A contract whose postcondition is `true` yields no goal (the goal body
/// would be unsatisfiable); the caller reports it as trivially valid.
pub fn contract_to_goal(k: &Contract) -> Option<Clause> {
    if k.post == Constraint::True {
        return None;
    }
    let mut ren = crate::subst::Subst::new();
    let mut vars = BTreeSet::new();
    for v in &k.params {
        vars.insert(v.clone());
    }
    k.pre.free_vars(&mut vars);
    k.post.free_vars(&mut vars);
    for c in &k.catas {
        vars.extend(c.inputs.iter().cloned());
        vars.insert(c.adt_var.clone());
        vars.extend(c.outputs.iter().cloned());
    }
    for v in vars {
        ren.bind(v.clone(), Term::Var(v.renamed()));
    }
    let constraint = ren
        .apply_constraint(&k.post)
        .not()
        .and(ren.apply_constraint(&k.pre));
    let mut body = vec![ren.apply_atom(&k.head_atom())];
    body.extend(k.catas.iter().map(|c| ren.apply_atom(&c.to_atom())));
    Some(Clause {
        head: Head::False,
        constraint,
        body,
        origin: Origin::ContractGoal(k.pred.clone()),
    })
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    UpperVar(String),
    Int(i64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Pipe,
    Dot,
    ColonDash,
    LongArrow, // ==>
    Arrow,     // =>
    Le,        // =<
    Ge,        // >=
    Lt,
    Gt,
    Eq,
    And,
    Tilde,
    Plus,
    Minus,
    Star,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) | Tok::UpperVar(s) => return write!(f, "`{}`", s),
            Tok::Int(i) => return write!(f, "`{}`", i),
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Pipe => "|",
            Tok::Dot => ".",
            Tok::ColonDash => ":-",
            Tok::LongArrow => "==>",
            Tok::Arrow => "=>",
            Tok::Le => "=<",
            Tok::Ge => ">=",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Eq => "=",
            Tok::And => "&",
            Tok::Tilde => "~",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
        };
        write!(f, "`{}`", s)
    }
}

#[derive(Clone, Debug)]
struct Lexed {
    tok: Tok,
    line: u32,
    col: u32,
}

fn lex(text: &str) -> Result<Vec<Lexed>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;
    let err = |line: u32, col: u32, msg: String| Error::Syntax { line, col, msg };
    macro_rules! push {
        ($t:expr, $l:expr, $c:expr) => {
            out.push(Lexed {
                tok: $t,
                line: $l,
                col: $c,
            })
        };
    }
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let adv = |i: &mut usize, line: &mut u32, col: &mut u32| {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        if c.is_whitespace() {
            adv(&mut i, &mut line, &mut col);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                adv(&mut i, &mut line, &mut col);
            }
            continue;
        }
        if c == '/' && i + 1 < chars.len() && chars[i + 1] == '*' {
            adv(&mut i, &mut line, &mut col);
            adv(&mut i, &mut line, &mut col);
            loop {
                if i + 1 >= chars.len() {
                    return Err(err(l0, c0, "unterminated block comment".into()));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    adv(&mut i, &mut line, &mut col);
                    adv(&mut i, &mut line, &mut col);
                    break;
                }
                adv(&mut i, &mut line, &mut col);
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut n: i64 = 0;
            while i < chars.len() && chars[i].is_ascii_digit() {
                n = n
                    .checked_mul(10)
                    .and_then(|m| m.checked_add((chars[i] as u8 - b'0') as i64))
                    .ok_or_else(|| err(l0, c0, "integer literal overflows i64".into()))?;
                adv(&mut i, &mut line, &mut col);
            }
            push!(Tok::Int(n), l0, c0);
            continue;
        }
        if c.is_ascii_lowercase() {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                adv(&mut i, &mut line, &mut col);
            }
            push!(Tok::Ident(s), l0, c0);
            continue;
        }
        if c.is_ascii_uppercase() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                adv(&mut i, &mut line, &mut col);
            }
            push!(Tok::UpperVar(s), l0, c0);
            continue;
        }
        let two = if i + 1 < chars.len() {
            Some((chars[i], chars[i + 1]))
        } else {
            None
        };
        let three = if i + 2 < chars.len() {
            Some((chars[i], chars[i + 1], chars[i + 2]))
        } else {
            None
        };
        if three == Some(('=', '=', '>')) {
            adv(&mut i, &mut line, &mut col);
            adv(&mut i, &mut line, &mut col);
            adv(&mut i, &mut line, &mut col);
            push!(Tok::LongArrow, l0, c0);
            continue;
        }
        match two {
            Some((':', '-')) => {
                adv(&mut i, &mut line, &mut col);
                adv(&mut i, &mut line, &mut col);
                push!(Tok::ColonDash, l0, c0);
                continue;
            }
            Some(('=', '>')) => {
                adv(&mut i, &mut line, &mut col);
                adv(&mut i, &mut line, &mut col);
                push!(Tok::Arrow, l0, c0);
                continue;
            }
            Some(('=', '<')) => {
                adv(&mut i, &mut line, &mut col);
                adv(&mut i, &mut line, &mut col);
                push!(Tok::Le, l0, c0);
                continue;
            }
            Some(('>', '=')) => {
                adv(&mut i, &mut line, &mut col);
                adv(&mut i, &mut line, &mut col);
                push!(Tok::Ge, l0, c0);
                continue;
            }
            _ => {}
        }
        let t = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            '|' => Tok::Pipe,
            '.' => Tok::Dot,
            '=' => Tok::Eq,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '&' => Tok::And,
            '~' => Tok::Tilde,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            other => {
                return Err(err(l0, c0, format!("unexpected character `{}`", other)));
            }
        };
        adv(&mut i, &mut line, &mut col);
        push!(t, l0, c0);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Surface syntax
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum SExpr {
    Var(String),
    Int(i64),
    App(String, Vec<SExpr>),
    List(Vec<SExpr>, Option<Box<SExpr>>),
    Bin(SBin, Box<SExpr>, Box<SExpr>),
    Not(Box<SExpr>),
    Neg(Box<SExpr>),
    Ite(Box<SExpr>, Box<SExpr>, Box<SExpr>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SBin {
    Implies,
    Or,
    And,
    Eq,
    Le,
    Lt,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
struct SClause {
    head: Option<SExpr>, // None for `false` heads
    body: Vec<SExpr>,
    line: u32,
}

#[derive(Clone, Debug)]
struct SSpec {
    head: SExpr,
    body: Vec<SExpr>,
    post: SExpr,
    line: u32,
}

#[derive(Clone, Debug)]
struct SData {
    name: String,
    params: Vec<String>,
    constructors: Vec<(String, Vec<SSort>)>,
    line: u32,
}

#[derive(Clone, Debug, PartialEq)]
enum SSort {
    Named(String, Vec<SSort>),
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

const PREC_IMPLIES: u8 = 1;
const PREC_OR: u8 = 2;
const PREC_AND: u8 = 3;
const PREC_NOT: u8 = 4;
const PREC_CMP: u8 = 5;
const PREC_ADD: u8 = 6;
const PREC_MUL: u8 = 7;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn loc(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|l| (l.line, l.col))
            .unwrap_or((1, 1))
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.loc();
        Err(Error::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|l| l.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: &Tok) -> Result<()> {
        match self.peek() {
            Some(x) if x == t => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => {
                let x = x.clone();
                self.err(format!("expected {}, found {}", t, x))
            }
            None => self.err(format!("expected {}, found end of input", t)),
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_expr(&mut self, min_prec: u8) -> Result<SExpr> {
        let mut lhs = self.parse_unary(min_prec)?;
        loop {
            let (op, prec, right_assoc) = match self.peek() {
                Some(Tok::Arrow) => (SBin::Implies, PREC_IMPLIES, true),
                Some(Tok::Pipe) => (SBin::Or, PREC_OR, false),
                Some(Tok::And) => (SBin::And, PREC_AND, false),
                Some(Tok::Eq) => (SBin::Eq, PREC_CMP, false),
                Some(Tok::Le) => (SBin::Le, PREC_CMP, false),
                Some(Tok::Lt) => (SBin::Lt, PREC_CMP, false),
                Some(Tok::Gt) => (SBin::Gt, PREC_CMP, false),
                Some(Tok::Ge) => (SBin::Ge, PREC_CMP, false),
                Some(Tok::Plus) => (SBin::Add, PREC_ADD, false),
                Some(Tok::Minus) => (SBin::Sub, PREC_ADD, false),
                Some(Tok::Star) => (SBin::Mul, PREC_MUL, false),
                _ => break,
            };
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let next_min = if right_assoc { prec } else { prec + 1 };
            let rhs = self.parse_expr(next_min)?;
            lhs = SExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self, min_prec: u8) -> Result<SExpr> {
        match self.peek() {
            Some(Tok::Tilde) => {
                self.pos += 1;
                // `~` binds comparisons and below.
                let e = self.parse_expr((PREC_NOT + 1).max(min_prec))?;
                Ok(SExpr::Not(Box::new(e)))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                let e = self.parse_expr(PREC_MUL + 1)?;
                match e {
                    SExpr::Int(i) => Ok(SExpr::Int(-i)),
                    other => Ok(SExpr::Neg(Box::new(other))),
                }
            }
            _ => self.parse_primary(),
        }
    }

    fn parse_primary(&mut self) -> Result<SExpr> {
        match self.bump() {
            Some(Tok::Int(i)) => Ok(SExpr::Int(i)),
            Some(Tok::UpperVar(v)) => Ok(SExpr::Var(v)),
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            args.push(self.parse_expr(PREC_IMPLIES)?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(&Tok::RParen)?;
                    if name == "ite" {
                        if args.len() != 3 {
                            return self.err("ite takes exactly three arguments");
                        }
                        let mut it = args.into_iter();
                        let c = it.next().unwrap();
                        let t = it.next().unwrap();
                        let e = it.next().unwrap();
                        return Ok(SExpr::Ite(Box::new(c), Box::new(t), Box::new(e)));
                    }
                    Ok(SExpr::App(name, args))
                } else {
                    Ok(SExpr::App(name, vec![]))
                }
            }
            Some(Tok::LParen) => {
                let e = self.parse_expr(PREC_IMPLIES)?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::LBracket) => {
                // Inside brackets `|` is the tail separator, so elements are
                // parsed above the `|` precedence level.
                if self.eat(&Tok::RBracket) {
                    return Ok(SExpr::List(vec![], None));
                }
                let mut elems = vec![self.parse_expr(PREC_AND)?];
                while self.eat(&Tok::Comma) {
                    elems.push(self.parse_expr(PREC_AND)?);
                }
                let tail = if self.eat(&Tok::Pipe) {
                    Some(Box::new(self.parse_expr(PREC_AND)?))
                } else {
                    None
                };
                self.expect(&Tok::RBracket)?;
                Ok(SExpr::List(elems, tail))
            }
            Some(t) => {
                self.pos -= 1;
                self.err(format!("unexpected token {}", t))
            }
            None => self.err("unexpected end of input"),
        }
    }

    /// Body element: a constraint conjunct or an atom. Parsed below `=>`
    /// precedence would be wrong for ordinary clause bodies, so elements use
    /// the full grammar; spec bodies use `parse_expr(PREC_OR)` instead.
    fn parse_body(&mut self) -> Result<Vec<SExpr>> {
        let mut items = vec![self.parse_expr(PREC_IMPLIES)?];
        while self.eat(&Tok::Comma) {
            items.push(self.parse_expr(PREC_IMPLIES)?);
        }
        Ok(items)
    }

    fn parse_sort(&mut self) -> Result<SSort> {
        match self.bump() {
            Some(Tok::Ident(name)) => {
                let mut args = Vec::new();
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    loop {
                        args.push(self.parse_sort()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RParen)?;
                }
                Ok(SSort::Named(name, args))
            }
            _ => {
                self.pos -= 1;
                self.err("expected a sort name")
            }
        }
    }
}

enum Item {
    Clause(SClause),
    Spec(SSpec),
    Data(SData),
}

fn parse_items(text: &str) -> Result<Vec<Item>> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let mut items = Vec::new();
    while p.peek().is_some() {
        let line = p.loc().0;
        if p.eat(&Tok::ColonDash) {
            match p.peek() {
                Some(Tok::Ident(k)) if k == "spec" => {
                    p.pos += 1;
                    let head = p.parse_expr(PREC_CMP)?;
                    p.expect(&Tok::LongArrow)?;
                    let mut body = vec![p.parse_expr(PREC_OR)?];
                    while p.eat(&Tok::Comma) {
                        body.push(p.parse_expr(PREC_OR)?);
                    }
                    p.expect(&Tok::Arrow)?;
                    let post = p.parse_expr(PREC_IMPLIES)?;
                    p.expect(&Tok::Dot)?;
                    items.push(Item::Spec(SSpec {
                        head,
                        body,
                        post,
                        line,
                    }));
                }
                Some(Tok::Ident(k)) if k == "data" => {
                    p.pos += 1;
                    let (name, params) = match p.bump() {
                        Some(Tok::Ident(n)) => {
                            let mut ps = Vec::new();
                            if p.peek() == Some(&Tok::LParen) {
                                p.pos += 1;
                                loop {
                                    match p.bump() {
                                        Some(Tok::Ident(s)) => ps.push(s),
                                        _ => {
                                            p.pos -= 1;
                                            return p.err("expected a sort parameter name");
                                        }
                                    }
                                    if !p.eat(&Tok::Comma) {
                                        break;
                                    }
                                }
                                p.expect(&Tok::RParen)?;
                            }
                            (n, ps)
                        }
                        _ => {
                            p.pos -= 1;
                            return p.err("expected a data type name");
                        }
                    };
                    p.expect(&Tok::Eq)?;
                    let mut constructors = Vec::new();
                    loop {
                        match p.bump() {
                            Some(Tok::Ident(cname)) => {
                                let mut args = Vec::new();
                                if p.peek() == Some(&Tok::LParen) {
                                    p.pos += 1;
                                    loop {
                                        args.push(p.parse_sort()?);
                                        if !p.eat(&Tok::Comma) {
                                            break;
                                        }
                                    }
                                    p.expect(&Tok::RParen)?;
                                }
                                constructors.push((cname, args));
                            }
                            _ => {
                                p.pos -= 1;
                                return p.err("expected a constructor name");
                            }
                        }
                        if !p.eat(&Tok::Pipe) {
                            break;
                        }
                    }
                    p.expect(&Tok::Dot)?;
                    items.push(Item::Data(SData {
                        name,
                        params,
                        constructors,
                        line,
                    }));
                }
                _ => {
                    // A headless clause `:- body.` is a goal.
                    let body = p.parse_body()?;
                    p.expect(&Tok::Dot)?;
                    items.push(Item::Clause(SClause {
                        head: None,
                        body,
                        line,
                    }));
                }
            }
            continue;
        }
        let head = p.parse_expr(PREC_CMP)?;
        let body = if p.eat(&Tok::ColonDash) {
            p.parse_body()?
        } else {
            Vec::new()
        };
        p.expect(&Tok::Dot)?;
        let head = match head {
            SExpr::App(ref n, ref args) if n == "false" && args.is_empty() => None,
            h => Some(h),
        };
        items.push(Item::Clause(SClause { head, body, line }));
    }
    Ok(items)
}

// ---------------------------------------------------------------------------
// Sort inference
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum STy {
    Int,
    Bool,
    Adt(String, Vec<STy>),
    Var(u32),
}

struct Infer {
    parent: Vec<Option<STy>>,
    /// declared ADTs: name -> (params, constructors with schematic sorts)
    data: HashMap<String, (Vec<String>, Vec<(String, Vec<SSort>)>)>,
    /// constructor name -> owning data type
    ctor_owner: HashMap<String, String>,
    sigs: HashMap<String, Vec<STy>>,
}

impl Infer {
    fn new() -> Infer {
        let mut inf = Infer {
            parent: Vec::new(),
            data: HashMap::new(),
            ctor_owner: HashMap::new(),
            sigs: HashMap::new(),
        };
        inf.data.insert(
            "list".into(),
            (
                vec!["a".into()],
                vec![
                    ("[]".into(), vec![]),
                    (
                        "cons".into(),
                        vec![
                            SSort::Named("a".into(), vec![]),
                            SSort::Named("list".into(), vec![SSort::Named("a".into(), vec![])]),
                        ],
                    ),
                ],
            ),
        );
        inf.data.insert(
            "tree".into(),
            (
                vec!["a".into()],
                vec![
                    ("leaf".into(), vec![]),
                    (
                        "node".into(),
                        vec![
                            SSort::Named("tree".into(), vec![SSort::Named("a".into(), vec![])]),
                            SSort::Named("a".into(), vec![]),
                            SSort::Named("tree".into(), vec![SSort::Named("a".into(), vec![])]),
                        ],
                    ),
                ],
            ),
        );
        for c in ["[]", "cons"] {
            inf.ctor_owner.insert(c.into(), "list".into());
        }
        for c in ["leaf", "node"] {
            inf.ctor_owner.insert(c.into(), "tree".into());
        }
        inf
    }

    fn fresh(&mut self) -> STy {
        self.parent.push(None);
        STy::Var(self.parent.len() as u32 - 1)
    }

    fn resolve(&self, t: &STy) -> STy {
        match t {
            STy::Var(i) => match &self.parent[*i as usize] {
                Some(inner) => self.resolve(inner),
                None => t.clone(),
            },
            STy::Adt(n, args) => {
                STy::Adt(n.clone(), args.iter().map(|a| self.resolve(a)).collect())
            }
            _ => t.clone(),
        }
    }

    fn unify(&mut self, a: &STy, b: &STy, ctx: &dyn Fn() -> String) -> Result<()> {
        let a = self.resolve(a);
        let b = self.resolve(b);
        match (&a, &b) {
            (STy::Var(i), STy::Var(j)) if i == j => Ok(()),
            (STy::Var(i), other) | (other, STy::Var(i)) => {
                if occurs_sty(*i, other) {
                    return Err(Error::Sort {
                        msg: format!("infinite sort in {}", ctx()),
                    });
                }
                self.parent[*i as usize] = Some(other.clone());
                Ok(())
            }
            (STy::Int, STy::Int) | (STy::Bool, STy::Bool) => Ok(()),
            (STy::Adt(n1, a1), STy::Adt(n2, a2)) if n1 == n2 && a1.len() == a2.len() => {
                for (x, y) in a1.iter().zip(a2) {
                    self.unify(x, y, ctx)?;
                }
                Ok(())
            }
            (x, y) => Err(Error::Sort {
                msg: format!(
                    "sort conflict in {}: {} vs {}",
                    ctx(),
                    show_sty(x),
                    show_sty(y)
                ),
            }),
        }
    }

    fn sig(&mut self, pred: &str, arity: usize, line: u32) -> Result<Vec<STy>> {
        if let Some(s) = self.sigs.get(pred) {
            if s.len() != arity {
                return Err(Error::Sort {
                    msg: format!(
                        "predicate `{}` used with arity {} at line {} but previously with {}",
                        pred,
                        arity,
                        line,
                        s.len()
                    ),
                });
            }
            return Ok(s.clone());
        }
        let s: Vec<STy> = (0..arity).map(|_| self.fresh()).collect();
        self.sigs.insert(pred.to_string(), s.clone());
        Ok(s)
    }

    fn instantiate_ctor(&mut self, ctor: &str) -> Option<(Vec<STy>, STy)> {
        let owner = self.ctor_owner.get(ctor)?.clone();
        let (params, ctors) = self.data.get(&owner)?.clone();
        let inst: HashMap<String, STy> = params.iter().map(|p| (p.clone(), self.fresh())).collect();
        let args = ctors.iter().find(|(n, _)| n == ctor)?.1.clone();
        let conv = |s: &SSort, inst: &HashMap<String, STy>| -> STy { ssort_to_sty(s, inst) };
        let arg_tys = args.iter().map(|s| conv(s, &inst)).collect();
        let result = STy::Adt(
            owner.clone(),
            params.iter().map(|p| inst[p].clone()).collect(),
        );
        Some((arg_tys, result))
    }
}

fn occurs_sty(i: u32, t: &STy) -> bool {
    match t {
        STy::Var(j) => i == *j,
        STy::Adt(_, args) => args.iter().any(|a| occurs_sty(i, a)),
        _ => false,
    }
}

fn show_sty(t: &STy) -> String {
    match t {
        STy::Int => "int".into(),
        STy::Bool => "bool".into(),
        STy::Var(_) => "?".into(),
        STy::Adt(n, args) => {
            if args.is_empty() {
                n.clone()
            } else {
                format!(
                    "{}({})",
                    n,
                    args.iter().map(show_sty).collect::<Vec<_>>().join(",")
                )
            }
        }
    }
}

fn ssort_to_sty(s: &SSort, inst: &HashMap<String, STy>) -> STy {
    let SSort::Named(name, args) = s;
    if args.is_empty() {
        if let Some(t) = inst.get(name) {
            return t.clone();
        }
        match name.as_str() {
            "int" => return STy::Int,
            "bool" => return STy::Bool,
            _ => {}
        }
    }
    STy::Adt(
        name.clone(),
        args.iter().map(|a| ssort_to_sty(a, inst)).collect(),
    )
}

/// Sort inferred for each surface expression; expressions used as formulas
/// get `Bool`-flavored handling at elaboration time.
struct ClauseCtx {
    vars: HashMap<String, STy>,
    anon: u32,
}

fn infer_expr(
    inf: &mut Infer,
    ctx: &mut ClauseCtx,
    e: &SExpr,
    line: u32,
    as_formula: bool,
) -> Result<STy> {
    let here = move || format!("line {}", line);
    match e {
        SExpr::Var(name) => {
            let name = if name == "_" {
                ctx.anon += 1;
                format!("_{}", ctx.anon)
            } else {
                name.clone()
            };
            let t = ctx
                .vars
                .entry(name)
                .or_insert_with(|| {
                    inf.parent.push(None);
                    STy::Var(inf.parent.len() as u32 - 1)
                })
                .clone();
            if as_formula {
                inf.unify(&t, &STy::Bool, &here)?;
            }
            Ok(t)
        }
        SExpr::Int(_) => Ok(STy::Int),
        SExpr::App(name, args) if name == "true" || name == "false" => {
            if !args.is_empty() {
                return Err(Error::Sort {
                    msg: format!("`{}` takes no arguments at {}", name, here()),
                });
            }
            Ok(STy::Bool)
        }
        SExpr::App(name, args) => {
            if let Some((arg_tys, result)) = inf.instantiate_ctor(name) {
                if arg_tys.len() != args.len() {
                    return Err(Error::Sort {
                        msg: format!(
                            "constructor `{}` expects {} arguments, got {} at {}",
                            name,
                            arg_tys.len(),
                            args.len(),
                            here()
                        ),
                    });
                }
                for (a, t) in args.iter().zip(&arg_tys) {
                    let at = infer_expr(inf, ctx, a, line, false)?;
                    inf.unify(&at, t, &here)?;
                }
                return Ok(result);
            }
            // Predicate atom.
            let sig = inf.sig(name, args.len(), line)?;
            for (i, (a, t)) in args.iter().zip(&sig).enumerate() {
                let at = infer_expr(inf, ctx, a, line, false)?;
                inf.unify(&at, t, &|| {
                    format!("argument {} of `{}` (line {})", i + 1, name, line)
                })?;
            }
            Ok(STy::Bool)
        }
        SExpr::List(elems, tail) => {
            let elem = inf.fresh();
            for el in elems {
                let t = infer_expr(inf, ctx, el, line, false)?;
                inf.unify(&t, &elem, &here)?;
            }
            let list_ty = STy::Adt("list".into(), vec![elem]);
            if let Some(t) = tail {
                let tt = infer_expr(inf, ctx, t, line, false)?;
                inf.unify(&tt, &list_ty, &here)?;
            }
            Ok(list_ty)
        }
        SExpr::Bin(op, a, b) => match op {
            SBin::Add | SBin::Sub | SBin::Mul => {
                let ta = infer_expr(inf, ctx, a, line, false)?;
                let tb = infer_expr(inf, ctx, b, line, false)?;
                inf.unify(&ta, &STy::Int, &here)?;
                inf.unify(&tb, &STy::Int, &here)?;
                Ok(STy::Int)
            }
            SBin::Le | SBin::Lt | SBin::Gt | SBin::Ge => {
                let ta = infer_expr(inf, ctx, a, line, false)?;
                let tb = infer_expr(inf, ctx, b, line, false)?;
                inf.unify(&ta, &STy::Int, &here)?;
                inf.unify(&tb, &STy::Int, &here)?;
                Ok(STy::Bool)
            }
            SBin::Eq => {
                let ta = infer_expr(inf, ctx, a, line, false)?;
                let tb = infer_expr(inf, ctx, b, line, false)?;
                inf.unify(&ta, &tb, &here)?;
                Ok(STy::Bool)
            }
            SBin::And | SBin::Or | SBin::Implies => {
                infer_expr(inf, ctx, a, line, true)?;
                infer_expr(inf, ctx, b, line, true)?;
                Ok(STy::Bool)
            }
        },
        SExpr::Not(a) => {
            infer_expr(inf, ctx, a, line, true)?;
            Ok(STy::Bool)
        }
        SExpr::Neg(a) => {
            let t = infer_expr(inf, ctx, a, line, false)?;
            inf.unify(&t, &STy::Int, &here)?;
            Ok(STy::Int)
        }
        SExpr::Ite(c, t, e2) => {
            infer_expr(inf, ctx, c, line, true)?;
            let tt = infer_expr(inf, ctx, t, line, false)?;
            let te = infer_expr(inf, ctx, e2, line, false)?;
            inf.unify(&tt, &te, &here)?;
            if as_formula {
                inf.unify(&tt, &STy::Bool, &here)?;
            }
            Ok(tt)
        }
    }
}

// ---------------------------------------------------------------------------
// Elaboration into the typed core syntax
// ---------------------------------------------------------------------------

struct Elab<'a> {
    inf: &'a Infer,
    env: SortEnv,
}

impl<'a> Elab<'a> {
    /// Ground sort for a resolved inference type; unresolved variables
    /// default to int.
    fn ground(&mut self, t: &STy) -> Sort {
        match self.inf.resolve(t) {
            STy::Int | STy::Var(_) => Sort::Int,
            STy::Bool => Sort::Bool,
            STy::Adt(name, args) => {
                let gargs: Vec<Sort> = args.iter().map(|a| self.ground(a)).collect();
                self.register_adt(&name, &gargs)
            }
        }
    }

    fn register_adt(&mut self, base: &str, args: &[Sort]) -> Sort {
        let key = if args.is_empty() {
            base.to_string()
        } else {
            format!(
                "{}({})",
                base,
                args.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
            )
        };
        if self.env.lookup(&key).is_none() {
            if let Some(def) = (args.len() == 1)
                .then(|| instantiate_builtin(base, &args[0]))
                .flatten()
            {
                self.env.insert(def);
            } else if self.inf.data.contains_key(base) {
                // Reserve the name first so recursive constructor arguments
                // terminate, then fill in the signatures.
                self.env.insert(AdtDef {
                    name: Arc::from(key.as_str()),
                    constructors: vec![],
                });
                let (params, ctors) = self.inf.data[base].clone();
                let inst: HashMap<String, STy> = params
                    .iter()
                    .zip(args)
                    .map(|(p, s)| (p.clone(), sort_to_sty(s)))
                    .collect();
                let constructors = ctors
                    .iter()
                    .map(|(n, argsorts)| Constructor {
                        name: n.clone(),
                        args: argsorts
                            .iter()
                            .map(|s| {
                                let sty = ssort_to_sty(s, &inst);
                                self.ground(&sty)
                            })
                            .collect(),
                    })
                    .collect();
                self.env.replace(AdtDef {
                    name: Arc::from(key.as_str()),
                    constructors,
                });
            }
        }
        Sort::Adt(Arc::from(key.as_str()))
    }
}

fn sort_to_sty(s: &Sort) -> STy {
    match s {
        Sort::Int => STy::Int,
        Sort::Bool => STy::Bool,
        Sort::Adt(name) => {
            // Parse back "base(arg,...)" names produced by `register_adt`.
            let n = name.to_string();
            if let Some(open) = n.find('(') {
                let base = n[..open].to_string();
                let inner = &n[open + 1..n.len() - 1];
                let args = inner
                    .split(',')
                    .map(|p| sort_to_sty(&match p {
                        "int" => Sort::Int,
                        "bool" => Sort::Bool,
                        other => Sort::adt(other),
                    }))
                    .collect();
                STy::Adt(base, args)
            } else {
                STy::Adt(n, vec![])
            }
        }
    }
}

struct ClauseElab<'a, 'b> {
    elab: &'b mut Elab<'a>,
    vars: HashMap<String, Var>,
    tys: &'b HashMap<String, STy>,
    anon: u32,
    line: u32,
}

impl<'a, 'b> ClauseElab<'a, 'b> {
    fn var(&mut self, name: &str) -> Var {
        let name = if name == "_" {
            self.anon += 1;
            format!("_{}", self.anon)
        } else {
            name.to_string()
        };
        if let Some(v) = self.vars.get(&name) {
            return v.clone();
        }
        let sty = self.tys.get(&name).cloned().unwrap_or(STy::Int);
        let sort = self.elab.ground(&sty);
        let v = Var::fresh(&name, sort);
        self.vars.insert(name, v.clone());
        v
    }

    fn term(&mut self, e: &SExpr) -> Result<Term> {
        match e {
            SExpr::Var(n) => Ok(Term::Var(self.var(n))),
            SExpr::Int(i) => Ok(Term::Int(*i)),
            SExpr::App(n, args) if n == "true" => {
                if args.is_empty() {
                    Ok(Term::Bool(true))
                } else {
                    self.bad("true takes no arguments")
                }
            }
            SExpr::App(n, args) if n == "false" => {
                if args.is_empty() {
                    Ok(Term::Bool(false))
                } else {
                    self.bad("false takes no arguments")
                }
            }
            SExpr::App(n, args) => {
                if self.elab.inf.ctor_owner.contains_key(n) {
                    let terms: Vec<Term> =
                        args.iter().map(|a| self.term(a)).collect::<Result<_>>()?;
                    let sort = self.ctor_result_sort(n, &terms)?;
                    Ok(Term::Cons(Arc::from(n.as_str()), sort, terms))
                } else {
                    self.bad(&format!("predicate `{}` used in term position", n))
                }
            }
            SExpr::List(elems, tail) => {
                let mut terms: Vec<Term> = Vec::new();
                for el in elems {
                    terms.push(self.term(el)?);
                }
                let tail_term = match tail {
                    Some(t) => Some(self.term(t)?),
                    None => None,
                };
                let elem_sort = terms
                    .first()
                    .map(|t| t.sort())
                    .or_else(|| match &tail_term {
                        Some(t) => match t.sort() {
                            Sort::Adt(n) => elem_of_list_name(&n),
                            _ => None,
                        },
                        None => None,
                    })
                    .unwrap_or(Sort::Int);
                let list_sort = self.elab.register_adt("list", &[elem_sort]);
                let mut acc = match tail_term {
                    Some(t) => t,
                    None => Term::Cons("[]".into(), list_sort.clone(), vec![]),
                };
                for t in terms.into_iter().rev() {
                    acc = Term::Cons("cons".into(), list_sort.clone(), vec![t, acc]);
                }
                Ok(acc)
            }
            SExpr::Bin(SBin::Add, a, b) => Ok(Term::Add(
                Box::new(self.term(a)?),
                Box::new(self.term(b)?),
            )),
            SExpr::Bin(SBin::Sub, a, b) => Ok(Term::Sub(
                Box::new(self.term(a)?),
                Box::new(self.term(b)?),
            )),
            SExpr::Bin(SBin::Mul, a, b) => {
                let ta = self.term(a)?;
                let tb = self.term(b)?;
                match (&ta, &tb) {
                    (Term::Int(k), _) => Ok(Term::Mul(*k, Box::new(tb))),
                    (_, Term::Int(k)) => Ok(Term::Mul(*k, Box::new(ta))),
                    _ => self.bad("multiplication must have an integer literal factor"),
                }
            }
            SExpr::Neg(a) => Ok(Term::Neg(Box::new(self.term(a)?))),
            SExpr::Ite(c, t, e2) => {
                let cond = self.formula(c)?;
                Ok(Term::Ite(
                    Box::new(cond),
                    Box::new(self.term(t)?),
                    Box::new(self.term(e2)?),
                ))
            }
            other => self.bad(&format!("expected a term, found {:?}", other)),
        }
    }

    fn ctor_result_sort(&mut self, ctor: &str, args: &[Term]) -> Result<Sort> {
        let owner = self.elab.inf.ctor_owner[ctor].clone();
        let (params, ctors) = self.elab.inf.data[&owner].clone();
        // Derive the parameter instantiation from the argument sorts.
        let schema = &ctors.iter().find(|(n, _)| n == ctor).unwrap().1;
        let mut inst: HashMap<String, Sort> = HashMap::new();
        for (s, t) in schema.iter().zip(args) {
            bind_params(s, &t.sort(), &mut inst);
        }
        let inst_sorts: Vec<Sort> = params
            .iter()
            .map(|p| inst.get(p).cloned().unwrap_or(Sort::Int))
            .collect();
        Ok(self.elab.register_adt(&owner, &inst_sorts))
    }

    fn formula(&mut self, e: &SExpr) -> Result<Constraint> {
        match e {
            SExpr::Var(n) => {
                let v = self.var(n);
                if v.sort == Sort::Bool {
                    Ok(Constraint::BoolVar(v))
                } else {
                    self.bad(&format!("variable {} used as a formula but is not boolean", n))
                }
            }
            SExpr::App(n, args) if n == "true" && args.is_empty() => Ok(Constraint::True),
            SExpr::App(n, args) if n == "false" && args.is_empty() => Ok(Constraint::False),
            SExpr::Bin(SBin::And, a, b) => Ok(self.formula(a)?.and(self.formula(b)?)),
            SExpr::Bin(SBin::Or, a, b) => Ok(Constraint::Or(
                Box::new(self.formula(a)?),
                Box::new(self.formula(b)?),
            )),
            SExpr::Bin(SBin::Implies, a, b) => Ok(Constraint::Implies(
                Box::new(self.formula(a)?),
                Box::new(self.formula(b)?),
            )),
            SExpr::Bin(SBin::Eq, a, b) => {
                // Boolean equality becomes iff; integer equality a relation.
                if self.expr_is_bool(a) || self.expr_is_bool(b) {
                    Ok(Constraint::Iff(
                        Box::new(self.formula(a)?),
                        Box::new(self.formula(b)?),
                    ))
                } else {
                    let ta = self.term(a)?;
                    let tb = self.term(b)?;
                    if ta.sort().is_adt() {
                        return self.bad("equality between ADT terms is not a constraint");
                    }
                    Ok(Constraint::Rel(RelOp::Eq, ta, tb))
                }
            }
            SExpr::Bin(SBin::Le, a, b) => Ok(Constraint::Rel(
                RelOp::Le,
                self.term(a)?,
                self.term(b)?,
            )),
            SExpr::Bin(SBin::Lt, a, b) => Ok(Constraint::Rel(
                RelOp::Lt,
                self.term(a)?,
                self.term(b)?,
            )),
            SExpr::Bin(SBin::Gt, a, b) => Ok(Constraint::Rel(
                RelOp::Gt,
                self.term(a)?,
                self.term(b)?,
            )),
            SExpr::Bin(SBin::Ge, a, b) => Ok(Constraint::Rel(
                RelOp::Ge,
                self.term(a)?,
                self.term(b)?,
            )),
            SExpr::Not(a) => Ok(self.formula(a)?.not()),
            SExpr::Ite(c, t, e2) => {
                if self.expr_is_bool(t) {
                    Ok(Constraint::Ite(
                        Box::new(self.formula(c)?),
                        Box::new(self.formula(t)?),
                        Box::new(self.formula(e2)?),
                    ))
                } else {
                    self.bad("integer-valued ite used as a formula")
                }
            }
            other => self.bad(&format!("expected a constraint, found {:?}", other)),
        }
    }

    /// True when the inferencer resolved this expression to bool. Used to
    /// disambiguate `=` and ite.
    fn expr_is_bool(&self, e: &SExpr) -> bool {
        match e {
            SExpr::Var(n) => {
                matches!(
                    self.tys.get(n).map(|t| self.elab.inf.resolve(t)),
                    Some(STy::Bool)
                )
            }
            SExpr::Int(_) | SExpr::Neg(_) => false,
            SExpr::App(n, _) => n == "true" || n == "false",
            SExpr::List(..) => false,
            SExpr::Bin(op, _, _) => match op {
                SBin::And | SBin::Or | SBin::Implies | SBin::Le | SBin::Lt | SBin::Gt
                | SBin::Ge => true,
                SBin::Eq => true,
                SBin::Add | SBin::Sub | SBin::Mul => false,
                // Eq of two ints is a formula too; as an *operand* of an
                // outer Eq it only appears parenthesized, which is bool.
            },
            SExpr::Not(_) => true,
            SExpr::Ite(_, t, _) => self.expr_is_bool(t),
        }
    }

    fn atom(&mut self, e: &SExpr) -> Result<Atom> {
        match e {
            SExpr::App(n, args) => {
                if self.elab.inf.ctor_owner.contains_key(n) {
                    return self.bad(&format!("constructor `{}` used as a predicate", n));
                }
                let terms: Vec<Term> = args.iter().map(|a| self.term(a)).collect::<Result<_>>()?;
                Ok(Atom::new(n, terms))
            }
            other => self.bad(&format!("expected an atom, found {:?}", other)),
        }
    }

    fn bad<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Syntax {
            line: self.line,
            col: 0,
            msg: msg.to_string(),
        })
    }
}

fn bind_params(schema: &SSort, actual: &Sort, out: &mut HashMap<String, Sort>) {
    let SSort::Named(name, args) = schema;
    if args.is_empty() && name != "int" && name != "bool" {
        // Could be a parameter name; record the actual sort.
        out.entry(name.clone()).or_insert_with(|| actual.clone());
    }
    if let (false, Sort::Adt(aname)) = (args.is_empty(), actual) {
        // Recurse into e.g. list(a) against list(int).
        let astr = aname.to_string();
        if let Some(open) = astr.find('(') {
            let inner: Vec<&str> = astr[open + 1..astr.len() - 1].split(',').collect();
            for (s, a) in args.iter().zip(inner) {
                let actual_inner = match a {
                    "int" => Sort::Int,
                    "bool" => Sort::Bool,
                    other => Sort::adt(other),
                };
                bind_params(s, &actual_inner, out);
            }
        }
    }
}

fn elem_of_list_name(name: &str) -> Option<Sort> {
    let s = name.strip_prefix("list(")?.strip_suffix(')')?;
    Some(match s {
        "int" => Sort::Int,
        "bool" => Sort::Bool,
        other => Sort::adt(other),
    })
}

/// Is this surface expression shaped like a predicate atom (as opposed to a
/// constraint) in body position?
fn is_atom_shaped(e: &SExpr, inf: &Infer) -> bool {
    match e {
        SExpr::App(n, _) if n == "true" || n == "false" || n == "ite" => false,
        SExpr::App(n, _) => !inf.ctor_owner.contains_key(n),
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Rewrite body atoms so that basic-sorted arguments are distinct variables;
/// the displaced terms become equalities in the constraint. ADT arguments
/// keep constructor patterns (they are resolved by unification when the atom
/// is unfolded).
pub fn normalize_clause(c: &Clause) -> Clause {
    let mut constraint = c.constraint.clone();
    let mut body = Vec::with_capacity(c.body.len());
    for atom in &c.body {
        let mut seen: BTreeSet<Var> = BTreeSet::new();
        let mut args = Vec::with_capacity(atom.args.len());
        for t in &atom.args {
            let sort = t.sort();
            if sort.is_basic() {
                match t {
                    Term::Var(v) if !seen.contains(v) => {
                        seen.insert(v.clone());
                        args.push(t.clone());
                    }
                    _ => {
                        let v = Var::fresh("N", sort.clone());
                        let eq = match sort {
                            Sort::Bool => match t {
                                Term::Bool(true) => Constraint::BoolVar(v.clone()),
                                Term::Bool(false) => Constraint::BoolVar(v.clone()).not(),
                                Term::Var(w) => Constraint::Iff(
                                    Box::new(Constraint::BoolVar(v.clone())),
                                    Box::new(Constraint::BoolVar(w.clone())),
                                ),
                                other => Constraint::Rel(
                                    RelOp::Eq,
                                    Term::Var(v.clone()),
                                    other.clone(),
                                ),
                            },
                            _ => Constraint::Rel(RelOp::Eq, Term::Var(v.clone()), t.clone()),
                        };
                        constraint = constraint.and(eq);
                        args.push(Term::Var(v));
                    }
                }
            } else {
                args.push(t.clone());
            }
        }
        body.push(Atom {
            pred: atom.pred.clone(),
            args,
        });
    }
    Clause {
        head: c.head.clone(),
        constraint,
        body,
        origin: c.origin.clone(),
    }
}

// ---------------------------------------------------------------------------
// Top-level parse
// ---------------------------------------------------------------------------

/// Parse, sort-infer, and normalize a program text.
pub fn parse_program(text: &str) -> Result<SourceProgram> {
    let items = parse_items(text)?;

    // Register user data declarations first.
    let mut inf = Infer::new();
    for item in &items {
        if let Item::Data(d) = item {
            if inf.data.contains_key(&d.name) {
                return Err(Error::Sort {
                    msg: format!("data type `{}` redeclared at line {}", d.name, d.line),
                });
            }
            for (cname, _) in &d.constructors {
                if inf.ctor_owner.contains_key(cname) {
                    return Err(Error::Sort {
                        msg: format!(
                            "constructor `{}` redeclared at line {}",
                            cname, d.line
                        ),
                    });
                }
                inf.ctor_owner.insert(cname.clone(), d.name.clone());
            }
            let base_exists = d
                .constructors
                .iter()
                .any(|(_, args)| args.iter().all(|s| !mentions_sort(s, &d.name)));
            if d.constructors.is_empty() || !base_exists {
                return Err(Error::Sort {
                    msg: format!(
                        "data type `{}` needs at least one non-recursive constructor",
                        d.name
                    ),
                });
            }
            inf.data
                .insert(d.name.clone(), (d.params.clone(), d.constructors.clone()));
        }
    }

    // Pass 1: sort inference over all clauses and specs.
    let mut clause_tys: Vec<HashMap<String, STy>> = Vec::new();
    let mut spec_tys: Vec<HashMap<String, STy>> = Vec::new();
    for item in &items {
        match item {
            Item::Clause(c) => {
                let mut ctx = ClauseCtx {
                    vars: HashMap::new(),
                    anon: 0,
                };
                if let Some(h) = &c.head {
                    match h {
                        SExpr::App(..) => {
                            infer_expr(&mut inf, &mut ctx, h, c.line, true)?;
                        }
                        _ => {
                            return Err(Error::Syntax {
                                line: c.line,
                                col: 0,
                                msg: "clause head must be an atom or `false`".into(),
                            })
                        }
                    }
                }
                for e in &c.body {
                    infer_expr(&mut inf, &mut ctx, e, c.line, true)?;
                }
                clause_tys.push(ctx.vars);
            }
            Item::Spec(s) => {
                let mut ctx = ClauseCtx {
                    vars: HashMap::new(),
                    anon: 0,
                };
                infer_expr(&mut inf, &mut ctx, &s.head, s.line, true)?;
                for e in &s.body {
                    infer_expr(&mut inf, &mut ctx, e, s.line, true)?;
                }
                infer_expr(&mut inf, &mut ctx, &s.post, s.line, true)?;
                spec_tys.push(ctx.vars);
            }
            Item::Data(_) => {}
        }
    }

    // Pass 2: elaborate.
    let mut elab = Elab {
        inf: &inf,
        env: SortEnv::new(),
    };
    let mut clauses = Vec::new();
    let mut contracts: Vec<Contract> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut ci = 0;
    let mut si = 0;
    for item in &items {
        match item {
            Item::Clause(c) => {
                let tys = clause_tys[ci].clone();
                ci += 1;
                let mut ce = ClauseElab {
                    elab: &mut elab,
                    vars: HashMap::new(),
                    tys: &tys,
                    anon: 0,
                    line: c.line,
                };
                let head = match &c.head {
                    None => Head::False,
                    Some(h) => Head::Atom(ce.atom(h)?),
                };
                let mut constraint = Constraint::True;
                let mut body = Vec::new();
                for e in &c.body {
                    if is_atom_shaped(e, &inf) {
                        body.push(ce.atom(e)?);
                    } else {
                        constraint = constraint.and(ce.formula(e)?);
                    }
                }
                let clause = Clause {
                    head,
                    constraint,
                    body,
                    origin: Origin::Source(c.line),
                };
                clauses.push(normalize_clause(&clause));
            }
            Item::Spec(s) => {
                let tys = spec_tys[si].clone();
                si += 1;
                let k = elaborate_contract(&mut elab, s, &tys)?;
                if contracts.iter().any(|c| c.pred == k.pred) {
                    return Err(Error::DuplicateContract(k.pred.to_string()));
                }
                if k.post == Constraint::True {
                    diagnostics.push(Diagnostic {
                        line: s.line,
                        message: format!(
                            "contract for `{}` has postcondition true; trivially valid",
                            k.pred
                        ),
                    });
                }
                contracts.push(k);
            }
            Item::Data(_) => {}
        }
    }

    // Final predicate signatures.
    let mut sigs = BTreeMap::new();
    let preds: Vec<(String, Vec<STy>)> = inf
        .sigs
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    for (pred, tys) in preds {
        let sorts: Vec<Sort> = tys.iter().map(|t| elab.ground(t)).collect();
        sigs.insert(pred, sorts);
    }

    Ok(SourceProgram {
        clauses,
        contracts,
        sorts: elab.env,
        sigs,
        diagnostics,
    })
}

fn mentions_sort(s: &SSort, name: &str) -> bool {
    let SSort::Named(n, args) = s;
    n == name || args.iter().any(|a| mentions_sort(a, name))
}

/// The reverse program with its goals written out; used by tests and by the
/// bundled corpus (which states the goals as `spec` directives instead).
#[cfg(test)]
pub(crate) const REVERSE_WITH_GOALS: &str = r#"
/* ------ Program Reverse ------ */
rev([],[]).
rev([H|T],R) :- rev(T,S), snoc(S,H,R).
snoc([],X,[X]).
snoc([X|Xs],Y,[X|Zs]) :- snoc(Xs,Y,Zs).
/* ------ Program properties ------ */
is_asorted([],Res) :- Res.
is_asorted([H|T],Res) :- Res = (IsDefHdT => (H=<HdT & ResT)),
                         hd(T,IsDefHdT,HdT), is_asorted(T,ResT).
is_dsorted([],Res) :- Res.
is_dsorted([H|T],Res) :- Res = (IsDefHdT => (H>=HdT & ResT)),
                         hd(T,IsDefHdT,HdT), is_dsorted(T,ResT).
hd([],IsDefHd,Hd) :- ~IsDefHd & Hd=0.
hd([H|T],IsDefHd,Hd) :- IsDefHd & Hd=H.
leq_all(X,[],Res) :- Res.
leq_all(X,[H|T],Res) :- Res = (X=<H & R), leq_all(X,T,R).
/* ------ Contracts in goal form ------ */
false :- (BL & ~BR), rev(L,R), is_asorted(L,BL), is_dsorted(R,BR).
false :- (BA & BX & ~BC), snoc(A,X,C), is_dsorted(A,BA),
         leq_all(X,A,BX), is_dsorted(C,BC).
"#;

fn elaborate_contract(elab: &mut Elab, s: &SSpec, tys: &HashMap<String, STy>) -> Result<Contract> {
    let mut ce = ClauseElab {
        elab,
        vars: HashMap::new(),
        tys,
        anon: 0,
        line: s.line,
    };
    let head = ce.atom(&s.head)?;
    let pred = head.pred.clone();
    let cf = |condition: &'static str, msg: String| Error::ContractForm {
        pred: pred.to_string(),
        condition,
        msg,
    };

    // (i) Z must be a tuple of distinct variables.
    let mut params = Vec::new();
    let mut seen = BTreeSet::new();
    for t in &head.args {
        match t.as_var() {
            Some(v) if !seen.contains(v) => {
                seen.insert(v.clone());
                params.push(v.clone());
            }
            _ => {
                return Err(cf(
                    "i",
                    "contract head arguments must be distinct variables".into(),
                ))
            }
        }
    }

    let inf = ce.elab.inf;
    let mut pre = Constraint::True;
    let mut catas = Vec::new();
    for e in &s.body {
        if is_atom_shaped(e, inf) {
            let atom = ce.atom(e)?;
            // Locate the single ADT-sorted argument.
            let mut adt_positions = Vec::new();
            let mut arg_vars = Vec::new();
            for (idx, t) in atom.args.iter().enumerate() {
                let v = t.as_var().ok_or_else(|| {
                    cf(
                        "iv",
                        format!("catamorphism `{}` arguments must be variables", atom.pred),
                    )
                })?;
                if v.sort.is_adt() {
                    adt_positions.push(idx);
                }
                arg_vars.push(v.clone());
            }
            if adt_positions.len() != 1 {
                return Err(cf(
                    "iii",
                    format!(
                        "catamorphism `{}` must have exactly one ADT argument, found {}",
                        atom.pred,
                        adt_positions.len()
                    ),
                ));
            }
            let p = adt_positions[0];
            catas.push(CataAtom {
                pred: atom.pred.clone(),
                inputs: arg_vars[..p].to_vec(),
                adt_var: arg_vars[p].clone(),
                outputs: arg_vars[p + 1..].to_vec(),
            });
        } else {
            pre = pre.and(ce.formula(e)?);
        }
    }
    let post = ce.formula(&s.post)?;

    // (v) each ADT variable must come from Z.
    for c in &catas {
        if !params.contains(&c.adt_var) {
            return Err(cf(
                "v",
                format!(
                    "ADT argument {} of `{}` does not occur in the contract head",
                    c.adt_var.name, c.pred
                ),
            ));
        }
    }
    // (iv) outputs: distinct fresh basic variables, disjoint from everything.
    let mut all_outputs: BTreeSet<Var> = BTreeSet::new();
    let mut all_inputs: BTreeSet<Var> = BTreeSet::new();
    for c in &catas {
        for y in &c.outputs {
            if !y.sort.is_basic() {
                return Err(cf("iv", format!("output {} is not basic-sorted", y.name)));
            }
            if !all_outputs.insert(y.clone()) {
                return Err(cf(
                    "iv",
                    format!("output variable {} used twice", y.name),
                ));
            }
        }
        for x in &c.inputs {
            if !x.sort.is_basic() {
                return Err(cf("iv", format!("input {} is not basic-sorted", x.name)));
            }
            all_inputs.insert(x.clone());
        }
    }
    for y in &all_outputs {
        if params.contains(y) || all_inputs.contains(y) {
            return Err(cf(
                "iv",
                format!(
                    "output variable {} also occurs as an input or head variable",
                    y.name
                ),
            ));
        }
    }
    // (ii) precondition variables: cata inputs plus basic-sorted Z.
    let mut allowed_pre: BTreeSet<Var> = all_inputs.clone();
    allowed_pre.extend(params.iter().filter(|v| v.sort.is_basic()).cloned());
    for v in pre.vars() {
        if !allowed_pre.contains(&v) {
            return Err(cf(
                "ii",
                format!(
                    "precondition variable {} is not a catamorphism input or basic head variable",
                    v.name
                ),
            ));
        }
    }
    // (vi) postcondition variables: inputs, outputs, Z.
    let mut allowed_post = allowed_pre;
    allowed_post.extend(all_outputs.iter().cloned());
    for v in post.vars() {
        if !allowed_post.contains(&v) {
            return Err(cf(
                "vi",
                format!("postcondition variable {} is out of scope", v.name),
            ));
        }
    }

    Ok(Contract {
        pred,
        params,
        pre,
        catas,
        post,
        line: s.line,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverse_parses_into_fourteen_clauses() {
        let p = parse_program(REVERSE_WITH_GOALS).expect("parse");
        assert_eq!(p.clauses.len(), 14);
        assert_eq!(p.clauses.iter().filter(|c| !c.is_goal()).count(), 12);
        assert_eq!(p.clauses.iter().filter(|c| c.is_goal()).count(), 2);
        assert!(p.contracts.is_empty());
    }

    #[test]
    fn reverse_signatures_are_inferred() {
        let p = parse_program(REVERSE_WITH_GOALS).expect("parse");
        let list_int = Sort::adt("list(int)");
        assert_eq!(
            p.signature("rev").unwrap(),
            &[list_int.clone(), list_int.clone()]
        );
        assert_eq!(
            p.signature("leq_all").unwrap(),
            &[Sort::Int, list_int.clone(), Sort::Bool]
        );
        assert_eq!(
            p.signature("is_asorted").unwrap(),
            &[list_int.clone(), Sort::Bool]
        );
        assert_eq!(
            p.signature("hd").unwrap(),
            &[list_int, Sort::Bool, Sort::Int]
        );
    }

    #[test]
    fn count_signature_is_inferred() {
        let text = r#"
count(X,[],N) :- N = 0.
count(X,[H|T],N) :- count(X,T,NT), N = ite(X=H,NT+1,NT).
"#;
        let p = parse_program(text).expect("parse");
        assert_eq!(
            p.signature("count").unwrap(),
            &[Sort::Int, Sort::adt("list(int)"), Sort::Int]
        );
    }

    #[test]
    fn unclosed_paren_is_a_syntax_error() {
        let e = parse_program("p(X :- q.").unwrap_err();
        match e {
            Error::Syntax { line, .. } => assert_eq!(line, 1),
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn sort_conflict_is_reported() {
        let e = parse_program("p(X) :- X=true, X=0.").unwrap_err();
        assert!(matches!(e, Error::Sort { .. }), "got {e}");
    }

    #[test]
    fn spec_directive_parses_into_contract() {
        let text = r#"
rev([],[]).
rev([H|T],R) :- rev(T,S), snoc(S,H,R).
snoc([],X,[X]).
snoc([X|Xs],Y,[X|Zs]) :- snoc(Xs,Y,Zs).
is_asorted([],Res) :- Res.
is_asorted([H|T],Res) :- Res = (I => (H=<Hd & RT)), hd(T,I,Hd), is_asorted(T,RT).
is_dsorted([],Res) :- Res.
is_dsorted([H|T],Res) :- Res = (I => (H>=Hd & RT)), hd(T,I,Hd), is_dsorted(T,RT).
hd([],I,Hd) :- ~I & Hd=0.
hd([H|T],I,Hd) :- I & Hd=H.
:- spec rev(L,R) ==> is_asorted(L,BL), is_dsorted(R,BR) => (BL=>BR).
"#;
        let p = parse_program(text).expect("parse");
        assert_eq!(p.contracts.len(), 1);
        let k = &p.contracts[0];
        assert_eq!(&*k.pred, "rev");
        assert_eq!(k.params.len(), 2);
        assert_eq!(k.pre, Constraint::True);
        assert_eq!(k.catas.len(), 2);
        assert_eq!(&*k.catas[0].pred, "is_asorted");
        assert_eq!(k.catas[0].adt_var, k.params[0]);
        assert_eq!(k.catas[0].outputs.len(), 1);
        assert_eq!(&*k.catas[1].pred, "is_dsorted");
        assert_eq!(k.catas[1].adt_var, k.params[1]);
        assert!(matches!(k.post, Constraint::Implies(..)));
    }

    #[test]
    fn gamma_produces_goal_thirteen_shape() {
        let text = r#"
rev([],[]).
is_asorted([],Res) :- Res.
is_dsorted([],Res) :- Res.
:- spec rev(L,R) ==> is_asorted(L,BL), is_dsorted(R,BR) => (BL=>BR).
"#;
        let p = parse_program(text).expect("parse");
        let goal = contract_to_goal(&p.contracts[0]).expect("goal");
        assert!(goal.is_goal());
        assert_eq!(goal.body.len(), 3);
        assert_eq!(&*goal.body[0].pred, "rev");
        assert_eq!(&*goal.body[1].pred, "is_asorted");
        assert_eq!(&*goal.body[2].pred, "is_dsorted");
        // Constraint is ~(BL=>BR) & true, i.e. semantically BL & ~BR.
        let parts = goal.constraint.conjuncts();
        assert!(matches!(parts[0], Constraint::Not(_)));
    }

    #[test]
    fn trivial_postcondition_yields_no_goal() {
        let text = r#"
p([],X).
q([],B) :- B.
:- spec p(L,X) ==> q(L,B) => true.
"#;
        let p = parse_program(text).expect("parse");
        assert!(contract_to_goal(&p.contracts[0]).is_none());
        assert!(!p.diagnostics.is_empty());
    }

    #[test]
    fn contract_conditions_are_individually_rejected() {
        let base = r#"
p([],X).
q([],B) :- B.
q([H|T],B) :- B = (H>0 & R), q(T,R).
"#;
        // (i) head arguments not distinct variables
        let e = parse_program(&format!("{base}:- spec p(L,L) ==> q(L,B) => B.")).unwrap_err();
        assert!(matches!(e, Error::ContractForm { condition: "i", .. }), "{e}");
        // (ii) precondition over a non-input variable
        let e = parse_program(&format!(
            "{base}:- spec p(L,X) ==> Y>0, q(L,B) => B."
        ))
        .unwrap_err();
        assert!(matches!(e, Error::ContractForm { condition: "ii", .. }), "{e}");
        // (iii) cata with more than one ADT argument
        let e = parse_program(&format!(
            "{base}r([],[]).\n:- spec p(L,X) ==> r(L,M) => X>0."
        ))
        .unwrap_err();
        assert!(matches!(e, Error::ContractForm { condition: "iii", .. }), "{e}");
        // (iv) output variable reused
        let e = parse_program(&format!(
            "{base}:- spec p(L,X) ==> q(L,B), q(L,B) => B."
        ))
        .unwrap_err();
        assert!(matches!(e, Error::ContractForm { condition: "iv", .. }), "{e}");
        // (v) ADT argument not occurring in the head
        let e = parse_program(&format!("{base}:- spec p(L,X) ==> q(M,B) => B.")).unwrap_err();
        assert!(matches!(e, Error::ContractForm { condition: "v", .. }), "{e}");
        // (vi) postcondition variable out of scope
        let e = parse_program(&format!(
            "{base}:- spec p(L,X) ==> q(L,B) => (B & C)."
        ))
        .unwrap_err();
        assert!(matches!(e, Error::ContractForm { condition: "vi", .. }), "{e}");
    }

    #[test]
    fn body_atoms_are_normalized_to_distinct_basic_variables() {
        let text = "p(X) :- q(X,X,0).\nq(A,B,C).\n";
        let p = parse_program(text).expect("parse");
        let clause = &p.clauses[0];
        let atom = &clause.body[0];
        // Second and third argument got replaced by fresh variables.
        let vars: Vec<&Var> = atom.args.iter().filter_map(|t| t.as_var()).collect();
        assert_eq!(vars.len(), 3);
        assert_eq!(vars.iter().collect::<std::collections::BTreeSet<_>>().len(), 3);
        assert_eq!(clause.constraint.conjuncts().len(), 2);
    }

    #[test]
    fn custom_data_declaration_is_usable() {
        let text = r#"
:- data nat = zero | succ(nat).
len(zero,N) :- N=0.
len(succ(M),N) :- len(M,K), N=K+1.
"#;
        let p = parse_program(text).expect("parse");
        assert_eq!(
            p.signature("len").unwrap(),
            &[Sort::adt("nat"), Sort::Int]
        );
        assert!(p.sorts.lookup("nat").is_some());
        assert_eq!(p.sorts.lookup("nat").unwrap().constructors.len(), 2);
    }

    #[test]
    fn bstdel_program_parses() {
        let text = r#"
bstdel(X,leaf,leaf).
bstdel(X,node(leaf,A,R),R) :- X=A.
bstdel(X,node(L,A,leaf),L) :- X=A.
bstdel(X,node(L,A,R),node(L,A1,T)) :- X=A & D, delmin(R,T,A1,D).
bstdel(X,node(L,A,R),node(L1,A,R)) :- X<A, bstdel(X,L,L1).
bstdel(X,node(L,A,R),node(L,A,R1)) :- A<X, bstdel(X,R,R1).
delmin(leaf,leaf,M,D) :- M=0 & ~D.
delmin(node(leaf,A,R),R,M,D) :- M=A & D.
delmin(node(node(U,B,V),A,R),node(T,A,R),M,D) :- D, delmin(node(U,B,V),T,M,D).
"#;
        let p = parse_program(text).expect("parse");
        assert_eq!(p.clauses.len(), 9);
        let tree_int = Sort::adt("tree(int)");
        assert_eq!(
            p.signature("bstdel").unwrap(),
            &[Sort::Int, tree_int.clone(), tree_int.clone()]
        );
        assert_eq!(
            p.signature("delmin").unwrap(),
            &[tree_int.clone(), tree_int, Sort::Int, Sort::Bool]
        );
        // The recursive delmin body atom keeps its constructor pattern.
        let rec = &p.clauses[8];
        assert!(matches!(rec.body[0].args[0], Term::Cons(..)));
    }
}
