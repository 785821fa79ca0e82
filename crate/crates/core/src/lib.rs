//! Verification of catamorphism-based contracts for constrained Horn clauses
//! over algebraic data types.
//!
//! The pipeline takes a CHC program (Prolog-like syntax) together with one
//! contract per program predicate, where all program properties are expressed
//! through catamorphisms (structural folds returning basic-sorted values).
//! It rewrites the clauses, by definition introduction, unfolding, contract
//! application and folding, into an equisatisfiable-if-sat set of clauses over
//! integers and booleans only. The resulting system is handed to an external
//! CHC solver; `sat` there implies every contract holds.
//!
//! Module map:
//! - [`syntax`]: sorts, terms, constraints, atoms, clauses
//! - [`subst`]: substitutions, unification, variable utilities
//! - [`parse`]: concrete syntax, sort inference, contracts
//! - [`oracle`]: bounded bottom-up evaluator used as a testing oracle
//! - [`cata`]: predicate classification and catamorphism schema analysis
//! - [`smt`]: external SMT process session
//! - [`constraints`]: sat/entailment/projection/widening services
//! - [`transform`]: the clause transformation engine
//! - [`emit`]: SMT-LIB and Prolog serialization
//! - [`backend`]: CHC solver driver and verdicts

pub mod backend;
pub mod cata;
pub mod constraints;
pub mod emit;
pub mod error;
pub mod oracle;
pub mod parse;
pub mod smt;
pub mod subst;
pub mod syntax;
pub mod testgen;
pub mod transform;

pub use error::Error;
