use cata_chc::{cata, constraints::ConstraintSolver, emit, parse, transform};

const REVERSE: &str = r#"
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
leq_all(X,[],Res) :- Res.
leq_all(X,[H|T],Res) :- Res = (X=<H & R), leq_all(X,T,R).
:- spec rev(L,R) ==> is_asorted(L,BL), is_dsorted(R,BR) => (BL=>BR).
:- spec snoc(A,X,C) ==> is_dsorted(A,BA), leq_all(X,A,BX), is_dsorted(C,BC)
   => ((BX & BA) => BC).
"#;

fn main() {
    let p = parse::parse_program(REVERSE).expect("parse");
    let cls = cata::classify(&p).expect("classify");
    let mut solver = ConstraintSolver::default_solver().expect("solver");
    let t0 = std::time::Instant::now();
    let r = transform::run_tcata(
        &p,
        &cls,
        &mut solver,
        transform::TransformOptions { iteration_cap: 1000, trace: true },
    )
    .expect("transform");
    eprintln!("transform time: {:?}", t0.elapsed());
    for chain in &r.chains {
        println!("=== chain {} ({} iterations, {} defs) ===", chain.source, chain.iterations, chain.defs.len());
        for d in &chain.defs {
            println!("  [def{}] {}", if d.is_maximal { "*" } else { " " }, emit::display_clause(&d.clause()));
        }
        for c in &chain.clauses {
            println!("  {}", emit::display_clause(c));
        }
    }
    eprintln!("solver queries: {:?}", solver.stats().queries);
}
