use cata_chc::{cata, constraints::ConstraintSolver, emit, parse, smt, transform};

fn main() {
    let text = std::fs::read_to_string(std::env::args().nth(1).unwrap()).unwrap();
    let p = parse::parse_program(&text).expect("parse");
    let cls = cata::classify(&p).expect("classify");
    let mut solver = ConstraintSolver::default_solver().expect("solver");
    let t0 = std::time::Instant::now();
    let r = transform::run_tcata(&p, &cls, &mut solver, transform::TransformOptions::default())
        .expect("transform");
    let clauses = r.clauses();
    eprintln!("transform: {:?} ({} clauses)", t0.elapsed(), clauses.len());
    let script = emit::emit_smtlib(&clauses, &p.sorts, false);
    let dir = std::env::temp_dir().join("catadbg");
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("out.smt2");
    std::fs::write(&f, &script).unwrap();
    let cmd = smt::discover_solver(None).expect("solver");
    let t1 = std::time::Instant::now();
    let verdict = smt::run_solver_on_file(&cmd, &f, std::time::Duration::from_secs(120)).expect("run");
    eprintln!("check-sat: {:?} in {:?}", verdict, t1.elapsed());
}
