use cata_chc::{cata, constraints::ConstraintSolver, parse, transform};
fn main() {
    let text = std::fs::read_to_string(std::env::args().nth(1).unwrap()).unwrap();
    let p = parse::parse_program(&text).expect("parse");
    let cls = cata::classify(&p).expect("classify");
    let mut solver = ConstraintSolver::default_solver().expect("solver");
    let r = transform::run_tcata(
        &p, &cls, &mut solver,
        transform::TransformOptions { iteration_cap: 8, trace: true },
    );
    match r {
        Ok(r) => println!("{}", r.trace),
        Err(e) => eprintln!("ERR {e}"),
    }
}
