use pyo3::prelude::*;
use rtiac_py::{rtiac_py as module, Model, Session};

fn corpus() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/kjv-genesis.txt")).unwrap()
}

#[test]
fn model_methods_agree() {
    let m = Model::train(&corpus(), 2, 0.1).unwrap();
    let p = m.distribution("and").unwrap();
    assert_eq!(p.len(), 28);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let (lo, hi) = m.interval("and ").unwrap();
    assert!((hi - lo - m.prefix_mass("and ").unwrap()).abs() < 1e-15);
    assert!(m.distribution("AND").is_err());
}

#[test]
fn session_rejects_unknown_layout() {
    let m = Model::train("ab ba", 1, 0.5).unwrap();
    assert!(Session::new(&m, "rtiac", "spiral", None).is_err());
    let mut s = Session::new(&m, "iac", "linear", None).unwrap();
    s.cursor(1.0, 0.5).unwrap();
    assert!(s.advance().unwrap().is_empty());
    assert_eq!(s.tick(), 1);
}

#[test]
fn module_imports_and_runs() {
    pyo3::append_to_inittab!(module);
    Python::initialize();
    Python::attach(|py| {
        let code = c"import rtiac_py\nm = rtiac_py.Model.train('ab ba\\nab', 1, 0.5)\nassert abs(sum(m.distribution('a')) - 1) < 1e-12\ncsv = rtiac_py.simulate(m, noise=[0.0], seeds=1, ticks=300)\nassert csv.startswith('engine,layout,')\n";
        py.run(code, None, None).unwrap();
    });
}
