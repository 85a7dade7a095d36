#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rtiac::{Alphabet, CodeTree, LanguageModel, MemorylessModel, NGramModel, Symbol};

pub const ORACLE_DEPTH: usize = 5;

/// `{a, b}` plus terminator with `P(τ, a, b) = (0.2, 0.5, 0.3)`.
pub fn abt_model() -> Arc<dyn LanguageModel> {
    let a = Alphabet::new(['a', 'b'], '$').unwrap();
    Arc::new(MemorylessModel::new(a, vec![0.2, 0.5, 0.3]).unwrap())
}

pub fn abt_rational() -> Vec<BigRational> {
    let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
    vec![r(1, 5), r(1, 2), r(3, 10)]
}

pub fn corpus_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/kjv-genesis.txt")
}

pub fn corpus_text() -> String {
    std::fs::read_to_string(corpus_path()).expect("bundled corpus")
}

/// Order-2 model with add-0.1 smoothing over `a-z` and space.
pub fn corpus_model() -> Arc<dyn LanguageModel> {
    let text = corpus_text();
    let (m, _) = NGramModel::ingest(text.lines(), Alphabet::lowercase_latin(), 2, 0.1).unwrap();
    Arc::new(m)
}

/// Every string over the outcomes up to `depth`, terminated strings included,
/// with its exact interval by direct recursion.
pub fn exact_intervals(p: &[BigRational], depth: usize) -> Vec<(Vec<Symbol>, BigRational, BigRational)> {
    let mut out = Vec::new();
    let mut frontier = vec![(Vec::new(), BigRational::zero(), BigRational::one())];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (s, lo, hi) in &frontier {
            let len = hi - lo;
            let mut acc = lo.clone();
            for (i, pi) in p.iter().enumerate() {
                let a = acc.clone();
                acc = &acc + &len * pi;
                let mut t: Vec<Symbol> = s.clone();
                t.push(Symbol(i as u16));
                out.push((t.clone(), a.clone(), acc.clone()));
                if i != 0 {
                    next.push((t, a, acc.clone()));
                }
            }
        }
        frontier = next;
    }
    out
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite")
}

pub struct OracleReport {
    pub strings: usize,
    pub max_interval_err: f64,
    pub max_gap: f64,
    pub max_tiling_err: f64,
}

/// Compares the engine's intervals with the exact ones and checks that
/// siblings abut and tile their parent.
pub fn coder_oracle() -> OracleReport {
    let tree = CodeTree::new(abt_model());
    let exact = exact_intervals(&abt_rational(), ORACLE_DEPTH);
    let mut max_interval_err = 0.0f64;
    for (s, lo, hi) in &exact {
        let iv = tree.interval_of(s).unwrap();
        max_interval_err = max_interval_err.max((iv.lo - to_f64(lo)).abs()).max((iv.hi - to_f64(hi)).abs());
    }
    let (mut max_gap, mut max_tiling_err) = (0.0f64, 0.0f64);
    let mut parents: Vec<Vec<Symbol>> = vec![Vec::new()];
    parents.extend(exact.iter().filter(|(s, ..)| s.len() < ORACLE_DEPTH && !s.last().unwrap().is_terminator()).map(|(s, ..)| s.clone()));
    for s in parents {
        let parent = tree.interval_of(&s).unwrap();
        let kids = tree.children(&s).unwrap();
        max_gap = max_gap.max((kids[0].1.lo - parent.lo).abs()).max((kids.last().unwrap().1.hi - parent.hi).abs());
        for w in kids.windows(2) {
            max_gap = max_gap.max((w[1].1.lo - w[0].1.hi).abs());
        }
        let total: f64 = kids.iter().map(|(_, iv)| iv.len()).sum();
        max_tiling_err = max_tiling_err.max((total - parent.len()).abs());
    }
    OracleReport { strings: exact.len(), max_interval_err, max_gap, max_tiling_err }
}
