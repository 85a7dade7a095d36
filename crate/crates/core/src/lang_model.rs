//! Input probability model: an ordered alphabet with a terminator symbol and
//! a fixed-order character n-gram estimator with add-α smoothing and backoff.
//!
//! Symbols are dense indices. Index 0 is always the terminator, so every
//! probability vector is laid out `[τ, s₁, s₂, …]` and the terminator sorts
//! before every alphabet symbol.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TERMINATOR: char = '⊣';
pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol(pub u16);

impl Symbol {
    pub const TERMINATOR: Symbol = Symbol(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_terminator(self) -> bool {
        self.0 == 0
    }
}

/// Ordered set of input symbols plus the terminator.
#[derive(Clone, Debug, PartialEq)]
pub struct Alphabet {
    symbols: Vec<char>,
    terminator: char,
    lookup: HashMap<char, Symbol>,
}

impl Alphabet {
    /// Symbols keep the order in which they are given.
    pub fn new(symbols: impl IntoIterator<Item = char>, terminator: char) -> Result<Self> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        if symbols.is_empty() {
            return Err(Error::Config("alphabet is empty".into()));
        }
        let mut lookup = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if c == terminator {
                return Err(Error::Config(format!("terminator {c:?} listed as an alphabet symbol")));
            }
            if lookup.insert(c, Symbol(i as u16 + 1)).is_some() {
                return Err(Error::Config(format!("duplicate alphabet symbol {c:?}")));
            }
        }
        Ok(Self { symbols, terminator, lookup })
    }

    /// Space followed by `a`–`z`: the 27-symbol text alphabet.
    pub fn lowercase_latin() -> Self {
        Self::new(std::iter::once(' ').chain('a'..='z'), DEFAULT_TERMINATOR)
            .expect("static alphabet is valid")
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn terminator(&self) -> char {
        self.terminator
    }

    /// Number of alphabet symbols, terminator excluded.
    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    /// Number of outcomes of one step, terminator included.
    pub fn outcomes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn symbol(&self, c: char) -> Option<Symbol> {
        if c == self.terminator {
            Some(Symbol::TERMINATOR)
        } else {
            self.lookup.get(&c).copied()
        }
    }

    pub fn char_of(&self, s: Symbol) -> char {
        if s.is_terminator() {
            self.terminator
        } else {
            self.symbols[s.index() - 1]
        }
    }

    pub fn all(&self) -> impl Iterator<Item = Symbol> {
        (0..self.outcomes() as u16).map(Symbol)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<Symbol>> {
        text.chars()
            .map(|c| {
                self.symbol(c)
                    .ok_or_else(|| Error::InvalidString(format!("{c:?} is not in the alphabet")))
            })
            .collect()
    }

    pub fn decode(&self, syms: &[Symbol]) -> String {
        syms.iter().map(|&s| self.char_of(s)).collect()
    }
}

/// Rejects strings with a terminator anywhere but the last position.
pub fn check_string(s: &[Symbol]) -> Result<()> {
    if let Some(pos) = s.iter().position(|x| x.is_terminator()) {
        if pos + 1 != s.len() {
            return Err(Error::InvalidString(format!("terminator at interior position {pos}")));
        }
    }
    Ok(())
}

/// Conditional next-symbol distribution over `𝒜 ∪ {τ}`.
pub trait LanguageModel: Send + Sync {
    fn alphabet(&self) -> &Alphabet;

    /// Probability vector indexed by `Symbol::index`, terminator first.
    /// `context` never contains the terminator.
    fn next_symbol_distribution(&self, context: &[Symbol]) -> Vec<f64>;

    /// The part of `context` the distribution depends on. Used as a cache key.
    fn context_key<'a>(&self, context: &'a [Symbol]) -> &'a [Symbol] {
        context
    }

    /// Total probability of all strings beginning with `s`, given `history`
    /// has already been entered.
    fn prefix_mass_after(&self, history: &[Symbol], s: &[Symbol]) -> Result<f64> {
        check_string(s)?;
        let mut ctx: Vec<Symbol> = history.to_vec();
        let mut mass = 1.0;
        for &sym in s {
            mass *= self.next_symbol_distribution(&ctx)[sym.index()];
            ctx.push(sym);
        }
        Ok(mass)
    }

    fn prefix_mass(&self, s: &[Symbol]) -> Result<f64> {
        self.prefix_mass_after(&[], s)
    }
}

/// Context-free model with a fixed distribution. Mostly useful for tests and
/// for hand-checkable interval layouts.
#[derive(Clone, Debug)]
pub struct MemorylessModel {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl MemorylessModel {
    /// `probs` is laid out terminator first.
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.outcomes() {
            return Err(Error::Config(format!(
                "expected {} probabilities, got {}",
                alphabet.outcomes(),
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Config("probabilities must be positive".into()));
        }
        let total: f64 = probs.iter().sum();
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self { alphabet, probs })
    }
}

impl LanguageModel for MemorylessModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn next_symbol_distribution(&self, _context: &[Symbol]) -> Vec<f64> {
        self.probs.clone()
    }

    fn context_key<'a>(&self, _context: &'a [Symbol]) -> &'a [Symbol] {
        &[]
    }
}

#[derive(Clone, Debug, PartialEq)]
struct CountRow {
    counts: Vec<u64>,
    total: u64,
}

/// Fixed-order character n-gram model.
///
/// Counts are kept for every context length `0..=order`. A query backs off
/// to the longest suffix of the context that was observed, then applies
/// add-α smoothing over all outcomes, so every conditional probability is
/// strictly positive.
#[derive(Clone, Debug)]
pub struct NGramModel {
    alphabet: Alphabet,
    order: usize,
    alpha: f64,
    counts: HashMap<Vec<Symbol>, CountRow>,
}

/// What ingestion kept and dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub lines: usize,
    pub kept_chars: usize,
    pub dropped_chars: usize,
    pub dropped: BTreeMap<char, usize>,
}

impl NGramModel {
    pub fn empty(alphabet: Alphabet, order: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing alpha must be positive, got {alpha}")));
        }
        Ok(Self { alphabet, order, alpha, counts: HashMap::new() })
    }

    /// Counts every line as one string followed by a terminator. Characters
    /// outside the alphabet are dropped and reported.
    pub fn ingest<I, S>(lines: I, alphabet: Alphabet, order: usize, alpha: f64) -> Result<(Self, IngestReport)>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut model = Self::empty(alphabet, order, alpha)?;
        let mut report = IngestReport::default();
        for line in lines {
            report.lines += 1;
            let mut syms = Vec::new();
            for c in line.as_ref().chars() {
                match model.alphabet.lookup.get(&c) {
                    Some(&s) => {
                        syms.push(s);
                        report.kept_chars += 1;
                    }
                    None => {
                        report.dropped_chars += 1;
                        *report.dropped.entry(c).or_default() += 1;
                    }
                }
            }
            model.observe(&syms);
        }
        Ok((model, report))
    }

    /// Adds one terminated string to the counts.
    pub fn observe(&mut self, syms: &[Symbol]) {
        let n_out = self.alphabet.outcomes();
        for i in 0..=syms.len() {
            let next = syms.get(i).copied().unwrap_or(Symbol::TERMINATOR);
            for k in 0..=self.order.min(i) {
                let row = self
                    .counts
                    .entry(syms[i - k..i].to_vec())
                    .or_insert_with(|| CountRow { counts: vec![0; n_out], total: 0 });
                row.counts[next.index()] += 1;
                row.total += 1;
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn context_count(&self) -> usize {
        self.counts.len()
    }

    fn backoff_row(&self, context: &[Symbol]) -> Option<&CountRow> {
        let k = self.order.min(context.len());
        (0..=k)
            .rev()
            .filter_map(|len| self.counts.get(&context[context.len() - len..]))
            .find(|row| row.total > 0)
    }

    pub fn to_file(&self) -> ModelFile {
        let counts = self
            .counts
            .iter()
            .map(|(ctx, row)| (self.alphabet.decode(ctx), row.counts.clone()))
            .collect();
        ModelFile {
            version: MODEL_FILE_VERSION,
            alphabet: self.alphabet.symbols.iter().collect(),
            terminator: self.alphabet.terminator,
            order: self.order,
            alpha: self.alpha,
            counts,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.version != MODEL_FILE_VERSION {
            return Err(Error::Version { found: file.version, expected: MODEL_FILE_VERSION });
        }
        let alphabet = Alphabet::new(file.alphabet.chars(), file.terminator)?;
        let mut model = Self::empty(alphabet, file.order, file.alpha)?;
        for (ctx, counts) in file.counts {
            let key = model.alphabet.encode(&ctx)?;
            if key.len() > model.order || key.iter().any(|s| s.is_terminator()) {
                return Err(Error::Config(format!("bad context {ctx:?} in model file")));
            }
            if counts.len() != model.alphabet.outcomes() {
                return Err(Error::Config(format!("context {ctx:?} has {} counts", counts.len())));
            }
            let total = counts.iter().sum();
            model.counts.insert(key, CountRow { counts, total });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

impl LanguageModel for NGramModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn next_symbol_distribution(&self, context: &[Symbol]) -> Vec<f64> {
        let n = self.alphabet.outcomes();
        match self.backoff_row(context) {
            Some(row) => {
                let denom = row.total as f64 + self.alpha * n as f64;
                row.counts.iter().map(|&c| (c as f64 + self.alpha) / denom).collect()
            }
            None => vec![1.0 / n as f64; n],
        }
    }

    fn context_key<'a>(&self, context: &'a [Symbol]) -> &'a [Symbol] {
        let k = self.order.min(context.len());
        &context[context.len() - k..]
    }
}

/// On-disk model: `{version, alphabet, terminator, order, alpha, counts}`.
/// `counts` maps each context string to its per-outcome counts, terminator
/// first.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub alphabet: String,
    pub terminator: char,
    pub order: usize,
    pub alpha: f64,
    pub counts: BTreeMap<String, Vec<u64>>,
}
