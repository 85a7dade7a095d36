//! String ↔ interval mapping over a language model.
//!
//! The unit interval is split among the outcomes `τ, s₁, s₂, …` in order,
//! with lengths equal to their conditional probabilities, and each piece is
//! split again for the following symbol. All intervals are expressed
//! relative to the committed prefix: committing a symbol maps its interval
//! affinely back onto `[0, 1)`, so lengths never underflow however long the
//! entered text gets.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang_model::{check_string, LanguageModel, Symbol};

const CACHE_LIMIT: usize = 8192;

/// Half-open interval `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Image of `x ∈ [0,1)` under the affine map `[0,1) → self`.
    #[inline]
    pub fn to_outer(&self, x: f64) -> f64 {
        self.lo + x * self.len()
    }

    /// Inverse of [`Interval::to_outer`].
    #[inline]
    pub fn to_inner(&self, x: f64) -> f64 {
        (x - self.lo) / self.len()
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }
}

/// Lazily expanded code tree rooted at the committed prefix.
pub struct CodeTree {
    model: Arc<dyn LanguageModel>,
    committed: Vec<Symbol>,
    closed: bool,
    // cumulative boundaries keyed by the model's effective context
    cache: Mutex<HashMap<Vec<Symbol>, Arc<[f64]>>>,
}

impl Clone for CodeTree {
    fn clone(&self) -> Self {
        Self {
            model: Arc::clone(&self.model),
            committed: self.committed.clone(),
            closed: self.closed,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl std::fmt::Debug for CodeTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodeTree")
            .field("committed", &self.model.alphabet().decode(&self.committed))
            .field("closed", &self.closed)
            .finish()
    }
}

impl CodeTree {
    pub fn new(model: Arc<dyn LanguageModel>) -> Self {
        Self { model, committed: Vec::new(), closed: false, cache: Mutex::new(HashMap::new()) }
    }

    pub fn model(&self) -> &Arc<dyn LanguageModel> {
        &self.model
    }

    pub fn committed(&self) -> &[Symbol] {
        &self.committed
    }

    pub fn committed_text(&self) -> String {
        self.model.alphabet().decode(&self.committed)
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Cumulative boundaries `[0, P(τ), P(τ)+P(s₁), …, 1]` after `committed · s`.
    pub fn cumulative(&self, s: &[Symbol]) -> Arc<[f64]> {
        let mut ctx = Vec::with_capacity(self.committed.len() + s.len());
        ctx.extend_from_slice(&self.committed);
        ctx.extend_from_slice(s);
        let key = self.model.context_key(&ctx);
        let mut cache = self.cache.lock().expect("cache poisoned");
        if let Some(c) = cache.get(key) {
            return Arc::clone(c);
        }
        let probs = self.model.next_symbol_distribution(&ctx);
        let mut cum = Vec::with_capacity(probs.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for p in &probs[..probs.len() - 1] {
            acc += p;
            cum.push(acc);
        }
        cum.push(1.0);
        let cum: Arc<[f64]> = cum.into();
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key.to_vec(), Arc::clone(&cum));
        cum
    }

    fn split(parent: Interval, cum: &[f64], sym: Symbol) -> Interval {
        let i = sym.index();
        let lo = parent.to_outer(cum[i]);
        let hi = if i + 2 == cum.len() { parent.hi } else { parent.to_outer(cum[i + 1]) };
        Interval { lo, hi }
    }

    fn check_open(&self) -> Result<()> {
        if self.closed {
            Err(Error::Closed)
        } else {
            Ok(())
        }
    }

    /// Ordered child intervals of `s`; empty when `s` is terminated.
    pub fn children(&self, s: &[Symbol]) -> Result<Vec<(Symbol, Interval)>> {
        self.check_open()?;
        check_string(s)?;
        if s.last().is_some_and(|x| x.is_terminator()) {
            return Ok(Vec::new());
        }
        let parent = self.interval_of(s)?;
        Ok(self.children_within(s, parent))
    }

    /// Children of `s` given its already known interval.
    pub fn children_within(&self, s: &[Symbol], parent: Interval) -> Vec<(Symbol, Interval)> {
        let cum = self.cumulative(s);
        self.model
            .alphabet()
            .all()
            .map(|sym| (sym, Self::split(parent, &cum, sym)))
            .collect()
    }

    pub fn interval_of(&self, s: &[Symbol]) -> Result<Interval> {
        self.check_open()?;
        check_string(s)?;
        let mut iv = Interval::UNIT;
        for i in 0..s.len() {
            let cum = self.cumulative(&s[..i]);
            iv = Self::split(iv, &cum, s[i]);
        }
        Ok(iv)
    }

    /// The string of length ≤ `depth` whose interval contains `x`; stops
    /// early at a terminator.
    pub fn locate(&self, x: f64, depth: usize) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(depth);
        if self.closed {
            return out;
        }
        let x = x.clamp(0.0, 1.0 - f64::EPSILON);
        let mut iv = Interval::UNIT;
        while out.len() < depth {
            let cum = self.cumulative(&out);
            // compare in outer coordinates so the result agrees with interval_of
            let inner = &cum[1..cum.len() - 1];
            let i = inner.partition_point(|&c| iv.to_outer(c) <= x);
            let sym = Symbol(i as u16);
            iv = Self::split(iv, &cum, sym);
            out.push(sym);
            if sym.is_terminator() {
                break;
            }
        }
        out
    }

    /// Commits `sym`: its interval becomes the new `[0, 1)`. Returns the
    /// interval it occupied before, which defines the affine change of
    /// coordinates. Committing the terminator closes the tree.
    pub fn rescale_after_commit(&mut self, sym: Symbol) -> Result<Interval> {
        self.check_open()?;
        if sym.index() >= self.model.alphabet().outcomes() {
            return Err(Error::InvalidString(format!("symbol index {} out of range", sym.index())));
        }
        let iv = self.interval_of(&[sym])?;
        self.committed.push(sym);
        if sym.is_terminator() {
            self.closed = true;
        }
        Ok(iv)
    }

    /// Removes the last committed symbol (reopening a closed tree). Returns
    /// the symbol and the interval it occupies in the restored coordinates.
    pub fn uncommit(&mut self) -> Result<(Symbol, Interval)> {
        let sym = self.committed.pop().ok_or(Error::NothingToUndo)?;
        self.closed = false;
        let iv = self.interval_of(&[sym])?;
        Ok((sym, iv))
    }
}
