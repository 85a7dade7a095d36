//! Adaptive text entry driven by a real-time belief over the arithmetic-coding
//! interval of a language model.

// `!(a > b)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actions;
pub mod baseline;
pub mod belief;
pub mod coder;
pub mod error;
pub mod geom;
pub mod lang_model;
pub mod layouts;
pub mod learner;
pub mod session;
pub mod sim;
pub mod wire;

pub use belief::{BeliefConfig, BeliefState, Cell, KernelParams, Selection};
pub use coder::{CodeTree, Interval};
pub use error::{Error, Result};
pub use geom::{Metric, Point};
pub use lang_model::{Alphabet, LanguageModel, MemorylessModel, NGramModel, Symbol};
pub use session::{EngineKind, Session, SessionConfig};
pub use layouts::{display_position, render, Geometry, LayoutConfig, LayoutFrame, LayoutKind, Region};
