//! Supervised pairs recovered from logged sessions by replay.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::Point;
use crate::lang_model::{LanguageModel, Symbol};
use crate::layouts::display_position;
use crate::learner::parametric::PointingSample;
use crate::session::{replay, replay_with, Session, SessionLog};

/// How far past the committed prefix the eventual selection is resolved.
pub const TARGET_DEPTH: usize = 5;

/// Window features at one tick, with where the finally committed text sat
/// at that tick: `y_final` on the displayed axis and `target` on screen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub tick: u64,
    pub y_final: f64,
    pub features: Vec<f64>,
    pub target: Point,
}

impl TrainingPair {
    pub fn sample(&self) -> PointingSample {
        PointingSample { features: self.features.clone(), target: self.target }
    }
}

/// The pair for the session's current tick, if the committed prefix is
/// still on the way to `final_text` and the window holds cursor samples.
pub fn pair_at(s: &Session, final_text: &[Symbol]) -> Option<TrainingPair> {
    let features = s.window().features()?;
    let (belief, frame) = (s.belief()?, s.current_frame()?);
    let rest = final_text.strip_prefix(s.committed())?;
    if rest.is_empty() {
        return None;
    }
    let iv = s.tree().interval_of(&rest[..rest.len().min(TARGET_DEPTH)]).ok()?;
    let x = belief.code_to_x(iv.mid());
    Some(TrainingPair {
        tick: s.tick(),
        y_final: belief.transform_y(x),
        features: features.as_slice().to_vec(),
        target: display_position(frame, x),
    })
}

/// Replays `log`, pairing every tick with its label: the prompt of a
/// training session, otherwise the text committed by the end. Ticks spent
/// on a wrong branch are skipped, and a log without commits yields nothing.
pub fn record_pairs(log: &SessionLog, model: Arc<dyn LanguageModel>) -> Result<Vec<TrainingPair>> {
    let last = replay(log, model.clone())?;
    if last.commits.is_empty() {
        return Ok(Vec::new());
    }
    let label = match &log.header.training {
        Some(prompt) => {
            let a = model.alphabet();
            let mut t = a.encode(prompt.trim_end_matches(a.terminator()))?;
            t.push(Symbol::TERMINATOR);
            t
        }
        None => last.final_symbols,
    };
    let mut pairs = Vec::new();
    replay_with(log, model, |s| pairs.extend(pair_at(s, &label)))?;
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::ActionEvent;
    use crate::lang_model::{Alphabet, MemorylessModel};
    use crate::session::{LogWriter, MemoryLog, ModelRef, SessionConfig};

    #[test]
    fn pairs_follow_the_final_text() {
        let a = Alphabet::new(['a', 'b'], '$').unwrap();
        let model: Arc<dyn LanguageModel> = Arc::new(MemorylessModel::new(a, vec![0.2, 0.5, 0.3]).unwrap());
        let mem = MemoryLog::default();
        let mut s = Session::new(model.clone(), SessionConfig::default(), None).unwrap();
        s.start_log(LogWriter::new(mem.clone()), ModelRef::default()).unwrap();
        for _ in 0..150 {
            let t = s.now() + s.dt();
            s.push_event(ActionEvent::cursor(t, 1.0, 0.45)).unwrap();
            s.advance().unwrap();
        }
        assert!(!s.history().is_empty());
        let log = SessionLog::read(mem.contents().as_bytes()).unwrap();
        let pairs = record_pairs(&log, model).unwrap();
        assert!(pairs.len() > 20, "{}", pairs.len());
        assert!(pairs.iter().all(|p| (0.0..=1.0).contains(&p.y_final) && p.target.x == 1.0));
        assert!(pairs.windows(2).all(|w| w[0].tick < w[1].tick));
    }
}
