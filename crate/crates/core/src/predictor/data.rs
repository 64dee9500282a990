use crate::quantizer::Sid;
use crate::seqstore::{CompressedSidSequence, HistoryWindow};

/// One (context, next id) example cut from an author's run sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub author_id: u64,
    pub window: HistoryWindow,
    pub target: Sid,
    /// Raw segment index at which the target run begins.
    pub target_start: u64,
}

/// Every cut of `seq`: the context is the up-to-`l_max` runs before run `i`
/// and the target is run `i`'s id, for `i ≥ 1`.
pub fn training_pairs(author_id: u64, seq: &CompressedSidSequence, l_max: usize, pad: Sid) -> Vec<TrainingPair> {
    let mut out = Vec::with_capacity(seq.runs().saturating_sub(1));
    let mut start = 0u64;
    for i in 1..seq.runs() {
        start += u64::from(seq.freq()[i - 1]);
        out.push(TrainingPair {
            author_id,
            window: HistoryWindow::prefix(seq, start, l_max, pad),
            target: seq.distinct()[i],
            target_start: start,
        });
    }
    out
}
