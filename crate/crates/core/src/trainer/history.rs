use std::fmt::Write as _;

/// One evaluation point of a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches (regularizer excluded).
    pub loss: f64,
    pub recall: f64,
    pub ndcg: f64,
    /// Wall time of the epoch's training pass.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,loss,recall,ndcg,seconds";

impl TrainHistory {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EvalRecord> {
        self.records.last()
    }

    pub fn best_recall(&self) -> Option<&EvalRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EvalRecord>, r| match best {
                Some(b) if b.recall >= r.recall => Some(b),
                _ => Some(r),
            })
    }

    /// CSV with one row per evaluation. Wall time varies between runs, so
    /// the `seconds` column is left empty unless `with_timing` is set.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from(HISTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},{},", r.epoch, r.loss, r.recall, r.ndcg);
            if with_timing {
                let _ = write!(out, "{}", r.seconds);
            }
            out.push('\n');
        }
        out
    }
}

/// First evaluated epoch whose recall reaches `fraction` of the best
/// recall in the history; the last epoch if none does, 0 when empty.
pub fn epochs_to_fraction(history: &TrainHistory, fraction: f64) -> usize {
    let Some(best) = history.best_recall() else {
        return 0;
    };
    let target = fraction * best.recall;
    history
        .records
        .iter()
        .find(|r| r.recall >= target)
        .or(history.last())
        .map_or(0, |r| r.epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(recalls: &[f64]) -> TrainHistory {
        TrainHistory {
            records: recalls
                .iter()
                .enumerate()
                .map(|(i, &recall)| EvalRecord {
                    epoch: (i + 1) * 5,
                    loss: 1.0,
                    recall,
                    ndcg: recall / 2.0,
                    seconds: 0.25,
                })
                .collect(),
        }
    }

    #[test]
    fn monotone_history_at_full_fraction() {
        assert_eq!(epochs_to_fraction(&history(&[0.1, 0.2, 0.3]), 1.0), 15);
    }

    #[test]
    fn constant_history_returns_first_epoch() {
        assert_eq!(epochs_to_fraction(&history(&[0.2, 0.2, 0.2]), 0.95), 5);
    }

    #[test]
    fn unreachable_fraction_returns_last_epoch() {
        assert_eq!(epochs_to_fraction(&history(&[0.1, 0.3, 0.2]), 1.5), 15);
        assert_eq!(epochs_to_fraction(&TrainHistory::default(), 0.9), 0);
    }

    #[test]
    fn csv_layout() {
        let h = history(&[0.5]);
        assert_eq!(h.to_csv(true), "epoch,loss,recall,ndcg,seconds\n5,1,0.5,0.25,0.25\n");
        assert_eq!(h.to_csv(false), "epoch,loss,recall,ndcg,seconds\n5,1,0.5,0.25,\n");
    }
}
