//! Learning curves: accuracy per evaluated epoch, per category and split.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Accuracy per category label, in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scores(pub Vec<(String, f64)>);

impl Scores {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.0.iter().find(|(l, _)| l == label).map(|(_, a)| *a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train: Scores,
    pub test: Scores,
    /// Mean per-step training loss over the epoch; `None` before training.
    pub train_loss: Option<f64>,
}

impl CurvePoint {
    pub fn scores(&self, split: Split) -> &Scores {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }

    pub fn at_epoch(&self, epoch: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.epoch == epoch)
    }

    /// Accuracy series `(epoch, accuracy)` for one label and split.
    pub fn series(&self, label: &str, split: Split) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.scores(split).get(label).map(|a| (p.epoch, a)))
            .collect()
    }
}

/// Stop a phase once `label`'s test accuracy reaches `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct StopRule {
    pub label: String,
    pub threshold: f64,
}

impl StopRule {
    pub fn reached(&self, point: &CurvePoint) -> bool {
        point
            .test
            .get(&self.label)
            .is_some_and(|a| a >= self.threshold)
    }
}
