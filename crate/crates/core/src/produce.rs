//! Syllable-to-phone production.
//!
//! Input is a word's sequence of syllable representations taken from a
//! trained perception net. Each syllable is held on the input for as many
//! steps as it has phones, and the net emits one phone per step. An
//! accumulator of past outputs (`a <- 0.5 a + y`) is an extra input; it is
//! fed the target phones during training and the net's own decoded phones
//! during evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curve::{Curve, CurvePoint, Scores, StopRule};
use crate::error::{Error, Result};
use crate::langgen::Word;
use crate::percept::{PerceptionNet, PhasePlan};
use crate::phonfeat::{InventoryKind, SegmentInventory, FEATURE_COUNT};
use crate::srn::{Network, Source, Topology, TrainConfig};

pub const PHONE_LABEL: &str = "phone";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductionConfig {
    pub hidden: usize,
    pub feedback_decay: f64,
    pub train: TrainConfig,
}

impl Default for ProductionConfig {
    fn default() -> Self {
        ProductionConfig {
            hidden: 40,
            feedback_decay: 0.5,
            train: TrainConfig::default(),
        }
    }
}

/// A word prepared for production: one representation per syllable and the
/// inventory index of every phone.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductionItem {
    pub phones: String,
    pub reps: Vec<Vec<f64>>,
    pub syllable_lengths: Vec<usize>,
    pub targets: Vec<usize>,
}

impl ProductionItem {
    pub fn new(
        phones: &str,
        reps: Vec<Vec<f64>>,
        syllable_lengths: Vec<usize>,
        inv: &SegmentInventory,
    ) -> Result<Self> {
        let total: usize = syllable_lengths.iter().sum();
        if reps.len() != syllable_lengths.len() || total != phones.chars().count() {
            return Err(Error::Word(format!(
                "`{phones}`: {} syllable reps for {} syllables covering {total} phones",
                reps.len(),
                syllable_lengths.len()
            )));
        }
        if syllable_lengths.contains(&0) {
            return Err(Error::Word(format!("`{phones}`: empty syllable")));
        }
        let targets = phones
            .chars()
            .map(|c| {
                inv.segments()
                    .iter()
                    .position(|s| s.symbol == c)
                    .ok_or(Error::UnknownSegment(c))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductionItem {
            phones: phones.to_owned(),
            reps,
            syllable_lengths,
            targets,
        })
    }

    pub fn steps(&self) -> usize {
        self.targets.len()
    }
}

/// Syllable representations for each word from a (frozen) perception net.
pub fn production_items(
    perception: &mut PerceptionNet,
    words: &[Word],
) -> Result<Vec<ProductionItem>> {
    let inv = perception.inventory().clone();
    words
        .iter()
        .map(|w| {
            let reps = perception.syllable_reps(w)?;
            let lengths = w.syllable_spans().iter().map(|s| s.len()).collect();
            ProductionItem::new(&w.phones, reps, lengths, &inv)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ProductionNet {
    net: Network,
    inventory: SegmentInventory,
    /// Feature vectors of the inventory, by index.
    table: Vec<[f64; FEATURE_COUNT]>,
}

impl ProductionNet {
    pub fn build(
        rep_size: usize,
        inventory: InventoryKind,
        cfg: &ProductionConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut t = Topology::new(rep_size);
        let h = t.add_hidden("hidden", cfg.hidden, true);
        let o = t.add_output(PHONE_LABEL, FEATURE_COUNT);
        let f = t.add_feedback(o, cfg.feedback_decay);
        t.connect(Source::Input, h);
        t.connect(Source::Accumulator(f), h);
        t.connect_output(h, o);
        let net = Network::build(t, cfg.train.init_range, seed)?;
        let inventory = SegmentInventory::new(inventory);
        let table = inventory
            .segments()
            .iter()
            .map(|s| s.features.to_f64())
            .collect();
        Ok(ProductionNet {
            net,
            inventory,
            table,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn inventory(&self) -> &SegmentInventory {
        &self.inventory
    }

    fn check(&self, item: &ProductionItem) -> Result<()> {
        let n = self.net.input_size();
        match item.reps.iter().find(|r| r.len() != n) {
            Some(r) => Err(Error::Dimension {
                context: "syllable representation",
                expected: n,
                got: r.len(),
            }),
            None => Ok(()),
        }
    }

    /// Walks the word step by step. `step` gets the net and the target index
    /// after each forward pass and returns the pattern to accumulate.
    fn run<F>(&mut self, item: &ProductionItem, mut step: F) -> Result<()>
    where
        F: FnMut(&mut Network, usize) -> Result<[f64; FEATURE_COUNT]>,
    {
        self.check(item)?;
        self.net.reset_context();
        let mut k = 0;
        for (rep, &len) in item.reps.iter().zip(&item.syllable_lengths) {
            for _ in 0..len {
                self.net.forward(rep)?;
                let fed = step(&mut self.net, item.targets[k])?;
                self.net.feed_back(0, &fed)?;
                k += 1;
            }
        }
        Ok(())
    }

    /// One teacher-forced training pass over a word; returns (loss, steps).
    pub fn train_item(&mut self, item: &ProductionItem, cfg: &TrainConfig) -> Result<(f64, usize)> {
        let table = self.table.clone();
        let mut loss = 0.0;
        self.run(item, |net, t| {
            loss += net.backward(&table[t], &[true], cfg)?;
            Ok(table[t])
        })?;
        Ok((loss, item.steps()))
    }

    /// Decoded phone index for every step, free-running.
    pub fn produce(&mut self, item: &ProductionItem) -> Result<Vec<usize>> {
        let table = self.table.clone();
        let inv = self.inventory.clone();
        let mut out = Vec::with_capacity(item.steps());
        self.run(item, |net, _| {
            let k = inv.decode_index(net.output());
            out.push(k);
            Ok(table[k])
        })?;
        Ok(out)
    }

    /// Fraction of phones, over all of `items`, decoded to the right segment.
    pub fn evaluate(&mut self, items: &[ProductionItem]) -> Result<f64> {
        let mut correct = 0;
        let mut total = 0;
        for item in items {
            let got = self.produce(item)?;
            correct += got
                .iter()
                .zip(&item.targets)
                .filter(|(a, b)| a == b)
                .count();
            total += item.steps();
        }
        Ok(if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        })
    }
}

/// Online production training, same schedule as perception training.
pub fn train_production(
    net: &mut ProductionNet,
    train: &[ProductionItem],
    test: &[ProductionItem],
    cfg: &TrainConfig,
    epochs: usize,
    stop: Option<&StopRule>,
    seed: u64,
) -> Result<Curve> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Curve::default();
    let score = |a: f64| Scores(vec![(PHONE_LABEL.to_owned(), a)]);
    let first = CurvePoint {
        epoch: 0,
        train: score(net.evaluate(train)?),
        test: score(net.evaluate(test)?),
        train_loss: None,
    };
    let done = stop.is_some_and(|s| s.reached(&first));
    curve.points.push(first);
    if done {
        return Ok(curve);
    }
    net.net.reset_momentum();
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut steps = 0;
        for &i in &order {
            let (l, n) = net.train_item(&train[i], cfg)?;
            loss += l;
            steps += n;
        }
        if epoch % cfg.eval_every == 0 || epoch == epochs {
            let point = CurvePoint {
                epoch,
                train: score(net.evaluate(train)?),
                test: score(net.evaluate(test)?),
                train_loss: Some(loss / steps.max(1) as f64),
            };
            let done = stop.is_some_and(|s| s.reached(&point));
            curve.points.push(point);
            if done {
                break;
            }
        }
    }
    Ok(curve)
}

/// Trains a perception net on every word of `lexicons` (no held-out words),
/// each word training the categories it realizes. The result is meant to be
/// frozen and used only as a source of syllable representations.
pub fn pretrain_perception_for_production(
    lexicons: &[Vec<Word>],
    inventory: InventoryKind,
    cfg: &crate::percept::PerceptionConfig,
    epochs: usize,
    seed: u64,
) -> Result<(PerceptionNet, Curve)> {
    let words: Vec<Word> = lexicons.iter().flatten().cloned().collect();
    let n_roots = words.iter().map(|w| w.root + 1).max().unwrap_or(0);
    let mut cats: Vec<usize> = words
        .iter()
        .flat_map(|w| w.inflections.keys().copied())
        .collect();
    cats.sort_unstable();
    cats.dedup();
    let mut net = PerceptionNet::build(n_roots, &cats, inventory, cfg, seed)?;
    let plan = PhasePlan {
        epochs,
        trained: cats.clone(),
        reported: cats,
        stop: None,
        seed: seed ^ 0x5eed,
    };
    let curve = crate::percept::train_perception(&mut net, &words, &[], &cfg.train, &plan)?;
    Ok((net, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langgen::{build_lexicon, MorphRule, TaskSpec, PREFIX_SET_1};
    use crate::percept::PerceptionConfig;

    fn task() -> TaskSpec {
        TaskSpec {
            inventory: InventoryKind::Small,
            roots: vec!["fetos".into(), "bun".into()],
            rules: vec![MorphRule::prefix(1, PREFIX_SET_1).unwrap()],
        }
    }

    fn small_perception() -> PerceptionConfig {
        PerceptionConfig {
            root_hidden: 8,
            inflection_hidden: 6,
            train: TrainConfig::default(),
        }
    }

    #[test]
    fn item_alignment() {
        let inv = SegmentInventory::small();
        let rep = vec![0.0; 4];
        let ok = ProductionItem::new("fifetos", vec![rep.clone(); 3], vec![2, 2, 3], &inv).unwrap();
        assert_eq!(ok.steps(), 7);
        assert!(ProductionItem::new("fifetos", vec![rep.clone(); 2], vec![2, 2, 3], &inv).is_err());
        assert!(ProductionItem::new("fifetos", vec![rep.clone(); 3], vec![2, 2, 2], &inv).is_err());
        assert!(ProductionItem::new("fafetos", vec![rep; 3], vec![2, 2, 3], &inv).is_err());
    }

    #[test]
    fn items_from_perception() {
        let words = build_lexicon(&task()).unwrap();
        let mut p =
            PerceptionNet::build(2, &[1], InventoryKind::Small, &small_perception(), 0).unwrap();
        let items = production_items(&mut p, &words).unwrap();
        assert_eq!(items[0].phones, "fifetos");
        assert_eq!(items[0].syllable_lengths, vec![2, 2, 3]);
        assert_eq!(items[0].reps.len(), 3);
        assert_eq!(items[0].reps[0].len(), p.rep_size());
    }

    #[test]
    fn step_count_matches_phones() {
        let words = build_lexicon(&task()).unwrap();
        let mut p =
            PerceptionNet::build(2, &[1], InventoryKind::Small, &small_perception(), 0).unwrap();
        let items = production_items(&mut p, &words).unwrap();
        let mut net = ProductionNet::build(
            p.rep_size(),
            InventoryKind::Small,
            &ProductionConfig::default(),
            1,
        )
        .unwrap();
        for it in &items {
            assert_eq!(net.produce(it).unwrap().len(), it.phones.len());
            let (_, steps) = net.train_item(it, &TrainConfig::default()).unwrap();
            assert_eq!(steps, it.phones.len());
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_isolated() {
        let words = build_lexicon(&task()).unwrap();
        let mut p =
            PerceptionNet::build(2, &[1], InventoryKind::Small, &small_perception(), 0).unwrap();
        let items = production_items(&mut p, &words).unwrap();
        let mut net = ProductionNet::build(
            p.rep_size(),
            InventoryKind::Small,
            &ProductionConfig::default(),
            2,
        )
        .unwrap();
        let a = net.evaluate(&items).unwrap();
        assert_eq!(a, net.evaluate(&items).unwrap());
        assert!((0.0..=1.0).contains(&a));
        let solo = net.produce(&items[2]).unwrap();
        net.produce(&items[0]).unwrap();
        assert_eq!(net.produce(&items[2]).unwrap(), solo);
    }

    #[test]
    fn single_word_memorized() {
        let words = build_lexicon(&task()).unwrap();
        let mut p =
            PerceptionNet::build(2, &[1], InventoryKind::Small, &small_perception(), 0).unwrap();
        let items = production_items(&mut p, &words[..1]).unwrap();
        let mut net = ProductionNet::build(
            p.rep_size(),
            InventoryKind::Small,
            &ProductionConfig::default(),
            3,
        )
        .unwrap();
        let stop = StopRule {
            label: PHONE_LABEL.into(),
            threshold: 1.0,
        };
        let cfg = TrainConfig::default();
        let curve = train_production(&mut net, &items, &items, &cfg, 300, Some(&stop), 0).unwrap();
        assert_eq!(curve.last().unwrap().test.get(PHONE_LABEL), Some(1.0));
        assert_eq!(net.evaluate(&items).unwrap(), 1.0);
    }

    #[test]
    fn wrong_rep_size_rejected() {
        let inv = SegmentInventory::small();
        let item = ProductionItem::new("bun", vec![vec![0.0; 3]], vec![3], &inv).unwrap();
        let mut net =
            ProductionNet::build(5, InventoryKind::Small, &ProductionConfig::default(), 0).unwrap();
        assert!(net.produce(&item).is_err());
    }

    #[test]
    fn pretraining_uses_every_word() {
        let words = build_lexicon(&task()).unwrap();
        let (mut p, curve) = pretrain_perception_for_production(
            std::slice::from_ref(&words),
            InventoryKind::Small,
            &small_perception(),
            5,
            0,
        )
        .unwrap();
        assert_eq!(curve.points.len(), 6);
        assert!(curve.points[0].test.0.is_empty());
        let before = p.network().save_weights();
        let reps = production_items(&mut p, &words).unwrap();
        assert_eq!(p.network().save_weights(), before);
        assert_eq!(production_items(&mut p, &words).unwrap(), reps);
    }
}
