//! Word perception: a phone sequence in, root and inflection identity out.
//!
//! The network has two recurrent hidden groups, both reading the phone input.
//! The root output group is wired only to the root hidden group and every
//! inflection output group only to the inflection hidden group. Morphemes are
//! localist: one output unit each.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curve::{Curve, CurvePoint, Scores, StopRule};
use crate::error::{Error, Result};
use crate::langgen::{syllable_spans, Word, MORPHEMES_PER_CATEGORY};
use crate::phonfeat::{boundary_vector, InventoryKind, SegmentInventory, FEATURE_COUNT};
use crate::srn::{Network, Source, Topology, TrainConfig};

pub const ROOT_LABEL: &str = "root";

pub fn category_label(category: usize) -> String {
    format!("inflection-{category}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionConfig {
    pub root_hidden: usize,
    pub inflection_hidden: usize,
    pub train: TrainConfig,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            root_hidden: 40,
            inflection_hidden: 20,
            train: TrainConfig::default(),
        }
    }
}

/// One training or evaluation item, already encoded.
#[derive(Debug, Clone)]
struct Encoded {
    inputs: Vec<[f64; FEATURE_COUNT]>,
    word: Word,
}

#[derive(Debug, Clone)]
pub struct PerceptionNet {
    net: Network,
    inventory: SegmentInventory,
    root_hidden: usize,
    inflection_hidden: usize,
    root_output: usize,
    /// `(category id, output group)`.
    categories: Vec<(usize, usize)>,
    init_range: (f64, f64),
}

impl PerceptionNet {
    pub fn build(
        n_roots: usize,
        categories: &[usize],
        inventory: InventoryKind,
        cfg: &PerceptionConfig,
        seed: u64,
    ) -> Result<Self> {
        if n_roots == 0 {
            return Err(Error::Config(
                "perception net needs at least one root".into(),
            ));
        }
        let mut sorted = categories.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != categories.len() {
            return Err(Error::Config("duplicate category id".into()));
        }
        let mut t = Topology::new(FEATURE_COUNT);
        let rh = t.add_hidden("root-hidden", cfg.root_hidden, true);
        let ih = t.add_hidden("inflection-hidden", cfg.inflection_hidden, true);
        t.connect(Source::Input, rh);
        t.connect(Source::Input, ih);
        let ro = t.add_output(ROOT_LABEL, n_roots);
        t.connect_output(rh, ro);
        let mut cats = Vec::with_capacity(categories.len());
        for &c in categories {
            let g = t.add_output(&category_label(c), MORPHEMES_PER_CATEGORY);
            t.connect_output(ih, g);
            cats.push((c, g));
        }
        let net = Network::build(t, cfg.train.init_range, seed)?;
        Ok(PerceptionNet {
            net,
            inventory: SegmentInventory::new(inventory),
            root_hidden: rh,
            inflection_hidden: ih,
            root_output: ro,
            categories: cats,
            init_range: cfg.train.init_range,
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

    pub fn n_roots(&self) -> usize {
        self.net.topology().outputs[self.root_output].size
    }

    pub fn categories(&self) -> Vec<usize> {
        self.categories.iter().map(|&(c, _)| c).collect()
    }

    pub fn root_hidden_group(&self) -> usize {
        self.root_hidden
    }

    pub fn inflection_hidden_group(&self) -> usize {
        self.inflection_hidden
    }

    pub fn root_output_group(&self) -> usize {
        self.root_output
    }

    pub fn category_group(&self, category: usize) -> Option<usize> {
        self.categories
            .iter()
            .find(|&&(c, _)| c == category)
            .map(|&(_, g)| g)
    }

    /// Size of a syllable representation: the whole hidden layer.
    pub fn rep_size(&self) -> usize {
        self.net.hidden_size()
    }

    fn encode(&self, word: &Word) -> Result<Encoded> {
        if word.root >= self.n_roots() {
            return Err(Error::Word(format!(
                "`{}` has root id {} but the net knows {} roots",
                word.phones,
                word.root,
                self.n_roots()
            )));
        }
        for (&c, &m) in &word.inflections {
            if m >= MORPHEMES_PER_CATEGORY {
                return Err(Error::Word(format!(
                    "`{}`: morpheme index {m}",
                    word.phones
                )));
            }
            if self.category_group(c).is_none() {
                return Err(Error::Word(format!(
                    "`{}`: unknown category {c}",
                    word.phones
                )));
            }
        }
        let inputs = word
            .phones
            .chars()
            .map(|c| self.inventory.encode(c).map(|f| f.to_f64()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Encoded {
            inputs,
            word: word.clone(),
        })
    }

    /// The constant target for a word and which output groups carry error:
    /// the root group and each of `trained` that the word realizes.
    pub fn target_for(&self, word: &Word, trained: &[usize]) -> (Vec<f64>, Vec<bool>) {
        let mut target = vec![0.0; self.net.output_size()];
        let mut active = vec![false; self.net.topology().outputs.len()];
        let r = self.net.output_range(self.root_output);
        target[r.start + word.root] = 1.0;
        active[self.root_output] = true;
        for &(c, g) in &self.categories {
            if let Some(&m) = word.inflections.get(&c) {
                target[self.net.output_range(g).start + m] = 1.0;
                active[g] = trained.contains(&c);
            }
        }
        (target, active)
    }

    fn train_encoded(
        &mut self,
        item: &Encoded,
        trained: &[usize],
        cfg: &TrainConfig,
        on_step: &mut dyn FnMut(&[f64], &[f64]),
    ) -> Result<(f64, usize)> {
        let (target, active) = self.target_for(&item.word, trained);
        let boundary = boundary_vector().to_f64();
        self.net.reset_context();
        let mut loss = 0.0;
        for x in item.inputs.iter().chain(std::iter::once(&boundary)) {
            self.net.forward(x)?;
            on_step(x, &target);
            loss += self.net.backward(&target, &active, cfg)?;
        }
        Ok((loss, item.inputs.len() + 1))
    }

    /// Trains on one word: each phone, then the boundary pattern, with a
    /// weight update after every step. `on_step` sees each (input, target).
    pub fn train_word_with(
        &mut self,
        word: &Word,
        trained: &[usize],
        cfg: &TrainConfig,
        on_step: &mut dyn FnMut(&[f64], &[f64]),
    ) -> Result<f64> {
        let item = self.encode(word)?;
        Ok(self.train_encoded(&item, trained, cfg, on_step)?.0)
    }

    fn respond_encoded(&mut self, item: &Encoded) -> Vec<f64> {
        self.net.reset_context();
        for x in &item.inputs {
            self.net.forward(x).expect("input size");
        }
        self.net
            .forward(&boundary_vector().to_f64())
            .expect("input size")
            .to_vec()
    }

    /// Output pattern after the word-final boundary.
    pub fn respond(&mut self, word: &Word) -> Result<Vec<f64>> {
        let item = self.encode(word)?;
        Ok(self.respond_encoded(&item))
    }

    /// Index of the one-hot pattern nearest to `group`'s output; ties go to
    /// the lowest index.
    pub fn nearest_morpheme(&self, output: &[f64], group: usize) -> usize {
        let ys = &output[self.net.output_range(group)];
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        let sq: f64 = ys.iter().map(|y| y * y).sum();
        for (k, &y) in ys.iter().enumerate() {
            // |y - e_k|^2
            let d = sq - 2.0 * y + 1.0;
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    fn labels(&self, categories: &[usize]) -> Vec<(String, Option<usize>, usize)> {
        let mut out = vec![(ROOT_LABEL.to_owned(), None, self.root_output)];
        for &c in categories {
            if let Some(g) = self.category_group(c) {
                out.push((category_label(c), Some(c), g));
            }
        }
        out
    }

    fn evaluate_encoded(&mut self, items: &[Encoded], categories: &[usize]) -> Scores {
        let labels = self.labels(categories);
        let mut correct = vec![0usize; labels.len()];
        let mut total = vec![0usize; labels.len()];
        for item in items {
            let out = self.respond_encoded(item);
            for (k, (_, cat, group)) in labels.iter().enumerate() {
                let truth = match cat {
                    None => Some(item.word.root),
                    Some(c) => item.word.inflections.get(c).copied(),
                };
                if let Some(truth) = truth {
                    total[k] += 1;
                    if self.nearest_morpheme(&out, *group) == truth {
                        correct[k] += 1;
                    }
                }
            }
        }
        Scores(
            labels
                .into_iter()
                .zip(correct.iter().zip(&total))
                .filter(|(_, (_, &t))| t > 0)
                .map(|((l, _, _), (&c, &t))| (l, c as f64 / t as f64))
                .collect(),
        )
    }

    /// Accuracy per category on `words`, judged after the boundary pattern.
    /// Reports the root and each of `categories` that occurs in `words`.
    pub fn evaluate(&mut self, words: &[Word], categories: &[usize]) -> Result<Scores> {
        let items = words
            .iter()
            .map(|w| self.encode(w))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.evaluate_encoded(&items, categories))
    }

    /// Mean per-step loss over `words` with frozen weights.
    pub fn loss(&mut self, words: &[Word], trained: &[usize]) -> Result<f64> {
        let boundary = boundary_vector().to_f64();
        let mut sum = 0.0;
        let mut steps = 0;
        for w in words {
            let item = self.encode(w)?;
            let (target, active) = self.target_for(w, trained);
            self.net.reset_context();
            for x in item.inputs.iter().chain(std::iter::once(&boundary)) {
                self.net.forward(x)?;
                let g = self.net.gradients(&target, &active)?;
                sum += g.loss;
                steps += 1;
            }
        }
        Ok(if steps == 0 { 0.0 } else { sum / steps as f64 })
    }

    /// Hidden-layer snapshot after the last phone of each syllable.
    pub fn syllable_reps(&mut self, word: &Word) -> Result<Vec<Vec<f64>>> {
        let item = self.encode(word)?;
        let spans = syllable_spans(word.phones.len(), &word.syllables);
        for span in &spans {
            let vowels = word.phones[span.clone()]
                .chars()
                .filter(|&c| self.inventory.is_vowel(c).unwrap_or(false))
                .count();
            if span.is_empty() || vowels != 1 {
                return Err(Error::Word(format!(
                    "`{}` lacks a valid syllabification",
                    word.phones
                )));
            }
        }
        self.net.reset_context();
        let mut reps = Vec::with_capacity(spans.len());
        let mut spans = spans.iter().peekable();
        for (i, x) in item.inputs.iter().enumerate() {
            self.net.forward(x)?;
            if spans.peek().is_some_and(|s| s.end == i + 1) {
                reps.push(self.net.hidden().to_vec());
                spans.next();
            }
        }
        Ok(reps)
    }

    /// Adds a fresh output group for `category` on the inflection hidden
    /// group and, when the next task brings new roots, `new_roots` fresh root
    /// units. Existing weights are kept as they are.
    pub fn extend_for_task2(&mut self, category: usize, new_roots: usize, seed: u64) -> Result<()> {
        if self.category_group(category).is_some() {
            return Err(Error::Config(format!(
                "category {category} already present"
            )));
        }
        let g = self.net.add_output_group(
            &category_label(category),
            MORPHEMES_PER_CATEGORY,
            self.inflection_hidden,
            self.init_range,
            seed,
        )?;
        self.categories.push((category, g));
        if new_roots > 0 {
            self.net.grow_output_group(
                self.root_output,
                new_roots,
                self.init_range,
                seed.wrapping_add(1),
            )?;
        }
        Ok(())
    }
}

/// Options for one perception training phase.
#[derive(Debug, Clone)]
pub struct PhasePlan {
    pub epochs: usize,
    /// Categories whose output groups receive error.
    pub trained: Vec<usize>,
    /// Categories reported in the curve.
    pub reported: Vec<usize>,
    pub stop: Option<StopRule>,
    pub seed: u64,
}

/// Online training over shuffled `train` for up to `plan.epochs` epochs,
/// evaluating train and test before training and every `eval_every` epochs.
pub fn train_perception(
    net: &mut PerceptionNet,
    train: &[Word],
    test: &[Word],
    cfg: &TrainConfig,
    plan: &PhasePlan,
) -> Result<Curve> {
    cfg.validate()?;
    let train_items = train
        .iter()
        .map(|w| net.encode(w))
        .collect::<Result<Vec<_>>>()?;
    let test_items = test
        .iter()
        .map(|w| net.encode(w))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut curve = Curve::default();
    let eval = |net: &mut PerceptionNet, epoch, loss| CurvePoint {
        epoch,
        train: net.evaluate_encoded(&train_items, &plan.reported),
        test: net.evaluate_encoded(&test_items, &plan.reported),
        train_loss: loss,
    };
    let first = eval(net, 0, None);
    let done = plan.stop.as_ref().is_some_and(|s| s.reached(&first));
    curve.points.push(first);
    if done {
        return Ok(curve);
    }
    net.net.reset_momentum();
    for epoch in 1..=plan.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut steps = 0;
        for &i in &order {
            let (l, n) = net.train_encoded(&train_items[i], &plan.trained, cfg, &mut |_, _| {})?;
            loss += l;
            steps += n;
        }
        if epoch % cfg.eval_every == 0 || epoch == plan.epochs {
            let point = eval(net, epoch, Some(loss / steps.max(1) as f64));
            let done = plan.stop.as_ref().is_some_and(|s| s.reached(&point));
            curve.points.push(point);
            if done {
                break;
            }
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langgen::{build_lexicon, MorphRule, TaskSpec, PREFIX_SET_1, SUFFIX_SET_1};

    fn small_cfg() -> PerceptionConfig {
        PerceptionConfig {
            root_hidden: 8,
            inflection_hidden: 6,
            train: TrainConfig::default(),
        }
    }

    fn toy_words() -> Vec<Word> {
        let task = TaskSpec {
            inventory: InventoryKind::Small,
            roots: vec!["fetos".into(), "bun".into()],
            rules: vec![MorphRule::suffix(1, SUFFIX_SET_1).unwrap()],
        };
        build_lexicon(&task).unwrap()
    }

    #[test]
    fn output_layout() {
        let net = PerceptionNet::build(
            24,
            &[1],
            InventoryKind::Small,
            &PerceptionConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(net.network().output_size(), 27);
        assert_eq!(net.rep_size(), 60);
        assert!(PerceptionNet::build(0, &[1], InventoryKind::Small, &small_cfg(), 0).is_err());
    }

    #[test]
    fn modular_wiring() {
        let net = PerceptionNet::build(5, &[1], InventoryKind::Small, &small_cfg(), 3).unwrap();
        let n = net.network();
        let rh = net.root_hidden_group();
        let ih = net.inflection_hidden_group();
        let cat = net.category_group(1).unwrap();
        assert!(n
            .output_block(ih, net.root_output_group())
            .iter()
            .all(|&w| w == 0.0));
        assert!(n.output_block(rh, cat).iter().all(|&w| w == 0.0));

        // clamping the root hidden group to zero leaves root outputs at the bias
        let mut h = vec![0.3; n.hidden_size()];
        n.hidden_range(rh).for_each(|i| h[i] = 0.0);
        let a = n.output_from_hidden(&h).unwrap();
        n.hidden_range(ih).for_each(|i| h[i] = 0.9);
        let b = n.output_from_hidden(&h).unwrap();
        let rr = n.output_range(net.root_output_group());
        assert_eq!(a[rr.clone()], b[rr.clone()]);
        for i in rr {
            assert_eq!(a[i], crate::srn::logistic(n.output_bias()[i]));
        }
    }

    #[test]
    fn constant_target_each_step() {
        let mut net = PerceptionNet::build(2, &[1], InventoryKind::Small, &small_cfg(), 1).unwrap();
        let w = &toy_words()[4];
        let (expected, _) = net.target_for(w, &[1]);
        let mut seen = Vec::new();
        net.train_word_with(w, &[1], &TrainConfig::default(), &mut |x, t| {
            seen.push((x.to_vec(), t.to_vec()))
        })
        .unwrap();
        assert_eq!(seen.len(), w.phones.len() + 1);
        assert!(seen.iter().all(|(_, t)| *t == expected));
        assert_eq!(seen.last().unwrap().0, boundary_vector().to_f64().to_vec());
    }

    #[test]
    fn unknown_ids_rejected() {
        let mut net = PerceptionNet::build(1, &[1], InventoryKind::Small, &small_cfg(), 1).unwrap();
        let words = toy_words();
        assert!(net.respond(&words[3]).is_err()); // root 1
        let mut w = words[0].clone();
        w.inflections.insert(7, 0);
        assert!(net.evaluate(&[w], &[1]).is_err());
    }

    #[test]
    fn perfect_outputs_score_one() {
        let net = PerceptionNet::build(2, &[1], InventoryKind::Small, &small_cfg(), 1).unwrap();
        for w in toy_words() {
            let (t, _) = net.target_for(&w, &[1]);
            assert_eq!(net.nearest_morpheme(&t, net.root_output_group()), w.root);
            assert_eq!(
                net.nearest_morpheme(&t, net.category_group(1).unwrap()),
                w.inflections[&1]
            );
        }
        // constant 0.5 output picks index 0
        let half = vec![0.5; net.network().output_size()];
        assert_eq!(
            net.nearest_morpheme(&half, net.category_group(1).unwrap()),
            0
        );
    }

    #[test]
    fn zero_net_scores_tie_baseline() {
        let mut net = PerceptionNet::build(2, &[1], InventoryKind::Small, &small_cfg(), 1).unwrap();
        net.network_mut().zero_weights();
        let words = toy_words();
        // every output is 0.5, so every word is labelled morpheme 0 / root 0
        let expect_cat = words.iter().filter(|w| w.inflections[&1] == 0).count() as f64 / 6.0;
        let expect_root = words.iter().filter(|w| w.root == 0).count() as f64 / 6.0;
        let s = net.evaluate(&words, &[1]).unwrap();
        assert_eq!(s.get("inflection-1"), Some(expect_cat));
        assert_eq!(s.get(ROOT_LABEL), Some(expect_root));
        assert_eq!(net.evaluate(&words, &[1]).unwrap(), s);
    }

    #[test]
    fn toy_loss_non_increasing() {
        let words = toy_words();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            momentum: 0.0,
            ..TrainConfig::default()
        };
        let mut net = PerceptionNet::build(2, &[1], InventoryKind::Small, &small_cfg(), 4).unwrap();
        let toy = &words[..4];
        let mut prev = net.loss(toy, &[1]).unwrap();
        for _ in 0..30 {
            for w in toy {
                net.train_word_with(w, &[1], &cfg, &mut |_, _| {}).unwrap();
            }
            let l = net.loss(toy, &[1]).unwrap();
            assert!(l <= prev + 1e-12, "{l} > {prev}");
            prev = l;
        }
    }

    #[test]
    fn syllable_reps_follow_boundaries() {
        // `a` is only in the large inventory
        let task = TaskSpec {
            inventory: InventoryKind::Large,
            roots: vec!["fetos".into(), "fanos".into()],
            rules: vec![MorphRule::prefix(1, PREFIX_SET_1).unwrap()],
        };
        let words = build_lexicon(&task).unwrap();
        let mut net = PerceptionNet::build(2, &[1], InventoryKind::Large, &small_cfg(), 6).unwrap();
        let fifetos = &words[0];
        let fifanos = &words[3];
        assert_eq!(
            (fifetos.phones.as_str(), fifanos.phones.as_str()),
            ("fifetos", "fifanos")
        );
        let a = net.syllable_reps(fifetos).unwrap();
        let b = net.syllable_reps(fifanos).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0], b[0]);
        assert_ne!(a[1], b[1]);
        assert_eq!(net.syllable_reps(fifetos).unwrap(), a);

        let mut broken = fifetos.clone();
        broken.syllables.clear();
        assert!(net.syllable_reps(&broken).is_err());
    }

    #[test]
    fn extension_keeps_weights() {
        let mut net = PerceptionNet::build(3, &[1], InventoryKind::Small, &small_cfg(), 2).unwrap();
        let before_hidden = net.network().hidden_weights().to_vec();
        let ih = net.inflection_hidden_group();
        let old_cat = net
            .network()
            .output_block(ih, net.category_group(1).unwrap());
        net.extend_for_task2(2, 4, 77).unwrap();
        assert_eq!(net.network().hidden_weights(), &before_hidden[..]);
        assert_eq!(
            net.network()
                .output_block(ih, net.category_group(1).unwrap()),
            old_cat
        );
        assert_eq!(net.n_roots(), 7);
        let g2 = net.category_group(2).unwrap();
        assert!(net
            .network()
            .output_block(net.root_hidden_group(), g2)
            .iter()
            .all(|&w| w == 0.0));
        assert!(net.extend_for_task2(2, 0, 1).is_err());
    }

    #[test]
    fn phase_masks_old_group() {
        let mut net = PerceptionNet::build(2, &[1], InventoryKind::Small, &small_cfg(), 2).unwrap();
        net.extend_for_task2(2, 0, 5).unwrap();
        let ih = net.inflection_hidden_group();
        let g1 = net.category_group(1).unwrap();
        let before = net.network().output_block(ih, g1);
        let task = TaskSpec {
            inventory: InventoryKind::Small,
            roots: vec!["fetos".into(), "bun".into()],
            rules: vec![
                MorphRule::suffix(1, SUFFIX_SET_1).unwrap(),
                MorphRule::suffix(2, crate::langgen::SUFFIX_SET_2).unwrap(),
            ],
        };
        let words = build_lexicon(&task).unwrap();
        let plan = PhasePlan {
            epochs: 3,
            trained: vec![2],
            reported: vec![2],
            stop: None,
            seed: 0,
        };
        let curve =
            train_perception(&mut net, &words, &words, &TrainConfig::default(), &plan).unwrap();
        assert_eq!(net.network().output_block(ih, g1), before);
        assert_eq!(curve.points.len(), 4);
        assert!(curve.points[0].test.get("inflection-1").is_none());
    }

    #[test]
    fn stop_rule_ends_phase() {
        let words = toy_words();
        let mut net = PerceptionNet::build(2, &[1], InventoryKind::Small, &small_cfg(), 9).unwrap();
        let plan = PhasePlan {
            epochs: 500,
            trained: vec![1],
            reported: vec![1],
            stop: Some(StopRule {
                label: "inflection-1".into(),
                threshold: 1.0,
            }),
            seed: 1,
        };
        let curve =
            train_perception(&mut net, &words, &words, &TrainConfig::default(), &plan).unwrap();
        let last = curve.last().unwrap();
        assert!(last.epoch < 500, "never reached ceiling");
        assert_eq!(last.test.get("inflection-1"), Some(1.0));
    }
}
