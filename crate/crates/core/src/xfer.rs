//! Transfer experiments.
//!
//! Every condition trains a network on a first morphological task, then on a
//! second one that adds a new inflectional category, and records the learning
//! curves of both phases. Experiments 1-3 and 5 use perception; experiment 4
//! uses syllable-to-phone production.
//!
//! Runs are paired across conditions: for a given seed, every condition of an
//! experiment sees the same roots, the same split of any shared task and the
//! same initial weights, so a phase-1 network trained on the same first task
//! is identical across conditions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curve::{Curve, Split, StopRule};
use crate::error::{Error, Result};
use crate::langgen::{
    build_lexicon, generate_roots, split_lexicon, MorphRule, RootShape, TaskSpec, Word,
    FIXED_HARMONY_CONTROL, HARMONY_SET_1, HARMONY_SET_2, PREFIX_SET_1, PREFIX_SET_2, SUFFIX_SET_1,
    SUFFIX_SET_2, TEMPLATE_SET_1, TEMPLATE_SET_2, TEMPLATE_SUFFIX_SET_1, TEMPLATE_SUFFIX_SET_2,
};
use crate::percept::{
    category_label, train_perception, PerceptionConfig, PerceptionNet, PhasePlan,
};
use crate::phonfeat::{InventoryKind, SegmentInventory};
use crate::produce::{
    pretrain_perception_for_production, production_items, train_production, ProductionConfig,
    ProductionNet, PHONE_LABEL,
};

pub const EXPERIMENTS: std::ops::RangeInclusive<u8> = 1..=5;
pub const CSV_HEADER: &str = "experiment,condition,phase,seed,epoch,category,split,accuracy";
pub const SUMMARY_HEADER: &str = "experiment,condition,category,split,epoch,n,mean,stderr";
pub const ORDERINGS_HEADER: &str = "experiment,ordering,epoch,means,holds,sign_p";

/// Learning rate used by the experiments. The library default of 0.1 with
/// momentum 0.9 makes end-of-epoch accuracy swing by whole morpheme classes.
pub const EXPERIMENT_LEARNING_RATE: f64 = 0.05;

/// Category id of the first task's inflection.
pub const TASK1_CATEGORY: usize = 1;
/// Category id of the inflection added by the second task.
pub const TASK2_CATEGORY: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Perception,
    Production,
}

/// Which list of roots a task draws from. Lists are regenerated per seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RootPool {
    /// 12 CVCVC + 12 CVC roots over the small inventory.
    Affix,
    /// Two disjoint sets of 45 CVC/CVCV/CVCVC roots over the large inventory.
    Suffix { second: bool },
    /// Two disjoint sets of 45 CCC roots over the large inventory.
    Template { second: bool },
    /// 42 CVC/CVCVC stems whose vowels agree in backness.
    Harmony,
}

impl RootPool {
    pub fn inventory(&self) -> InventoryKind {
        match self {
            RootPool::Affix => InventoryKind::Small,
            _ => InventoryKind::Large,
        }
    }

    pub fn roots(&self, seed: u64) -> Result<Vec<String>> {
        let shapes = |s: &[&str]| {
            s.iter()
                .map(|x| x.parse())
                .collect::<Result<Vec<RootShape>>>()
        };
        let inv = SegmentInventory::new(self.inventory());
        match *self {
            RootPool::Affix => {
                let mut rng = rng_for(seed, "roots:affix");
                let mut roots = generate_roots(&shapes(&["CVCVC"])?, 12, &inv, false, &mut rng)?;
                roots.extend(generate_roots(
                    &shapes(&["CVC"])?,
                    12,
                    &inv,
                    false,
                    &mut rng,
                )?);
                Ok(roots)
            }
            RootPool::Suffix { second } => {
                let mut rng = rng_for(seed, "roots:suffix");
                let all = generate_roots(
                    &shapes(&["CVC", "CVCV", "CVCVC"])?,
                    90,
                    &inv,
                    false,
                    &mut rng,
                )?;
                Ok(half(all, second))
            }
            RootPool::Template { second } => {
                let mut rng = rng_for(seed, "roots:template");
                let all = generate_roots(&shapes(&["CCC"])?, 90, &inv, false, &mut rng)?;
                Ok(half(all, second))
            }
            RootPool::Harmony => {
                let mut rng = rng_for(seed, "roots:harmony");
                generate_roots(&shapes(&["CVC", "CVCVC"])?, 42, &inv, true, &mut rng)
            }
        }
    }
}

fn half(mut all: Vec<String>, second: bool) -> Vec<String> {
    let rest = all.split_off(all.len() / 2);
    if second {
        rest
    } else {
        all
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecipe {
    pub pool: RootPool,
    pub rules: Vec<MorphRule>,
}

impl TaskRecipe {
    pub fn instantiate(&self, seed: u64) -> Result<TaskSpec> {
        Ok(TaskSpec {
            inventory: self.pool.inventory(),
            roots: self.pool.roots(seed)?,
            rules: self.rules.clone(),
        })
    }

    /// Stable identity used to pair identical tasks across conditions.
    pub fn key(&self) -> String {
        format!("{:?}|{:?}", self.pool, self.rules)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSpec {
    pub experiment: u8,
    /// Letter or number the condition carries in the experiment's table.
    pub label: String,
    pub name: String,
    pub phase1: TaskRecipe,
    pub phase2: TaskRecipe,
    pub modality: Modality,
}

impl ConditionSpec {
    /// Label reported for the second task's learning curve.
    pub fn phase2_category(&self) -> String {
        match self.modality {
            Modality::Perception => category_label(TASK2_CATEGORY),
            Modality::Production => PHONE_LABEL.to_owned(),
        }
    }
}

fn prefix(cat: usize, set: [&str; 3]) -> MorphRule {
    MorphRule::prefix(cat, set).expect("valid prefix set")
}

fn suffix(cat: usize, set: [&str; 3]) -> MorphRule {
    MorphRule::suffix(cat, set).expect("valid suffix set")
}

fn template(cat: usize, set: [&str; 3]) -> MorphRule {
    MorphRule::template(cat, set).expect("valid template set")
}

fn harmony(cat: usize, set: [(&str, &str); 3]) -> MorphRule {
    MorphRule::harmony_suffix(cat, set, &SegmentInventory::large()).expect("valid harmony set")
}

fn cond(
    experiment: u8,
    label: &str,
    name: &str,
    phase1: (RootPool, Vec<MorphRule>),
    phase2: (RootPool, Vec<MorphRule>),
    modality: Modality,
) -> ConditionSpec {
    ConditionSpec {
        experiment,
        label: label.to_owned(),
        name: name.to_owned(),
        phase1: TaskRecipe {
            pool: phase1.0,
            rules: phase1.1,
        },
        phase2: TaskRecipe {
            pool: phase2.0,
            rules: phase2.1,
        },
        modality,
    }
}

/// The condition table of an experiment, in table order.
pub fn conditions(experiment: u8) -> Result<Vec<ConditionSpec>> {
    use Modality::*;
    use RootPool::*;
    let (t1, t2) = (TASK1_CATEGORY, TASK2_CATEGORY);
    let affix_conditions = |exp: u8, table: &[AffixRow], m| {
        table
            .iter()
            .map(|&(label, p1_prefix, set1, p2_prefix, set2)| {
                let r1 = if p1_prefix {
                    prefix(t1, set1)
                } else {
                    suffix(t1, set1)
                };
                let r2 = if p2_prefix {
                    prefix(t2, set2)
                } else {
                    suffix(t2, set2)
                };
                let name = format!(
                    "{}->{}",
                    set_name(p1_prefix, set1),
                    set_name(p2_prefix, set2)
                );
                cond(exp, label, &name, (Affix, vec![r1]), (Affix, vec![r2]), m)
            })
            .collect::<Vec<_>>()
    };
    Ok(match experiment {
        1 => affix_conditions(
            1,
            &[
                ("a", true, PREFIX_SET_1, false, SUFFIX_SET_1),
                ("b", false, SUFFIX_SET_1, true, PREFIX_SET_1),
                ("c", true, PREFIX_SET_1, true, PREFIX_SET_2),
                ("d", true, PREFIX_SET_1, true, PREFIX_SET_1),
                ("e", false, SUFFIX_SET_1, false, SUFFIX_SET_2),
                ("f", false, SUFFIX_SET_1, false, SUFFIX_SET_1),
            ],
            Perception,
        ),
        2 => vec![
            cond(
                2,
                "a",
                "prefix1->prefix1+suffix1",
                (Affix, vec![prefix(t1, PREFIX_SET_1)]),
                (
                    Affix,
                    vec![prefix(t1, PREFIX_SET_1), suffix(t2, SUFFIX_SET_1)],
                ),
                Perception,
            ),
            cond(
                2,
                "b",
                "suffix1->suffix1+suffix2",
                (Affix, vec![suffix(t1, SUFFIX_SET_1)]),
                (
                    Affix,
                    vec![suffix(t1, SUFFIX_SET_1), suffix(t2, SUFFIX_SET_2)],
                ),
                Perception,
            ),
        ],
        3 => {
            let suf1 = || {
                (
                    Suffix { second: false },
                    vec![suffix(t1, TEMPLATE_SUFFIX_SET_1)],
                )
            };
            let tpl1 = || {
                (
                    Template { second: false },
                    vec![template(t1, TEMPLATE_SET_1)],
                )
            };
            let suf2 = || {
                (
                    Suffix { second: true },
                    vec![suffix(t2, TEMPLATE_SUFFIX_SET_2)],
                )
            };
            let tpl2 = || {
                (
                    Template { second: true },
                    vec![template(t2, TEMPLATE_SET_2)],
                )
            };
            vec![
                cond(3, "1", "suffix->template", suf1(), tpl2(), Perception),
                cond(3, "2", "template->template", tpl1(), tpl2(), Perception),
                cond(3, "3", "suffix->suffix", suf1(), suf2(), Perception),
                cond(3, "4", "template->suffix", tpl1(), suf2(), Perception),
            ]
        }
        4 => affix_conditions(
            4,
            &[
                ("a", true, PREFIX_SET_1, false, SUFFIX_SET_2),
                ("b", false, SUFFIX_SET_1, true, PREFIX_SET_2),
                ("c", true, PREFIX_SET_1, true, PREFIX_SET_2),
                ("d", false, SUFFIX_SET_1, false, SUFFIX_SET_2),
            ],
            Production,
        ),
        5 => vec![
            cond(
                5,
                "a",
                "harmony->harmony",
                (Harmony, vec![harmony(t1, HARMONY_SET_1)]),
                (Harmony, vec![harmony(t2, HARMONY_SET_2)]),
                Perception,
            ),
            cond(
                5,
                "b",
                "fixed->harmony",
                (Harmony, vec![suffix(t1, FIXED_HARMONY_CONTROL)]),
                (Harmony, vec![harmony(t2, HARMONY_SET_2)]),
                Perception,
            ),
        ],
        other => {
            return Err(Error::Config(format!(
                "unknown experiment {other}; valid experiments are 1..5"
            )))
        }
    })
}

/// Label, first task is prefix, its set, second task is prefix, its set.
type AffixRow<'a> = (&'a str, bool, [&'a str; 3], bool, [&'a str; 3]);

fn set_name(is_prefix: bool, set: [&str; 3]) -> String {
    let n = if set == PREFIX_SET_1 || set == SUFFIX_SET_1 {
        1
    } else {
        2
    };
    format!("{}{n}", if is_prefix { "prefix" } else { "suffix" })
}

/// Expected orderings (best first) of the phase-2 curves, by condition label.
pub fn predicted_orderings(experiment: u8) -> Vec<Vec<&'static str>> {
    match experiment {
        1 => vec![vec!["d", "c", "b"], vec!["f", "e", "a"]],
        2 => vec![vec!["b", "a"]],
        3 => vec![vec!["3", "4"], vec!["2", "1"]],
        4 => vec![vec!["d", "a"], vec!["c", "b"]],
        5 => vec![vec!["a", "b"]],
        _ => vec![],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub perception: PerceptionConfig,
    pub production: ProductionConfig,
    /// Phase-1 epoch cap.
    pub epochs1: usize,
    /// Phase-2 epoch budget.
    pub epochs2: usize,
    /// Epochs of perception pretraining before production runs.
    pub pretrain_epochs: usize,
    /// Phase 1 ends early once its test accuracy reaches this.
    pub phase1_threshold: f64,
    /// Checkpoints as fractions of the phase-2 budget.
    pub checkpoints: [f64; 3],
}

impl ExperimentConfig {
    /// Calibrated settings. All experiments currently share them; the
    /// experiment id is kept so budgets can diverge per experiment.
    pub fn for_experiment(_experiment: u8) -> Self {
        let mut perception = PerceptionConfig::default();
        perception.train.learning_rate = EXPERIMENT_LEARNING_RATE;
        let mut production = ProductionConfig::default();
        production.train.learning_rate = EXPERIMENT_LEARNING_RATE;
        ExperimentConfig {
            perception,
            production,
            epochs1: 150,
            epochs2: 16,
            pretrain_epochs: 60,
            phase1_threshold: 0.9,
            checkpoints: [0.25, 0.5, 0.75],
        }
    }

    pub fn checkpoint_epochs(&self) -> Vec<usize> {
        self.checkpoints
            .iter()
            .map(|f| ((f * self.epochs2 as f64).round() as usize).clamp(1, self.epochs2))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.perception.train.validate()?;
        self.production.train.validate()?;
        if self.epochs1 == 0 || self.epochs2 == 0 {
            return Err(Error::Config(
                "phase epoch budgets must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: u8,
    pub condition: String,
    pub label: String,
    pub seed: u64,
    pub modality: Modality,
    pub phase1: Curve,
    pub phase2: Curve,
}

impl RunRecord {
    pub fn phase(&self, phase: u8) -> &Curve {
        if phase == 1 {
            &self.phase1
        } else {
            &self.phase2
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives an independent stream seed from a run seed and a purpose tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut z = seed ^ fnv1a(tag);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag))
}

struct TaskData {
    root_count: usize,
    train: Vec<Word>,
    test: Vec<Word>,
    all: Vec<Word>,
}

fn prepare_task(recipe: &TaskRecipe, seed: u64, root_offset: usize) -> Result<TaskData> {
    let spec = recipe.instantiate(seed)?;
    let mut all = build_lexicon(&spec)?;
    for w in &mut all {
        w.root += root_offset;
    }
    let (train, test) =
        split_lexicon(&all, &mut rng_for(seed, &format!("split:{}", recipe.key())))?;
    Ok(TaskData {
        root_count: spec.roots.len(),
        train,
        test,
        all,
    })
}

/// The train and test words a run with `seed` uses for `recipe`, with root
/// ids starting at 0.
pub fn task_words(recipe: &TaskRecipe, seed: u64) -> Result<(Vec<Word>, Vec<Word>)> {
    let t = prepare_task(recipe, seed, 0)?;
    Ok((t.train, t.test))
}

/// Cache of trained phase-1 perception nets, keyed by first task and seed.
#[derive(Default)]
pub struct Phase1Cache(HashMap<(String, u64), (PerceptionNet, Curve)>);

pub fn run_condition(cond: &ConditionSpec, seed: u64, cfg: &ExperimentConfig) -> Result<RunRecord> {
    run_condition_cached(cond, seed, cfg, &mut Phase1Cache::default())
}

pub fn run_condition_cached(
    cond: &ConditionSpec,
    seed: u64,
    cfg: &ExperimentConfig,
    cache: &mut Phase1Cache,
) -> Result<RunRecord> {
    cfg.validate()?;
    let result = match cond.modality {
        Modality::Perception => run_perception(cond, seed, cfg, cache),
        Modality::Production => run_production(cond, seed, cfg),
    };
    let (phase1, phase2) = result.map_err(|e| Error::Run {
        context: format!(
            "experiment {} condition {} seed {seed}",
            cond.experiment, cond.name
        ),
        source: Box::new(e),
    })?;
    Ok(RunRecord {
        experiment: cond.experiment,
        condition: cond.name.clone(),
        label: cond.label.clone(),
        seed,
        modality: cond.modality,
        phase1,
        phase2,
    })
}

fn run_perception(
    cond: &ConditionSpec,
    seed: u64,
    cfg: &ExperimentConfig,
    cache: &mut Phase1Cache,
) -> Result<(Curve, Curve)> {
    let inventory = cond.phase1.pool.inventory();
    if cond.phase2.pool.inventory() != inventory {
        return Err(Error::Config("both tasks must share an inventory".into()));
    }
    let task1 = prepare_task(&cond.phase1, seed, 0)?;
    let key = (cond.phase1.key(), seed);
    let (mut net, curve1) = match cache.0.get(&key) {
        Some(hit) => hit.clone(),
        None => {
            let mut net = PerceptionNet::build(
                task1.root_count,
                &[TASK1_CATEGORY],
                inventory,
                &cfg.perception,
                derive_seed(seed, "init"),
            )?;
            let plan = PhasePlan {
                epochs: cfg.epochs1,
                trained: vec![TASK1_CATEGORY],
                reported: vec![TASK1_CATEGORY],
                stop: Some(StopRule {
                    label: category_label(TASK1_CATEGORY),
                    threshold: cfg.phase1_threshold,
                }),
                seed: derive_seed(seed, "phase1"),
            };
            let curve = train_perception(
                &mut net,
                &task1.train,
                &task1.test,
                &cfg.perception.train,
                &plan,
            )?;
            cache.0.insert(key, (net.clone(), curve.clone()));
            (net, curve)
        }
    };

    let new_roots = cond.phase2.pool != cond.phase1.pool;
    let offset = if new_roots { task1.root_count } else { 0 };
    let task2 = prepare_task(&cond.phase2, seed, offset)?;
    net.extend_for_task2(
        TASK2_CATEGORY,
        if new_roots { task2.root_count } else { 0 },
        derive_seed(seed, "extend"),
    )?;
    let plan = PhasePlan {
        epochs: cfg.epochs2,
        trained: vec![TASK2_CATEGORY],
        reported: vec![TASK2_CATEGORY],
        stop: None,
        seed: derive_seed(seed, "phase2"),
    };
    let curve2 = train_perception(
        &mut net,
        &task2.train,
        &task2.test,
        &cfg.perception.train,
        &plan,
    )?;
    Ok((curve1, curve2))
}

fn run_production(
    cond: &ConditionSpec,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<(Curve, Curve)> {
    let inventory = cond.phase1.pool.inventory();
    if cond.phase2.pool != cond.phase1.pool {
        return Err(Error::Config(
            "production conditions share one root set".into(),
        ));
    }
    let task1 = prepare_task(&cond.phase1, seed, 0)?;
    let task2 = prepare_task(&cond.phase2, seed, 0)?;
    let (mut perception, _) = pretrain_perception_for_production(
        &[task1.all.clone(), task2.all.clone()],
        inventory,
        &cfg.perception,
        cfg.pretrain_epochs,
        derive_seed(seed, "pretrain"),
    )?;
    let train1 = production_items(&mut perception, &task1.train)?;
    let test1 = production_items(&mut perception, &task1.test)?;
    let train2 = production_items(&mut perception, &task2.train)?;
    let test2 = production_items(&mut perception, &task2.test)?;

    let mut net = ProductionNet::build(
        perception.rep_size(),
        inventory,
        &cfg.production,
        derive_seed(seed, "production-init"),
    )?;
    let stop = StopRule {
        label: PHONE_LABEL.to_owned(),
        threshold: cfg.phase1_threshold,
    };
    let tc = &cfg.production.train;
    let curve1 = train_production(
        &mut net,
        &train1,
        &test1,
        tc,
        cfg.epochs1,
        Some(&stop),
        derive_seed(seed, "phase1"),
    )?;
    let curve2 = train_production(
        &mut net,
        &train2,
        &test2,
        tc,
        cfg.epochs2,
        None,
        derive_seed(seed, "phase2"),
    )?;
    Ok((curve1, curve2))
}

/// Runs every condition for every seed. Seeds are spread over `jobs` worker
/// threads; the result is ordered by condition, then by position in `seeds`,
/// whatever the number of workers.
pub fn run_experiment(
    experiment: u8,
    seeds: &[u64],
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<RunRecord>> {
    run_conditions(&conditions(experiment)?, seeds, cfg, jobs)
}

pub fn run_conditions(
    conds: &[ConditionSpec],
    seeds: &[u64],
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let per_seed = |seed: u64| -> Result<Vec<RunRecord>> {
        let mut cache = Phase1Cache::default();
        conds
            .iter()
            .map(|c| run_condition_cached(c, seed, cfg, &mut cache))
            .collect()
    };
    let by_seed: Vec<Option<Result<Vec<RunRecord>>>> = if jobs <= 1 || seeds.len() <= 1 {
        seeds.iter().map(|&s| Some(per_seed(s))).collect()
    } else {
        let slots = Mutex::new((0..seeds.len()).map(|_| None).collect::<Vec<_>>());
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(seeds.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= seeds.len() {
                        break;
                    }
                    let r = per_seed(seeds[i]);
                    slots.lock().expect("result lock")[i] = Some(r);
                });
            }
        });
        slots.into_inner().expect("result lock")
    };
    let mut columns = Vec::with_capacity(seeds.len());
    for r in by_seed {
        columns.push(r.expect("every seed ran")?);
    }
    let mut records = Vec::with_capacity(conds.len() * seeds.len());
    for c in 0..conds.len() {
        for col in &columns {
            records.push(col[c].clone());
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionStat {
    pub condition: String,
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTest {
    pub better: String,
    pub worse: String,
    /// Seeds where `better` scored higher.
    pub wins: usize,
    pub losses: usize,
    /// One-sided sign-test p-value for `better > worse`; ties are dropped.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStats {
    pub epoch: usize,
    pub conditions: Vec<ConditionStat>,
    pub pairs: Vec<PairTest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingVerdict {
    /// Condition labels, best first.
    pub chain: Vec<String>,
    pub epoch: usize,
    pub means: Vec<f64>,
    /// Every mean strictly above the next.
    pub holds: bool,
    /// Sign-test p-value for first over last.
    pub p_top_bottom: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub experiment: u8,
    pub category: String,
    pub split: Split,
    pub checkpoints: Vec<CheckpointStats>,
    pub orderings: Vec<OrderingVerdict>,
}

impl ComparisonResult {
    pub fn stat(&self, epoch: usize, label: &str) -> Option<&ConditionStat> {
        self.checkpoints
            .iter()
            .find(|c| c.epoch == epoch)?
            .conditions
            .iter()
            .find(|s| s.label == label)
    }

    pub fn pair(&self, epoch: usize, better: &str, worse: &str) -> Option<&PairTest> {
        let cp = self.checkpoints.iter().find(|c| c.epoch == epoch)?;
        let name = |l: &str| {
            cp.conditions
                .iter()
                .find(|s| s.label == l)
                .map(|s| s.condition.clone())
        };
        let (b, w) = (name(better)?, name(worse)?);
        cp.pairs.iter().find(|p| p.better == b && p.worse == w)
    }
}

/// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut coef = 1.0f64; // C(n, 0)
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += coef;
        }
        coef = coef * (n - k) as f64 / (k + 1) as f64;
    }
    (tail / 2f64.powi(n as i32)).min(1.0)
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Groups records by condition in first-appearance order, checking that all
/// conditions were run with the same seeds.
fn group_by_condition(records: &[RunRecord]) -> Result<Vec<(&str, &str, Vec<&RunRecord>)>> {
    let mut groups: Vec<(&str, &str, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|g| g.0 == r.condition) {
            Some(g) => g.2.push(r),
            None => groups.push((&r.condition, &r.label, vec![r])),
        }
    }
    if groups.is_empty() {
        return Err(Error::Config("no records to compare".into()));
    }
    let seeds = |g: &Vec<&RunRecord>| {
        let mut s: Vec<u64> = g.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s
    };
    let first = seeds(&groups[0].2);
    for g in &groups[1..] {
        if seeds(&g.2) != first {
            return Err(Error::Config(format!(
                "conditions `{}` and `{}` were run with different seeds",
                groups[0].0, g.0
            )));
        }
    }
    for g in &mut groups {
        g.2.sort_by_key(|r| r.seed);
    }
    Ok(groups)
}

/// Per-seed phase-2 values of `category`/`split` at `epoch`.
fn values_at(group: &[&RunRecord], epoch: usize, category: &str, split: Split) -> Result<Vec<f64>> {
    group
        .iter()
        .map(|r| {
            r.phase2
                .at_epoch(epoch)
                .and_then(|p| p.scores(split).get(category))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "{} seed {} has no {category}/{split} value at epoch {epoch}",
                        r.condition, r.seed
                    ))
                })
        })
        .collect()
}

/// Means, standard errors and sign tests of the phase-2 `category` accuracy at
/// each checkpoint epoch, plus verdicts for the predicted orderings.
pub fn compare_conditions(
    records: &[RunRecord],
    checkpoints: &[usize],
    category: &str,
    split: Split,
) -> Result<ComparisonResult> {
    let groups = group_by_condition(records)?;
    if groups.len() < 2 {
        return Err(Error::Config(
            "need at least two conditions to compare".into(),
        ));
    }
    let experiment = records[0].experiment;
    let mut cps = Vec::with_capacity(checkpoints.len());
    let mut orderings = Vec::new();
    for &epoch in checkpoints {
        let values = groups
            .iter()
            .map(|g| values_at(&g.2, epoch, category, split))
            .collect::<Result<Vec<_>>>()?;
        let conditions = groups
            .iter()
            .zip(&values)
            .map(|(g, v)| {
                let (mean, stderr) = mean_stderr(v);
                ConditionStat {
                    condition: g.0.to_owned(),
                    label: g.1.to_owned(),
                    n: v.len(),
                    mean,
                    stderr,
                }
            })
            .collect::<Vec<_>>();
        let mut pairs = Vec::new();
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i == j {
                    continue;
                }
                let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
                let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
                pairs.push(PairTest {
                    better: groups[i].0.to_owned(),
                    worse: groups[j].0.to_owned(),
                    wins,
                    losses,
                    p: sign_test(wins, losses),
                });
            }
        }
        let cp = CheckpointStats {
            epoch,
            conditions,
            pairs,
        };
        for chain in predicted_orderings(experiment) {
            let means: Option<Vec<f64>> = chain
                .iter()
                .map(|l| cp.conditions.iter().find(|s| s.label == *l).map(|s| s.mean))
                .collect();
            let Some(means) = means else { continue };
            let holds = means.windows(2).all(|w| w[0] > w[1]);
            let p = {
                let find = |l: &str| {
                    cp.conditions
                        .iter()
                        .position(|s| s.label == l)
                        .expect("label")
                };
                let (t, b) = (find(chain[0]), find(chain[chain.len() - 1]));
                cp.pairs
                    .iter()
                    .find(|p| p.better == groups[t].0 && p.worse == groups[b].0)
                    .map_or(1.0, |p| p.p)
            };
            orderings.push(OrderingVerdict {
                chain: chain.iter().map(|s| s.to_string()).collect(),
                epoch,
                means,
                holds,
                p_top_bottom: p,
            });
        }
        cps.push(cp);
    }
    Ok(ComparisonResult {
        experiment,
        category: category.to_owned(),
        split,
        checkpoints: cps,
        orderings,
    })
}

/// Mean phase-`phase` curve of one condition (by label) across its seeds.
pub fn mean_curve(
    records: &[RunRecord],
    label: &str,
    phase: u8,
    category: &str,
    split: Split,
) -> Vec<(usize, f64)> {
    let runs: Vec<&RunRecord> = records.iter().filter(|r| r.label == label).collect();
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .phase(phase)
        .points
        .iter()
        .filter_map(|p| {
            let vals: Option<Vec<f64>> = runs
                .iter()
                .map(|r| {
                    r.phase(phase)
                        .at_epoch(p.epoch)?
                        .scores(split)
                        .get(category)
                })
                .collect();
            vals.map(|v| (p.epoch, v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect()
}

/// Curve rows in `CSV_HEADER` order, header included.
pub fn curves_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        for phase in [1u8, 2] {
            for p in &r.phase(phase).points {
                let labels: Vec<&String> =
                    p.train.0.iter().chain(&p.test.0).map(|(l, _)| l).collect();
                let mut seen: Vec<&String> = Vec::new();
                for l in labels {
                    if seen.contains(&l) {
                        continue;
                    }
                    seen.push(l);
                    for split in [Split::Train, Split::Test] {
                        if let Some(a) = p.scores(split).get(l) {
                            let _ = writeln!(
                                out,
                                "{},{},{},{},{},{},{},{}",
                                r.experiment, r.condition, phase, r.seed, p.epoch, l, split, a
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn summary_csv(comparisons: &[ComparisonResult]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for c in comparisons {
        for cp in &c.checkpoints {
            for s in &cp.conditions {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    c.experiment, s.condition, c.category, c.split, cp.epoch, s.n, s.mean, s.stderr
                );
            }
        }
    }
    out
}

pub fn orderings_csv(comparisons: &[ComparisonResult]) -> String {
    let mut out = String::from(ORDERINGS_HEADER);
    out.push('\n');
    for c in comparisons {
        for o in &c.orderings {
            let means: Vec<String> = o.means.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.experiment,
                o.chain.join(">"),
                o.epoch,
                means.join(";"),
                o.holds,
                o.p_top_bottom
            );
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `curves.csv`, `summary.csv` and `orderings.csv` into `dir`,
/// replacing earlier files.
pub fn emit_results(
    records: &[RunRecord],
    comparisons: &[ComparisonResult],
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join("curves.csv"), &curves_csv(records))?;
    write_file(&dir.join("summary.csv"), &summary_csv(comparisons))?;
    write_file(&dir.join("orderings.csv"), &orderings_csv(comparisons))?;
    Ok(())
}

/// `key=value` lines describing a run, for `manifest.txt`.
pub fn manifest(
    experiments: &[u8],
    seeds: &[u64],
    configs: &BTreeMap<u8, ExperimentConfig>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "morphlab_version={}", env!("CARGO_PKG_VERSION"));
    let ids: Vec<String> = experiments.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "experiments={}", ids.join(","));
    let s: Vec<String> = seeds.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "seeds={}", s.join(","));
    for (exp, c) in configs {
        let p = &c.perception;
        let q = &c.production;
        let _ = writeln!(out, "exp{exp}.epochs1={}", c.epochs1);
        let _ = writeln!(out, "exp{exp}.epochs2={}", c.epochs2);
        let _ = writeln!(out, "exp{exp}.pretrain_epochs={}", c.pretrain_epochs);
        let _ = writeln!(out, "exp{exp}.phase1_threshold={}", c.phase1_threshold);
        let _ = writeln!(out, "exp{exp}.checkpoints={:?}", c.checkpoint_epochs());
        let _ = writeln!(out, "exp{exp}.root_hidden={}", p.root_hidden);
        let _ = writeln!(out, "exp{exp}.inflection_hidden={}", p.inflection_hidden);
        let _ = writeln!(
            out,
            "exp{exp}.perception.learning_rate={}",
            p.train.learning_rate
        );
        let _ = writeln!(out, "exp{exp}.perception.momentum={}", p.train.momentum);
        let _ = writeln!(
            out,
            "exp{exp}.init_range={},{}",
            p.train.init_range.0, p.train.init_range.1
        );
        let _ = writeln!(out, "exp{exp}.production_hidden={}", q.hidden);
        let _ = writeln!(
            out,
            "exp{exp}.production.learning_rate={}",
            q.train.learning_rate
        );
        let _ = writeln!(out, "exp{exp}.production.momentum={}", q.train.momentum);
        let _ = writeln!(out, "exp{exp}.feedback_decay={}", q.feedback_decay);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{CurvePoint, Scores};

    #[test]
    fn condition_tables() {
        let counts: Vec<usize> = EXPERIMENTS.map(|e| conditions(e).unwrap().len()).collect();
        assert_eq!(counts, vec![6, 2, 4, 4, 2]);
        let names: Vec<String> = conditions(1).unwrap().into_iter().map(|c| c.name).collect();
        assert_eq!(
            names,
            [
                "prefix1->suffix1",
                "suffix1->prefix1",
                "prefix1->prefix2",
                "prefix1->prefix1",
                "suffix1->suffix2",
                "suffix1->suffix1"
            ]
        );
        let e4 = conditions(4).unwrap();
        assert!(e4.iter().all(|c| c.modality == Modality::Production));
        let e3: Vec<String> = conditions(3).unwrap().into_iter().map(|c| c.name).collect();
        assert_eq!(
            e3,
            [
                "suffix->template",
                "template->template",
                "suffix->suffix",
                "template->suffix"
            ]
        );
        assert_eq!(conditions(5).unwrap()[1].name, "fixed->harmony");
        let err = conditions(9).unwrap_err().to_string();
        assert!(err.contains("1..5"), "{err}");
    }

    #[test]
    fn root_pools() {
        assert_eq!(RootPool::Affix.roots(0).unwrap().len(), 24);
        let a = RootPool::Template { second: false }.roots(3).unwrap();
        let b = RootPool::Template { second: true }.roots(3).unwrap();
        assert_eq!((a.len(), b.len()), (45, 45));
        assert!(a.iter().all(|r| !b.contains(r)));
        assert_eq!(RootPool::Harmony.roots(1).unwrap().len(), 42);
        assert_eq!(
            RootPool::Affix.roots(7).unwrap(),
            RootPool::Affix.roots(7).unwrap()
        );
        assert_ne!(
            RootPool::Affix.roots(7).unwrap(),
            RootPool::Affix.roots(8).unwrap()
        );
    }

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test(0, 0), 1.0);
        assert!((sign_test(10, 0) - 1.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test(9, 1) - 11.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test(8, 2) - 56.0 / 1024.0).abs() < 1e-15);
        assert_eq!(sign_test(0, 5), 1.0);
    }

    fn fake(cond: &str, label: &str, seed: u64, accs: &[f64]) -> RunRecord {
        let points = accs
            .iter()
            .enumerate()
            .map(|(e, &a)| CurvePoint {
                epoch: e,
                train: Scores(vec![("inflection-2".into(), a)]),
                test: Scores(vec![("inflection-2".into(), a)]),
                train_loss: None,
            })
            .collect();
        RunRecord {
            experiment: 2,
            condition: cond.into(),
            label: label.into(),
            seed,
            modality: Modality::Perception,
            phase1: Curve::default(),
            phase2: Curve { points },
        }
    }

    #[test]
    fn identical_conditions_compare_equal() {
        let mut recs = Vec::new();
        for s in 0..4 {
            let accs = [0.3, 0.5 + s as f64 * 0.1];
            recs.push(fake("x", "a", s, &accs));
            recs.push(fake("y", "b", s, &accs));
        }
        let c = compare_conditions(&recs, &[1], "inflection-2", Split::Test).unwrap();
        let p = c.pair(1, "b", "a").unwrap();
        assert_eq!(p.p, 1.0);
        assert_eq!(c.stat(1, "a").unwrap().mean, c.stat(1, "b").unwrap().mean);
        assert!(!c.orderings[0].holds);
    }

    #[test]
    fn unequal_seeds_rejected() {
        let recs = vec![fake("x", "a", 0, &[0.1]), fake("y", "b", 1, &[0.1])];
        assert!(compare_conditions(&recs, &[0], "inflection-2", Split::Test).is_err());
    }

    #[test]
    fn stats_and_verdicts() {
        let mut recs = Vec::new();
        for s in 0..10 {
            recs.push(fake("x", "a", s, &[0.3, 0.4]));
            recs.push(fake("y", "b", s, &[0.3, 0.8]));
        }
        let c = compare_conditions(&recs, &[1], "inflection-2", Split::Test).unwrap();
        let v = &c.orderings[0];
        assert_eq!(v.chain, vec!["b", "a"]);
        assert!(v.holds);
        assert!((v.p_top_bottom - 1.0 / 1024.0).abs() < 1e-15);
        assert!(c.stat(1, "b").unwrap().stderr < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let recs = vec![fake("x", "a", 3, &[0.25, 0.5])];
        let csv = curves_csv(&recs);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "2,x,2,3,0,inflection-2,train,0.25");
        assert_eq!(lines.len(), 1 + 2 * 2);
    }

    #[test]
    fn checkpoint_epochs() {
        let cfg = ExperimentConfig {
            epochs2: 40,
            ..ExperimentConfig::for_experiment(1)
        };
        assert_eq!(cfg.checkpoint_epochs(), vec![10, 20, 30]);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(5, "x"), derive_seed(5, "x"));
    }
}
