//! Browser bindings. Each export returns a JSON string; the plain `*_json`
//! functions behind them are usable (and tested) natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use morphlab::curve::Split;
use morphlab::langgen::{MorphRule, Process};
use morphlab::phonfeat::{InventoryKind, SegmentInventory, FEATURE_NAMES};
use morphlab::xfer::{conditions, run_conditions, task_words, ConditionSpec, ExperimentConfig};

/// Longest phase-2 budget the page may request.
pub const MAX_EPOCHS2: usize = 60;

#[derive(Serialize)]
struct LexiconView {
    condition: String,
    inventory: String,
    rules: Vec<String>,
    words: Vec<WordView>,
}

#[derive(Serialize)]
struct WordView {
    surface: String,
    syllables: String,
    root: usize,
    inflections: Vec<(usize, usize)>,
    split: &'static str,
}

#[derive(Serialize)]
struct PhoneView {
    symbol: char,
    vowel: bool,
    bits: String,
    features: Vec<&'static str>,
}

#[derive(Serialize)]
struct CurveView {
    label: String,
    name: String,
    phase1: Vec<(usize, f64)>,
    phase2: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct CurvesView {
    experiment: u8,
    seed: u64,
    phase1_category: String,
    phase2_category: String,
    conditions: Vec<CurveView>,
}

fn describe(rule: &MorphRule) -> String {
    let list = |xs: Vec<String>| xs.join(", ");
    let body = match &rule.process {
        Process::Prefix(s) => format!("prefix {{{}}}", list(s.to_vec())),
        Process::Suffix(s) => format!("suffix {{{}}}", list(s.to_vec())),
        Process::Template(t) => format!(
            "template {{{}}}",
            list(t.iter().map(ToString::to_string).collect())
        ),
        Process::HarmonySuffix(p) => format!(
            "harmonizing suffix {{{}}}",
            list(p.iter().map(|(f, b)| format!("{f}/{b}")).collect())
        ),
    };
    format!("category {}: {body}", rule.category)
}

fn condition(experiment: u8, label: &str) -> Result<ConditionSpec, String> {
    conditions(experiment)
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|c| c.label == label || c.name == label)
        .ok_or_else(|| format!("experiment {experiment} has no condition `{label}`"))
}

/// The lexicon of one task of a condition, with its train/test split.
pub fn lexicon_json(experiment: u8, label: &str, phase: u8, seed: u64) -> Result<String, String> {
    let cond = condition(experiment, label)?;
    let recipe = if phase == 1 {
        &cond.phase1
    } else {
        &cond.phase2
    };
    let inv = SegmentInventory::new(recipe.pool.inventory());
    let (train, test) = task_words(recipe, seed).map_err(|e| e.to_string())?;
    let mut words: Vec<WordView> = Vec::with_capacity(train.len() + test.len());
    for (split, list) in [("train", &train), ("test", &test)] {
        for w in list {
            let chars: Vec<char> = w.phones.chars().collect();
            let syllables: Vec<String> = w
                .syllable_spans()
                .into_iter()
                .map(|s| chars[s].iter().collect())
                .collect();
            words.push(WordView {
                surface: w.phones.clone(),
                syllables: syllables.join("."),
                root: w.root,
                inflections: w.inflections.iter().map(|(c, m)| (*c, *m)).collect(),
                split,
            });
        }
    }
    words.sort_by(|a, b| (a.root, &a.inflections).cmp(&(b.root, &b.inflections)));
    let view = LexiconView {
        condition: cond.name,
        inventory: inv.kind().to_string(),
        rules: recipe.rules.iter().map(describe).collect(),
        words,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Feature vectors of each phone of `text` in the small or large inventory.
pub fn features_json(text: &str, inventory: &str) -> Result<String, String> {
    let kind = match inventory {
        "small" => InventoryKind::Small,
        "large" => InventoryKind::Large,
        other => return Err(format!("unknown inventory `{other}`; use small or large")),
    };
    let inv = SegmentInventory::new(kind);
    let phones = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| {
            let seg = inv.segment(c).map_err(|e| e.to_string())?;
            let bits = seg.features.bits();
            Ok(PhoneView {
                symbol: c,
                vowel: seg.is_vowel(),
                bits: bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
                features: FEATURE_NAMES
                    .iter()
                    .zip(bits)
                    .filter(|(_, &b)| b)
                    .map(|(n, _)| *n)
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&phones).map_err(|e| e.to_string())
}

/// Trains every condition of an experiment for one seed and returns the
/// test-accuracy curves of both phases.
pub fn curves_json(experiment: u8, seed: u64, epochs2: usize) -> Result<String, String> {
    if epochs2 == 0 || epochs2 > MAX_EPOCHS2 {
        return Err(format!("phase-2 epochs must be in 1..={MAX_EPOCHS2}"));
    }
    let conds = conditions(experiment).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        epochs2,
        ..ExperimentConfig::for_experiment(experiment)
    };
    let records = run_conditions(&conds, &[seed], &cfg, 1).map_err(|e| e.to_string())?;
    let cat2 = conds[0].phase2_category();
    let cat1 = match conds[0].modality {
        morphlab::xfer::Modality::Perception => morphlab::percept::category_label(1),
        morphlab::xfer::Modality::Production => cat2.clone(),
    };
    let view = CurvesView {
        experiment,
        seed,
        phase1_category: cat1.clone(),
        phase2_category: cat2.clone(),
        conditions: records
            .iter()
            .map(|r| CurveView {
                label: r.label.clone(),
                name: r.condition.clone(),
                phase1: r.phase1.series(&cat1, Split::Test),
                phase2: r.phase2.series(&cat2, Split::Test),
            })
            .collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn lexicon(experiment: u8, condition: &str, phase: u8, seed: u32) -> Result<String, JsError> {
    lexicon_json(experiment, condition, phase, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn features(text: &str, inventory: &str) -> Result<String, JsError> {
    features_json(text, inventory).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn curves(experiment: u8, seed: u32, epochs2: u32) -> Result<String, JsError> {
    curves_json(experiment, seed as u64, epochs2 as usize).map_err(|e| JsError::new(&e))
}

/// Condition labels and names of an experiment, for the page's menus.
#[wasm_bindgen]
pub fn condition_names(experiment: u8) -> Result<String, JsError> {
    let conds = conditions(experiment).map_err(|e| JsError::new(&e.to_string()))?;
    let pairs: Vec<(String, String)> = conds.into_iter().map(|c| (c.label, c.name)).collect();
    serde_json::to_string(&pairs).map_err(|e| JsError::new(&e.to_string()))
}
