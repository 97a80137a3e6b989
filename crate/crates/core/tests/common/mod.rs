//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use morphlab::langgen::{build_lexicon, split_lexicon, Process, Word};
use morphlab::phonfeat::SegmentInventory;
use morphlab::xfer::{conditions, derive_seed, TaskRecipe, EXPERIMENTS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every distinct task recipe used by the experiments.
pub fn all_recipes() -> Vec<TaskRecipe> {
    let mut out: Vec<TaskRecipe> = Vec::new();
    for e in EXPERIMENTS {
        for c in conditions(e).unwrap() {
            for r in [c.phase1, c.phase2] {
                if !out.contains(&r) {
                    out.push(r);
                }
            }
        }
    }
    out
}

/// Front vowels are i and e; u, o and a are back.
fn harmonic(phones: &str) -> bool {
    let front = phones.chars().any(|c| "ie".contains(c));
    let back = phones.chars().any(|c| "uoa".contains(c));
    !(front && back)
}

fn is_subsequence(needle: &str, hay: &str) -> bool {
    let mut it = hay.chars();
    needle.chars().all(|c| it.any(|h| h == c))
}

/// Checks the generator invariants for one recipe and seed: lexicon size,
/// split partition and coverage, harmony, template faithfulness and
/// syllabification. Returns a description of the first violation.
pub fn check_generator(recipe: &TaskRecipe, seed: u64) -> Result<(), String> {
    let spec = recipe.instantiate(seed).map_err(|e| e.to_string())?;
    let inv = SegmentInventory::new(spec.inventory);
    let words = build_lexicon(&spec).map_err(|e| e.to_string())?;

    let expected = spec.roots.len() * 3usize.pow(spec.rules.len() as u32);
    if words.len() != expected {
        return Err(format!(
            "lexicon has {} words, expected {expected}",
            words.len()
        ));
    }
    let keys: HashSet<(usize, Vec<(usize, usize)>)> = words
        .iter()
        .map(|w| {
            (
                w.root,
                w.inflections.iter().map(|(a, b)| (*a, *b)).collect(),
            )
        })
        .collect();
    if keys.len() != words.len() {
        return Err("two words share root and inflections".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "invariant-split"));
    let (train, test) = split_lexicon(&words, &mut rng).map_err(|e| e.to_string())?;
    if train.len() != words.len() * 2 / 3 || train.len() + test.len() != words.len() {
        return Err(format!(
            "split sizes {} + {} of {}",
            train.len(),
            test.len(),
            words.len()
        ));
    }
    let mut all: Vec<&str> = train
        .iter()
        .chain(&test)
        .map(|w| w.phones.as_str())
        .collect();
    let mut orig: Vec<&str> = words.iter().map(|w| w.phones.as_str()).collect();
    all.sort_unstable();
    orig.sort_unstable();
    if all != orig {
        return Err("train and test do not partition the lexicon".into());
    }
    let roots: BTreeSet<usize> = train.iter().map(|w| w.root).collect();
    if roots.len() != spec.roots.len() {
        return Err("a root is missing from training".into());
    }
    let morphs: BTreeSet<(usize, usize)> = train
        .iter()
        .flat_map(|w| w.inflections.iter().map(|(a, b)| (*a, *b)))
        .collect();
    if morphs.len() != spec.rules.len() * 3 {
        return Err("a morpheme is missing from training".into());
    }

    let harmony = spec
        .rules
        .iter()
        .any(|r| matches!(r.process, Process::HarmonySuffix(_)));
    for w in &words {
        check_word(w, &spec.roots[w.root], &inv, harmony, &spec.rules)?;
    }
    Ok(())
}

fn check_word(
    w: &Word,
    root: &str,
    inv: &SegmentInventory,
    harmony: bool,
    rules: &[morphlab::langgen::MorphRule],
) -> Result<(), String> {
    if harmony && !harmonic(&w.phones) {
        return Err(format!("{} breaks vowel harmony", w.phones));
    }
    for r in rules {
        if let Process::Template(ts) = &r.process {
            let t = &ts[w.inflections[&r.category]];
            let consonants: String = root.chars().collect();
            if !is_subsequence(&consonants, &w.phones) || w.phones.len() != t.items().len() {
                return Err(format!("{} is not {} applied to {root}", w.phones, t));
            }
        }
    }
    let spans = w.syllable_spans();
    let chars: Vec<char> = w.phones.chars().collect();
    if spans.first().map(|s| s.start) != Some(0) || spans.last().map(|s| s.end) != Some(chars.len())
    {
        return Err(format!("syllables of {} do not cover it", w.phones));
    }
    for pair in spans.windows(2) {
        if pair[0].end != pair[1].start || pair[0].is_empty() {
            return Err(format!("syllables of {} are not contiguous", w.phones));
        }
    }
    for s in &spans {
        let vowels = chars[s.clone()]
            .iter()
            .filter(|c| inv.is_vowel(**c).unwrap())
            .count();
        if vowels != 1 {
            return Err(format!(
                "syllable {:?} of {} has {vowels} vowels",
                s, w.phones
            ));
        }
    }
    Ok(())
}
