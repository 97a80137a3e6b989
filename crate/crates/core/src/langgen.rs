//! Artificial languages: roots, morphological rules, lexicons and splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::phonfeat::{Feature, InventoryKind, SegmentInventory};

/// Each inflectional category has this many morphemes.
pub const MORPHEMES_PER_CATEGORY: usize = 3;

/// Fraction of the lexicon used for training, as numerator/denominator.
pub const TRAIN_FRACTION: (usize, usize) = (2, 3);

pub const PREFIX_SET_1: [&str; 3] = ["fi", "di", "do"];
pub const PREFIX_SET_2: [&str; 3] = ["be", "bu", "zi"];
pub const SUFFIX_SET_1: [&str; 3] = ["if", "is", "os"];
pub const SUFFIX_SET_2: [&str; 3] = ["et", "ep", "up"];

pub const TEMPLATE_SUFFIX_SET_1: [&str; 3] = ["if", "in", "uk"];
pub const TEMPLATE_SUFFIX_SET_2: [&str; 3] = ["om", "ot", "ex"];
pub const TEMPLATE_SET_1: [&str; 3] = ["C1aC2C3a", "C1C2aC3C3a", "C1aC2aC3a"];
pub const TEMPLATE_SET_2: [&str; 3] = ["C1aC2C2aC3", "C1aC2aC3", "C1C2aaC3"];

pub const HARMONY_SET_1: [(&str, &str); 3] = [("if", "uf"), ("en", "on"), ("ik", "uk")];
pub const HARMONY_SET_2: [(&str, &str); 3] = [("im", "um"), ("ex", "ox"), ("ep", "op")];
pub const FIXED_HARMONY_CONTROL: [&str; 3] = ["if", "en", "uk"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cv {
    C,
    V,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RootShape(Vec<Cv>);

impl RootShape {
    pub fn slots(&self) -> &[Cv] {
        &self.0
    }

    pub fn is_all_consonants(&self) -> bool {
        self.0.iter().all(|&s| s == Cv::C)
    }
}

impl FromStr for RootShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let slots = s
            .chars()
            .map(|c| match c {
                'C' => Ok(Cv::C),
                'V' => Ok(Cv::V),
                _ => Err(Error::Config(format!("bad root shape `{s}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if slots.is_empty() {
            return Err(Error::Config("empty root shape".into()));
        }
        Ok(RootShape(slots))
    }
}

impl fmt::Display for RootShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            f.write_str(match s {
                Cv::C => "C",
                Cv::V => "V",
            })?;
        }
        Ok(())
    }
}

fn is_back(inv: &SegmentInventory, vowel: char) -> Result<bool> {
    Ok(inv.segment(vowel)?.features.get(Feature::Back))
}

/// True when every vowel in `phones` has the same backness.
pub fn is_harmonic(phones: &str, inv: &SegmentInventory) -> Result<bool> {
    let mut seen = None;
    for c in phones.chars() {
        if inv.is_vowel(c)? {
            let b = is_back(inv, c)?;
            match seen {
                None => seen = Some(b),
                Some(prev) if prev != b => return Ok(false),
                _ => {}
            }
        }
    }
    Ok(true)
}

fn enumerate_shape(shape: &RootShape, cons: &[char], vowels: &[char]) -> Vec<String> {
    let mut out = vec![String::new()];
    for slot in shape.slots() {
        let pool = match slot {
            Cv::C => cons,
            Cv::V => vowels,
        };
        out = out
            .iter()
            .flat_map(|prefix| {
                pool.iter().map(move |&c| {
                    let mut s = prefix.clone();
                    s.push(c);
                    s
                })
            })
            .collect();
    }
    out
}

/// Draws `count` distinct roots. Each root picks one of `shapes` uniformly at
/// random (shapes that run out of fresh roots are skipped). With `harmony` set,
/// every root's vowels agree in backness.
pub fn generate_roots<R: Rng>(
    shapes: &[RootShape],
    count: usize,
    inv: &SegmentInventory,
    harmony: bool,
    rng: &mut R,
) -> Result<Vec<String>> {
    let shape_names = || {
        shapes
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("/")
    };
    if count == 0 || shapes.is_empty() {
        return Err(Error::RootCount {
            shape: shape_names(),
            count,
        });
    }
    let cons: Vec<char> = inv.consonants().collect();
    let vowels: Vec<char> = inv.vowels().collect();
    let mut pools = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let mut pool = enumerate_shape(shape, &cons, &vowels);
        if harmony {
            let mut keep = Vec::with_capacity(pool.len());
            for r in pool {
                if is_harmonic(&r, inv)? {
                    keep.push(r);
                }
            }
            pool = keep;
        }
        pool.shuffle(rng);
        pools.push(pool);
    }
    let mut seen = HashSet::new();
    let capacity: usize = {
        let all: HashSet<&String> = pools.iter().flatten().collect();
        all.len()
    };
    if count > capacity {
        return Err(Error::RootCount {
            shape: shape_names(),
            count,
        });
    }
    let mut roots = Vec::with_capacity(count);
    while roots.len() < count {
        let live: Vec<usize> = (0..pools.len()).filter(|&i| !pools[i].is_empty()).collect();
        let pick = live[rng.gen_range(0..live.len())];
        let root = pools[pick].pop().expect("live pool");
        if seen.insert(root.clone()) {
            roots.push(root);
        }
    }
    Ok(roots)
}

/// One element of a template: a root consonant slot (0-based) or a fixed segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateItem {
    Root(usize),
    Segment(char),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template(Vec<TemplateItem>);

impl Template {
    pub fn items(&self) -> &[TemplateItem] {
        &self.0
    }

    pub fn apply(&self, root: &str) -> Result<String> {
        let cons: Vec<char> = root.chars().collect();
        if cons.len() != 3 {
            return Err(Error::Rule(format!(
                "template needs a three-consonant root, got `{root}`"
            )));
        }
        Ok(self
            .0
            .iter()
            .map(|item| match *item {
                TemplateItem::Root(i) => cons[i],
                TemplateItem::Segment(c) => c,
            })
            .collect())
    }
}

impl FromStr for Template {
    type Err = Error;

    /// Parses notation like `C1aC2C3a`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Rule(format!("bad template `{s}`"));
        let mut items = Vec::new();
        let mut chars = s.chars();
        while let Some(c) = chars.next() {
            if c == 'C' {
                let d = chars.next().and_then(|d| d.to_digit(10)).ok_or_else(bad)?;
                if !(1..=3).contains(&d) {
                    return Err(bad());
                }
                items.push(TemplateItem::Root(d as usize - 1));
            } else {
                items.push(TemplateItem::Segment(c));
            }
        }
        let slots: Vec<usize> = items
            .iter()
            .filter_map(|i| match i {
                TemplateItem::Root(k) => Some(*k),
                _ => None,
            })
            .collect();
        let ordered = slots.windows(2).all(|w| w[0] <= w[1]);
        let complete = (0..3).all(|k| slots.contains(&k));
        if !ordered || !complete {
            return Err(bad());
        }
        Ok(Template(items))
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.0 {
            match item {
                TemplateItem::Root(k) => write!(f, "C{}", k + 1)?,
                TemplateItem::Segment(c) => write!(f, "{c}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Process {
    Prefix([String; 3]),
    Suffix([String; 3]),
    Template([Template; 3]),
    /// `(front, back)` allomorph pairs; the one matching the stem's backness is used.
    HarmonySuffix([(String, String); 3]),
}

impl Process {
    pub fn name(&self) -> &'static str {
        match self {
            Process::Prefix(_) => "prefix",
            Process::Suffix(_) => "suffix",
            Process::Template(_) => "template",
            Process::HarmonySuffix(_) => "harmony-suffix",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphRule {
    pub category: usize,
    pub process: Process,
}

fn check_affix(a: &str) -> Result<()> {
    if a.chars().count() != 2 {
        return Err(Error::Rule(format!(
            "affix `{a}` must have exactly two segments"
        )));
    }
    Ok(())
}

fn owned(set: [&str; 3]) -> [String; 3] {
    set.map(str::to_owned)
}

impl MorphRule {
    pub fn prefix(category: usize, set: [&str; 3]) -> Result<Self> {
        set.iter().try_for_each(|a| check_affix(a))?;
        Ok(MorphRule {
            category,
            process: Process::Prefix(owned(set)),
        })
    }

    pub fn suffix(category: usize, set: [&str; 3]) -> Result<Self> {
        set.iter().try_for_each(|a| check_affix(a))?;
        Ok(MorphRule {
            category,
            process: Process::Suffix(owned(set)),
        })
    }

    pub fn template(category: usize, set: [&str; 3]) -> Result<Self> {
        let [a, b, c] = set;
        Ok(MorphRule {
            category,
            process: Process::Template([a.parse()?, b.parse()?, c.parse()?]),
        })
    }

    /// Pairs must differ only in backness of their vowels (checked against `inv`).
    pub fn harmony_suffix(
        category: usize,
        set: [(&str, &str); 3],
        inv: &SegmentInventory,
    ) -> Result<Self> {
        for (front, back) in set {
            check_affix(front)?;
            check_affix(back)?;
            for (f, b) in front.chars().zip(back.chars()) {
                let fv = inv.is_vowel(f)?;
                if fv != inv.is_vowel(b)? {
                    return Err(Error::Rule(format!("`{front}`/`{back}` not aligned")));
                }
                if !fv {
                    if f != b {
                        return Err(Error::Rule(format!(
                            "`{front}`/`{back}` differ in a consonant"
                        )));
                    }
                } else if is_back(inv, f)? || !is_back(inv, b)? {
                    return Err(Error::Rule(format!(
                        "`{front}`/`{back}` must be front/back"
                    )));
                }
            }
        }
        Ok(MorphRule {
            category,
            process: Process::HarmonySuffix(set.map(|(f, b)| (f.to_owned(), b.to_owned()))),
        })
    }

    pub fn kind(&self) -> &'static str {
        self.process.name()
    }

    /// Applies allomorph `index` to `stem`.
    pub fn apply(&self, index: usize, stem: &str, inv: &SegmentInventory) -> Result<String> {
        if index >= MORPHEMES_PER_CATEGORY {
            return Err(Error::Rule(format!("allomorph index {index} out of range")));
        }
        match &self.process {
            Process::Prefix(set) => Ok(format!("{}{stem}", set[index])),
            Process::Suffix(set) => Ok(format!("{stem}{}", set[index])),
            Process::Template(set) => {
                for c in stem.chars() {
                    if inv.is_vowel(c)? {
                        return Err(Error::Rule(format!(
                            "template needs a three-consonant root, got `{stem}`"
                        )));
                    }
                }
                set[index].apply(stem)
            }
            Process::HarmonySuffix(set) => {
                let mut last_vowel = None;
                for c in stem.chars() {
                    if inv.is_vowel(c)? {
                        last_vowel = Some(c);
                    }
                }
                let v = last_vowel.ok_or_else(|| {
                    Error::Rule(format!("harmony suffix needs a stem vowel in `{stem}`"))
                })?;
                let (front, back) = &set[index];
                let affix = if is_back(inv, v)? { back } else { front };
                Ok(format!("{stem}{affix}"))
            }
        }
    }
}

/// Free-standing form of [`MorphRule::apply`].
pub fn apply_rule(
    rule: &MorphRule,
    index: usize,
    root: &str,
    inv: &SegmentInventory,
) -> Result<String> {
    rule.apply(index, root, inv)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub phones: String,
    pub root: usize,
    /// Category id to morpheme index.
    pub inflections: BTreeMap<usize, usize>,
    /// Interior syllable boundaries: indices where a new syllable starts.
    pub syllables: Vec<usize>,
}

impl Word {
    pub fn syllable_spans(&self) -> Vec<Range<usize>> {
        syllable_spans(self.phones.len(), &self.syllables)
    }
}

pub fn syllable_spans(len: usize, boundaries: &[usize]) -> Vec<Range<usize>> {
    let mut spans = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0;
    for &b in boundaries {
        spans.push(start..b);
        start = b;
    }
    spans.push(start..len);
    spans
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub inventory: InventoryKind,
    pub roots: Vec<String>,
    pub rules: Vec<MorphRule>,
}

impl TaskSpec {
    pub fn categories(&self) -> Vec<usize> {
        self.rules.iter().map(|r| r.category).collect()
    }
}

/// One word per combination of root and morphemes, rules applied in order.
pub fn build_lexicon(task: &TaskSpec) -> Result<Vec<Word>> {
    let inv = SegmentInventory::new(task.inventory);
    let combos = MORPHEMES_PER_CATEGORY.pow(task.rules.len() as u32);
    let mut words = Vec::with_capacity(task.roots.len() * combos);
    for (root_id, root) in task.roots.iter().enumerate() {
        for combo in 0..combos {
            let mut stem = root.clone();
            let mut inflections = BTreeMap::new();
            let mut rest = combo;
            let mut indices = vec![0; task.rules.len()];
            for slot in indices.iter_mut().rev() {
                *slot = rest % MORPHEMES_PER_CATEGORY;
                rest /= MORPHEMES_PER_CATEGORY;
            }
            for (rule, &idx) in task.rules.iter().zip(&indices) {
                stem = rule.apply(idx, &stem, &inv)?;
                if inflections.insert(rule.category, idx).is_some() {
                    return Err(Error::Rule(format!(
                        "category {} realized by two rules",
                        rule.category
                    )));
                }
            }
            let syllables = syllabify(&stem, &inv)?;
            words.push(Word {
                phones: stem,
                root: root_id,
                inflections,
                syllables,
            });
        }
    }
    Ok(words)
}

/// Stratified 2/3 : 1/3 split. Every root and every morpheme of every
/// category occurs at least once in the training part.
pub fn split_lexicon<R: Rng>(words: &[Word], rng: &mut R) -> Result<(Vec<Word>, Vec<Word>)> {
    let (num, den) = TRAIN_FRACTION;
    let quota = words.len() * num / den;
    let mut order: Vec<usize> = (0..words.len()).collect();
    order.shuffle(rng);

    let mut roots_seen = HashSet::new();
    let mut morphs_seen = HashSet::new();
    let mut in_train = vec![false; words.len()];
    let mut chosen = Vec::with_capacity(quota);
    for &i in &order {
        let w = &words[i];
        let new_root = !roots_seen.contains(&w.root);
        let new_morph = w
            .inflections
            .iter()
            .any(|(c, m)| !morphs_seen.contains(&(*c, *m)));
        if new_root || new_morph {
            roots_seen.insert(w.root);
            morphs_seen.extend(w.inflections.iter().map(|(c, m)| (*c, *m)));
            in_train[i] = true;
            chosen.push(i);
        }
    }
    if chosen.len() > quota || quota == 0 {
        return Err(Error::Stratify {
            needed: chosen.len(),
            quota,
        });
    }
    for &i in &order {
        if chosen.len() == quota {
            break;
        }
        if !in_train[i] {
            in_train[i] = true;
            chosen.push(i);
        }
    }
    // Training order is the shuffled draw order; test keeps lexicon order.
    let train = order
        .iter()
        .filter(|&&i| in_train[i])
        .map(|&i| words[i].clone())
        .collect();
    let test = (0..words.len())
        .filter(|&i| !in_train[i])
        .map(|i| words[i].clone())
        .collect();
    Ok((train, test))
}

/// Interior syllable boundaries. One vowel per syllable; a lone intervocalic
/// consonant starts the next syllable, a longer cluster splits after its
/// first consonant, and edge clusters attach to the nearest syllable.
pub fn syllabify(phones: &str, inv: &SegmentInventory) -> Result<Vec<usize>> {
    let mut nuclei = Vec::new();
    for (i, c) in phones.chars().enumerate() {
        if inv.is_vowel(c)? {
            nuclei.push(i);
        }
    }
    if nuclei.is_empty() {
        return Err(Error::NoVowel(phones.to_owned()));
    }
    Ok(nuclei
        .windows(2)
        .map(|w| {
            let cluster = w[1] - w[0] - 1;
            match cluster {
                0 => w[1],
                1 => w[0] + 1,
                _ => w[0] + 2,
            }
        })
        .collect())
}

/// `surface TAB root-id TAB cat:morpheme,... TAB boundaries`, one word per line.
pub fn lexicon_to_text(words: &[Word]) -> String {
    let mut out = String::new();
    for w in words {
        let infl: Vec<String> = w
            .inflections
            .iter()
            .map(|(c, m)| format!("{c}:{m}"))
            .collect();
        let syl: Vec<String> = w.syllables.iter().map(ToString::to_string).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            w.phones,
            w.root,
            infl.join(","),
            syl.join(",")
        ));
    }
    out
}

pub fn parse_lexicon(text: &str) -> Result<Vec<Word>> {
    let bad = |n: usize, what: &str| Error::Word(format!("lexicon line {n}: {what}"));
    let num = |s: &str, n: usize| s.parse::<usize>().map_err(|_| bad(n, "bad number"));
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad(n, "expected 4 columns"));
        }
        let mut inflections = BTreeMap::new();
        for pair in cols[2].split(',').filter(|s| !s.is_empty()) {
            let (c, m) = pair
                .split_once(':')
                .ok_or_else(|| bad(n, "bad inflection"))?;
            inflections.insert(num(c, n)?, num(m, n)?);
        }
        let syllables = cols[3]
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| num(s, n))
            .collect::<Result<Vec<_>>>()?;
        words.push(Word {
            phones: cols[0].to_owned(),
            root: num(cols[1], n)?,
            inflections,
            syllables,
        });
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(s: &str) -> RootShape {
        s.parse().unwrap()
    }

    fn split_syllables(phones: &str, inv: &SegmentInventory) -> String {
        let b = syllabify(phones, inv).unwrap();
        syllable_spans(phones.len(), &b)
            .into_iter()
            .map(|r| &phones[r])
            .collect::<Vec<_>>()
            .join(".")
    }

    #[test]
    fn roots_cvcvc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inv = SegmentInventory::small();
        let roots = generate_roots(&[shape("CVCVC")], 12, &inv, false, &mut rng).unwrap();
        assert_eq!(roots.len(), 12);
        assert_eq!(roots.iter().collect::<HashSet<_>>().len(), 12);
        for r in &roots {
            assert_eq!(r.len(), 5);
            let pattern: String = r
                .chars()
                .map(|c| if inv.is_vowel(c).unwrap() { 'V' } else { 'C' })
                .collect();
            assert_eq!(pattern, "CVCVC");
        }
    }

    #[test]
    fn roots_ccc_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inv = SegmentInventory::large();
        let roots = generate_roots(&[shape("CCC")], 45, &inv, false, &mut rng).unwrap();
        assert_eq!(roots.iter().collect::<HashSet<_>>().len(), 45);
        assert!(roots
            .iter()
            .all(|r| r.chars().all(|c| !inv.is_vowel(c).unwrap())));
    }

    #[test]
    fn roots_harmonic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inv = SegmentInventory::large();
        let roots =
            generate_roots(&[shape("CVC"), shape("CVCVC")], 42, &inv, true, &mut rng).unwrap();
        assert_eq!(roots.len(), 42);
        assert!(roots.iter().all(|r| is_harmonic(r, &inv).unwrap()));
    }

    #[test]
    fn roots_impossible_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inv = SegmentInventory::small();
        // 4 vowels: only 4 distinct V roots exist.
        let err = generate_roots(&[shape("V")], 5, &inv, false, &mut rng).unwrap_err();
        assert!(matches!(err, Error::RootCount { .. }));
        assert!(generate_roots(&[shape("V")], 4, &inv, false, &mut rng).is_ok());
    }

    #[test]
    fn apply_examples() {
        let small = SegmentInventory::small();
        let large = SegmentInventory::large();
        let p1 = MorphRule::prefix(1, PREFIX_SET_1).unwrap();
        let s1 = MorphRule::suffix(1, SUFFIX_SET_1).unwrap();
        let s2 = MorphRule::suffix(1, SUFFIX_SET_2).unwrap();
        assert_eq!(apply_rule(&p1, 0, "fetos", &small).unwrap(), "fifetos");
        assert_eq!(apply_rule(&p1, 2, "fetos", &small).unwrap(), "dofetos");
        assert_eq!(apply_rule(&s1, 0, "fetos", &small).unwrap(), "fetosif");
        assert_eq!(apply_rule(&s2, 2, "fetos", &small).unwrap(), "fetosup");

        let t1 = MorphRule::template(1, TEMPLATE_SET_1).unwrap();
        assert_eq!(apply_rule(&t1, 0, "rng", &large).unwrap(), "ranga");
        assert_eq!(apply_rule(&t1, 1, "rng", &large).unwrap(), "rnagga");
        assert_eq!(apply_rule(&t1, 2, "rng", &large).unwrap(), "ranaga");

        let h1 = MorphRule::harmony_suffix(1, HARMONY_SET_1, &large).unwrap();
        assert_eq!(apply_rule(&h1, 0, "buk", &large).unwrap(), "bukuf");
        assert_eq!(apply_rule(&h1, 0, "bik", &large).unwrap(), "bikif");
        assert_eq!(apply_rule(&h1, 1, "mabar", &large).unwrap(), "mabaron");
    }

    #[test]
    fn template_rejects_non_ccc() {
        let large = SegmentInventory::large();
        let t1 = MorphRule::template(1, TEMPLATE_SET_1).unwrap();
        assert!(t1.apply(0, "fetos", &large).is_err());
        assert!(t1.apply(0, "rag", &large).is_err());
        assert!(t1.apply(3, "rng", &large).is_err());
    }

    #[test]
    fn rule_validation() {
        assert!(MorphRule::prefix(1, ["f", "di", "do"]).is_err());
        assert!("C2aC1".parse::<Template>().is_err());
        assert!("C1aC2".parse::<Template>().is_err());
        assert_eq!(
            "C1C2aC3C3a".parse::<Template>().unwrap().to_string(),
            "C1C2aC3C3a"
        );
        let large = SegmentInventory::large();
        assert!(
            MorphRule::harmony_suffix(1, [("if", "uk"), ("en", "on"), ("ik", "uk")], &large)
                .is_err()
        );
        assert!(
            MorphRule::harmony_suffix(1, [("uf", "if"), ("en", "on"), ("ik", "uk")], &large)
                .is_err()
        );
        assert!(MorphRule::harmony_suffix(1, HARMONY_SET_2, &large).is_ok());
    }

    /// Brute-force harmony predicate: the suffix vowel is back iff any stem vowel is back.
    #[test]
    fn harmony_brute_force_over_stems() {
        let inv = SegmentInventory::large();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let stems =
            generate_roots(&[shape("CVC"), shape("CVCVC")], 42, &inv, true, &mut rng).unwrap();
        let rule = MorphRule::harmony_suffix(1, HARMONY_SET_1, &inv).unwrap();
        for stem in &stems {
            let stem_back = stem.chars().any(|c| "uoa".contains(c));
            for k in 0..3 {
                let word = rule.apply(k, stem, &inv).unwrap();
                let suffix_vowel = word.chars().nth(stem.len()).unwrap();
                assert_eq!("uo".contains(suffix_vowel), stem_back, "{word}");
                assert!(is_harmonic(&word, &inv).unwrap());
            }
        }
    }

    #[test]
    fn syllabify_examples() {
        let small = SegmentInventory::small();
        let large = SegmentInventory::large();
        assert_eq!(split_syllables("fifetos", &small), "fi.fe.tos");
        assert_eq!(split_syllables("rnagga", &large), "rnag.ga");
        assert_eq!(split_syllables("fetosup", &small), "fe.to.sup");
        assert_eq!(split_syllables("ranga", &large), "ran.ga");
        assert_eq!(split_syllables("rnaag", &large), "rna.ag");
        assert_eq!(syllabify("fifetos", &small).unwrap(), vec![2, 4]);
        assert!(matches!(syllabify("rng", &large), Err(Error::NoVowel(_))));
    }

    fn exp1_task(rng: &mut ChaCha8Rng, rules: Vec<MorphRule>) -> TaskSpec {
        let inv = SegmentInventory::small();
        let mut roots = generate_roots(&[shape("CVCVC")], 12, &inv, false, rng).unwrap();
        roots.extend(generate_roots(&[shape("CVC")], 12, &inv, false, rng).unwrap());
        TaskSpec {
            inventory: InventoryKind::Small,
            roots,
            rules,
        }
    }

    #[test]
    fn lexicon_counts_and_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let task = exp1_task(&mut rng, vec![MorphRule::prefix(1, PREFIX_SET_1).unwrap()]);
        let lex = build_lexicon(&task).unwrap();
        assert_eq!(lex.len(), 72);
        for w in &lex {
            let idx = w.inflections[&1];
            assert_eq!(&w.phones[..2], PREFIX_SET_1[idx]);
            assert_eq!(&w.phones[2..], task.roots[w.root]);
        }

        let two = TaskSpec {
            rules: vec![
                MorphRule::prefix(1, PREFIX_SET_1).unwrap(),
                MorphRule::suffix(2, SUFFIX_SET_1).unwrap(),
            ],
            ..task
        };
        let lex = build_lexicon(&two).unwrap();
        assert_eq!(lex.len(), 216);
        let distinct: HashSet<_> = lex.iter().map(|w| &w.phones).collect();
        assert_eq!(distinct.len(), 216);
    }

    #[test]
    fn split_sizes_and_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let task = exp1_task(&mut rng, vec![MorphRule::suffix(1, SUFFIX_SET_2).unwrap()]);
        let lex = build_lexicon(&task).unwrap();
        let (train, test) = split_lexicon(&lex, &mut rng).unwrap();
        assert_eq!((train.len(), test.len()), (48, 24));
        let mut all: Vec<_> = train
            .iter()
            .chain(&test)
            .map(|w| w.phones.clone())
            .collect();
        all.sort();
        let mut expected: Vec<_> = lex.iter().map(|w| w.phones.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn split_too_small() {
        let w = Word {
            phones: "fi".into(),
            root: 0,
            inflections: BTreeMap::new(),
            syllables: vec![],
        };
        assert!(matches!(
            split_lexicon(&[w], &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Stratify { .. })
        ));
    }

    #[test]
    fn lexicon_text_format() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let task = TaskSpec {
            inventory: InventoryKind::Small,
            roots: vec!["fetos".into()],
            rules: vec![MorphRule::prefix(1, PREFIX_SET_1).unwrap()],
        };
        let lex = build_lexicon(&task).unwrap();
        let text = lexicon_to_text(&lex);
        assert_eq!(
            text,
            "fifetos\t0\t1:0\t2,4\ndifetos\t0\t1:1\t2,4\ndofetos\t0\t1:2\t2,4\n"
        );
        assert_eq!(parse_lexicon(&text).unwrap(), lex);
        let _ = &mut rng;
    }
}
