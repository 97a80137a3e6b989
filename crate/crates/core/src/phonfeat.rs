//! Phonetic feature encoding.
//!
//! Every phone is a vector of 12 binary features. The last feature marks the
//! word-boundary pattern and is never set for a real segment. Two inventories
//! are provided: a 12-segment one for the prefix/suffix experiments and a
//! 20-segment one for the template and harmony experiments.

use std::fmt;

use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 12;

/// Named feature positions, in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "consonant",
    "voiced",
    "labial",
    "coronal",
    "dorsal",
    "nasal",
    "continuant",
    "high",
    "low",
    "back",
    "round",
    "boundary",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Feature {
    Consonant = 0,
    Voiced,
    Labial,
    Coronal,
    Dorsal,
    Nasal,
    Continuant,
    High,
    Low,
    Back,
    Round,
    Boundary,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FeatureVector([bool; FEATURE_COUNT]);

impl FeatureVector {
    fn with(features: &[Feature]) -> Self {
        let mut bits = [false; FEATURE_COUNT];
        for &f in features {
            bits[f as usize] = true;
        }
        FeatureVector(bits)
    }

    pub fn from_bits(bits: [bool; FEATURE_COUNT]) -> Self {
        FeatureVector(bits)
    }

    pub fn bits(&self) -> &[bool; FEATURE_COUNT] {
        &self.0
    }

    pub fn get(&self, feature: Feature) -> bool {
        self.0[feature as usize]
    }

    pub fn to_f64(&self) -> [f64; FEATURE_COUNT] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }

    /// Squared Euclidean distance from a real-valued pattern.
    pub fn distance_sq(&self, v: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(v)
            .map(|(&b, &x)| {
                let d = x - if b { 1.0 } else { 0.0 };
                d * d
            })
            .sum()
    }

    pub fn hamming(&self, other: &FeatureVector) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// The word-boundary input pattern: only the boundary feature is on.
pub fn boundary_vector() -> FeatureVector {
    FeatureVector::with(&[Feature::Boundary])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub symbol: char,
    pub features: FeatureVector,
}

impl Segment {
    pub fn is_vowel(&self) -> bool {
        !self.features.get(Feature::Consonant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InventoryKind {
    Small,
    Large,
}

impl fmt::Display for InventoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InventoryKind::Small => "small",
            InventoryKind::Large => "large",
        })
    }
}

fn feature_table(symbol: char) -> Option<FeatureVector> {
    use Feature::*;
    let fs: &[Feature] = match symbol {
        'p' => &[Consonant, Labial],
        'b' => &[Consonant, Voiced, Labial],
        'f' => &[Consonant, Labial, Continuant],
        'm' => &[Consonant, Voiced, Labial, Nasal],
        'w' => &[Consonant, Voiced, Labial, Dorsal, Continuant, High, Round],
        't' => &[Consonant, Coronal],
        'd' => &[Consonant, Voiced, Coronal],
        's' => &[Consonant, Coronal, Continuant],
        'z' => &[Consonant, Voiced, Coronal, Continuant],
        'n' => &[Consonant, Voiced, Coronal, Nasal],
        'r' => &[Consonant, Voiced, Coronal, Continuant, Dorsal],
        'l' => &[Consonant, Voiced, Coronal, Continuant, High],
        'k' => &[Consonant, Dorsal, High, Back],
        'g' => &[Consonant, Voiced, Dorsal, High, Back],
        'x' => &[Consonant, Dorsal, Continuant, High, Back],
        'i' => &[Voiced, Continuant, High],
        'e' => &[Voiced, Continuant],
        'u' => &[Voiced, Continuant, High, Back, Round],
        'o' => &[Voiced, Continuant, Back, Round],
        'a' => &[Voiced, Continuant, Low, Back],
        _ => return None,
    };
    Some(FeatureVector::with(fs))
}

const SMALL_SYMBOLS: &str = "fdbztspnieou";
const LARGE_SYMBOLS: &str = "fdbztspnieouakmxgrlw";

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInventory {
    kind: InventoryKind,
    segments: Vec<Segment>,
}

impl SegmentInventory {
    pub fn new(kind: InventoryKind) -> Self {
        let symbols = match kind {
            InventoryKind::Small => SMALL_SYMBOLS,
            InventoryKind::Large => LARGE_SYMBOLS,
        };
        let segments = symbols
            .chars()
            .map(|symbol| Segment {
                symbol,
                features: feature_table(symbol).expect("symbol in feature table"),
            })
            .collect();
        SegmentInventory { kind, segments }
    }

    pub fn small() -> Self {
        Self::new(InventoryKind::Small)
    }

    pub fn large() -> Self {
        Self::new(InventoryKind::Large)
    }

    pub fn kind(&self) -> InventoryKind {
        self.kind
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn contains(&self, symbol: char) -> bool {
        self.segments.iter().any(|s| s.symbol == symbol)
    }

    pub fn segment(&self, symbol: char) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.symbol == symbol)
            .ok_or(Error::UnknownSegment(symbol))
    }

    pub fn encode(&self, symbol: char) -> Result<FeatureVector> {
        self.segment(symbol).map(|s| s.features)
    }

    pub fn is_vowel(&self, symbol: char) -> Result<bool> {
        self.segment(symbol).map(Segment::is_vowel)
    }

    pub fn vowels(&self) -> impl Iterator<Item = char> + '_ {
        self.segments
            .iter()
            .filter(|s| s.is_vowel())
            .map(|s| s.symbol)
    }

    pub fn consonants(&self) -> impl Iterator<Item = char> + '_ {
        self.segments
            .iter()
            .filter(|s| !s.is_vowel())
            .map(|s| s.symbol)
    }

    /// Nearest segment by Euclidean distance; ties go to the earlier segment.
    pub fn decode(&self, v: &[f64]) -> Result<&Segment> {
        if v.len() != FEATURE_COUNT {
            return Err(Error::Dimension {
                context: "decode_vector",
                expected: FEATURE_COUNT,
                got: v.len(),
            });
        }
        Ok(&self.segments[self.decode_index(v)])
    }

    pub(crate) fn decode_index(&self, v: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.segments.iter().enumerate() {
            let d = s.features.distance_sq(v);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Tab-separated feature table with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("symbol");
        for name in FEATURE_NAMES {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for s in &self.segments {
            out.push(s.symbol);
            for &b in s.features.bits() {
                out.push('\t');
                out.push(if b { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses a table written by [`SegmentInventory::to_tsv`] into
    /// `(symbol, features)` rows.
    pub fn parse_tsv(text: &str) -> Result<Vec<(char, FeatureVector)>> {
        let bad = |msg: String| Error::Config(format!("feature table: {msg}"));
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != FEATURE_COUNT + 1 {
                return Err(bad(format!("line {}: expected 13 columns", lineno + 1)));
            }
            let mut chars = cols[0].chars();
            let symbol = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(bad(format!("line {}: bad symbol", lineno + 1))),
            };
            let mut bits = [false; FEATURE_COUNT];
            for (bit, col) in bits.iter_mut().zip(&cols[1..]) {
                *bit = match *col {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(format!("line {}: bit `{other}`", lineno + 1))),
                };
            }
            rows.push((symbol, FeatureVector(bits)));
        }
        Ok(rows)
    }
}
