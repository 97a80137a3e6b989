use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown segment `{0}`")]
    UnknownSegment(char),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("malformed topology: {0}")]
    Topology(String),

    #[error("cannot generate {count} distinct {shape} roots from this inventory")]
    RootCount { shape: String, count: usize },

    #[error("rule not applicable: {0}")]
    Rule(String),

    #[error("cannot syllabify `{0}`: no vowel")]
    NoVowel(String),

    #[error("lexicon too small to stratify: need {needed} training words, quota is {quota}")]
    Stratify { needed: usize, quota: usize },

    #[error("invalid word: {0}")]
    Word(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad weight file: {0}")]
    WeightFormat(String),

    #[error("{context}: {source}")]
    Run {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
