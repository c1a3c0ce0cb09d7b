use std::collections::BTreeSet;
use std::path::Path;

use super::text::words;
use super::SignalError;

pub const LEXICON_VERSION: &str = "hedge-lexicon-v1";

const DEFAULT_DEFINITIVE: &[&str] = &[
    "definitely", "certainly", "clearly", "undoubtedly", "unquestionably", "absolutely",
    "surely", "obviously", "indisputably", "undeniably", "always", "conclusively",
];

const DEFAULT_HEDGE: &[&str] = &[
    "possibly", "maybe", "perhaps", "probably", "likely", "apparently", "presumably",
    "seemingly", "arguably", "potentially", "might", "may", "could", "reportedly",
];

/// Word lists for confident versus tentative language.
///
/// File format: plain text, one word per line under `[definitive]` and
/// `[hedge]` section headers. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HedgeLexicon {
    definitive: BTreeSet<String>,
    hedge: BTreeSet<String>,
}

impl Default for HedgeLexicon {
    fn default() -> Self {
        Self {
            definitive: DEFAULT_DEFINITIVE.iter().map(|w| w.to_string()).collect(),
            hedge: DEFAULT_HEDGE.iter().map(|w| w.to_string()).collect(),
        }
    }
}

impl HedgeLexicon {
    pub fn new<I, J, S, T>(definitive: I, hedge: J) -> Result<Self, SignalError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let norm = |w: &str| w.trim().to_lowercase();
        let lexicon = Self {
            definitive: definitive.into_iter().map(|w| norm(w.as_ref())).filter(|w| !w.is_empty()).collect(),
            hedge: hedge.into_iter().map(|w| norm(w.as_ref())).filter(|w| !w.is_empty()).collect(),
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    fn validate(&self) -> Result<(), SignalError> {
        if self.definitive.is_empty() || self.hedge.is_empty() {
            return Err(SignalError::Lexicon("both word lists must be non-empty".into()));
        }
        if let Some(w) = self.definitive.intersection(&self.hedge).next() {
            return Err(SignalError::Lexicon(format!("`{w}` appears in both lists")));
        }
        if let Some(w) = self.definitive.iter().chain(&self.hedge).find(|w| w.contains(char::is_whitespace)) {
            return Err(SignalError::Lexicon(format!("`{w}` is not a single word")));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, SignalError> {
        enum Section {
            None,
            Definitive,
            Hedge,
        }
        let mut section = Section::None;
        let (mut definitive, mut hedge) = (Vec::new(), Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.to_lowercase().as_str() {
                "[definitive]" => section = Section::Definitive,
                "[hedge]" => section = Section::Hedge,
                _ => match section {
                    Section::Definitive => definitive.push(line.to_string()),
                    Section::Hedge => hedge.push(line.to_string()),
                    Section::None => {
                        return Err(SignalError::Lexicon(format!(
                            "line {}: word outside a [definitive] or [hedge] section",
                            i + 1
                        )))
                    }
                },
            }
        }
        Self::new(definitive, hedge)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SignalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SignalError::Lexicon(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical file rendering; also used as the lexicon's cache digest input.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from("[definitive]\n");
        for w in &self.definitive {
            out.push_str(w);
            out.push('\n');
        }
        out.push_str("[hedge]\n");
        for w in &self.hedge {
            out.push_str(w);
            out.push('\n');
        }
        out
    }

    /// (definitive, hedge) whole-word counts, case-insensitive.
    pub fn count(&self, text: &str) -> (usize, usize) {
        words(text).fold((0, 0), |(d, h), w| {
            (
                d + usize::from(self.definitive.contains(&w)),
                h + usize::from(self.hedge.contains(&w)),
            )
        })
    }
}
