//! Character-to-component decomposition.
//!
//! A dictionary maps each character to the ordered list of component ids it
//! is built from. The on-disk form is one character per line:
//!
//! ```text
//! 好<TAB>46 48 81
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of the component vocabulary of the standard decomposition system.
pub const DEFAULT_VOCAB_SIZE: u16 = 517;

/// A Unicode scalar identifying one character.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CharacterCode(char);

impl CharacterCode {
    pub fn new(c: char) -> Self {
        Self(c)
    }

    pub fn as_char(self) -> char {
        self.0
    }

    pub fn code_point(self) -> u32 {
        self.0 as u32
    }

    /// Upper-case hexadecimal code point, as used in corpus file names (`4E00`).
    pub fn hex(self) -> String {
        format!("{:04X}", self.0 as u32)
    }

    /// Parses the hexadecimal form produced by [`CharacterCode::hex`].
    pub fn from_hex(s: &str) -> Option<Self> {
        let v = u32::from_str_radix(s, 16).ok()?;
        char::from_u32(v).map(Self)
    }
}

impl From<char> for CharacterCode {
    fn from(c: char) -> Self {
        Self(c)
    }
}

impl fmt::Display for CharacterCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (U+{})", self.0, self.hex())
    }
}

/// 1-based id into the component vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentId(u16);

impl ComponentId {
    pub fn new(value: u16, vocab_size: u16) -> Result<Self> {
        if value == 0 || value > vocab_size {
            return Err(Error::range("component id", value as i64, 1, vocab_size as i64));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> u16 {
        self.0
    }

    /// Zero-based row in an embedding table.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

/// Non-empty ordered component ids of one character.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ComponentSequence(Vec<ComponentId>);

impl ComponentSequence {
    pub fn new(ids: Vec<ComponentId>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidSequence("empty component sequence".into()));
        }
        Ok(Self(ids))
    }

    /// Builds a sequence from raw integers, checking each against `vocab_size`.
    pub fn from_raw(ids: &[u16], vocab_size: u16) -> Result<Self> {
        let ids = ids
            .iter()
            .map(|&v| ComponentId::new(v, vocab_size))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids)
    }

    pub fn ids(&self) -> &[ComponentId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn raw(&self) -> Vec<u16> {
        self.0.iter().map(|c| c.get()).collect()
    }
}

/// Immutable character → component sequence table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentDictionary {
    entries: BTreeMap<CharacterCode, ComponentSequence>,
    vocab_size: u16,
}

impl ComponentDictionary {
    pub fn new(vocab_size: u16) -> Self {
        Self {
            entries: BTreeMap::new(),
            vocab_size,
        }
    }

    /// Adds an entry; fails if the character is already present or an id is out of range.
    pub fn insert(&mut self, ch: CharacterCode, seq: ComponentSequence) -> Result<()> {
        if let Some(bad) = seq.ids().iter().find(|id| id.get() > self.vocab_size) {
            return Err(Error::range(
                "component id",
                bad.get() as i64,
                1,
                self.vocab_size as i64,
            ));
        }
        if self.entries.contains_key(&ch) {
            return Err(Error::DuplicateCharacter {
                path: "<memory>".into(),
                line: 0,
                character: ch,
            });
        }
        self.entries.insert(ch, seq);
        Ok(())
    }

    pub fn vocab_size(&self) -> u16 {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, ch: CharacterCode) -> bool {
        self.entries.contains_key(&ch)
    }

    pub fn iter(&self) -> impl Iterator<Item = (CharacterCode, &ComponentSequence)> {
        self.entries.iter().map(|(c, s)| (*c, s))
    }

    /// Returns the stored component sequence of `ch`.
    pub fn decompose(&self, ch: CharacterCode) -> Result<&ComponentSequence> {
        self.entries.get(&ch).ok_or(Error::MissingCharacter(ch))
    }

    /// Characters of `chars` that have no entry. Empty means full coverage.
    pub fn coverage_report<'a>(
        &self,
        chars: impl IntoIterator<Item = &'a CharacterCode>,
    ) -> BTreeSet<CharacterCode> {
        chars
            .into_iter()
            .filter(|c| !self.entries.contains_key(c))
            .copied()
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_vocab(path, DEFAULT_VOCAB_SIZE)
    }

    pub fn load_with_vocab(path: impl AsRef<Path>, vocab_size: u16) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path, vocab_size)
    }

    /// Parses dictionary text. `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path, vocab_size: u16) -> Result<Self> {
        let mut dict = Self::new(vocab_size);
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: &str| Error::DictionaryParse {
                path: origin.to_path_buf(),
                line: line_no,
                reason: reason.to_string(),
            };
            let (head, tail) = line
                .split_once('\t')
                .ok_or_else(|| malformed("missing tab separator"))?;
            let mut chars = head.chars();
            let ch = match (chars.next(), chars.next()) {
                (Some(c), None) => CharacterCode::new(c),
                _ => return Err(malformed("expected exactly one character before the tab")),
            };
            let mut ids = Vec::new();
            for tok in tail.split(' ').filter(|t| !t.is_empty()) {
                let value: u32 = tok
                    .parse()
                    .map_err(|_| malformed(&format!("invalid component id {tok:?}")))?;
                if value == 0 || value > vocab_size as u32 {
                    return Err(Error::ComponentRange {
                        path: origin.to_path_buf(),
                        line: line_no,
                        id: value,
                        vocab_size,
                    });
                }
                ids.push(ComponentId(value as u16));
            }
            if ids.is_empty() {
                return Err(malformed("no component ids"));
            }
            if dict.entries.contains_key(&ch) {
                return Err(Error::DuplicateCharacter {
                    path: origin.to_path_buf(),
                    line: line_no,
                    character: ch,
                });
            }
            dict.entries.insert(ch, ComponentSequence(ids));
        }
        Ok(dict)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        for (ch, seq) in &self.entries {
            let ids: Vec<String> = seq.ids().iter().map(|id| id.get().to_string()).collect();
            writeln!(out, "{}\t{}", ch.as_char(), ids.join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}
