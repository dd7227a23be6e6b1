use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::StyleLabel;
use crate::components::CharacterCode;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

impl SplitTag {
    fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Test => "test",
        }
    }
}

/// Character-level train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_chars: BTreeSet<CharacterCode>,
    pub test_chars: BTreeSet<CharacterCode>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn tag(&self, ch: CharacterCode) -> Option<SplitTag> {
        if self.test_chars.contains(&ch) {
            Some(SplitTag::Test)
        } else if self.train_chars.contains(&ch) {
            Some(SplitTag::Train)
        } else {
            None
        }
    }

    /// All `(character, style)` availabilities of training characters.
    pub fn train_pairs(
        &self,
        chars_by_style: &BTreeMap<StyleLabel, BTreeSet<CharacterCode>>,
    ) -> Vec<(CharacterCode, StyleLabel)> {
        chars_by_style
            .iter()
            .flat_map(|(s, chars)| {
                chars
                    .iter()
                    .filter(|c| self.train_chars.contains(c))
                    .map(move |c| (*c, *s))
            })
            .collect()
    }

    /// Text manifest: a seed header and one `<hex>\t<char>\t<tag>` line per
    /// character, ordered by code point.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# brushgan split v1").unwrap();
        writeln!(out, "# seed {}", self.seed).unwrap();
        let all: BTreeSet<_> = self.train_chars.union(&self.test_chars).collect();
        for ch in all {
            let tag = self.tag(*ch).expect("character comes from one of the sets");
            writeln!(out, "{}\t{}\t{}", ch.hex(), ch.as_char(), tag.as_str()).unwrap();
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut split = DatasetSplit {
            train_chars: BTreeSet::new(),
            test_chars: BTreeSet::new(),
            seed: 0,
        };
        for (i, line) in text.lines().enumerate() {
            let bad = |why: &str| Error::Config(format!("split manifest line {}: {why}", i + 1));
            if let Some(rest) = line.strip_prefix("# seed ") {
                split.seed = rest.trim().parse().map_err(|_| bad("invalid seed"))?;
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [hex, _, tag] = fields[..] else {
                return Err(bad("expected 3 tab-separated fields"));
            };
            let ch = CharacterCode::from_hex(hex).ok_or_else(|| bad("invalid code point"))?;
            let fresh = match tag {
                "train" => split.train_chars.insert(ch),
                "test" => split.test_chars.insert(ch),
                _ => return Err(bad("tag must be train or test")),
            };
            if !fresh || (split.train_chars.contains(&ch) && split.test_chars.contains(&ch)) {
                return Err(bad("character listed twice"));
            }
        }
        Ok(split)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_manifest(&std::fs::read_to_string(path)?)
    }
}

/// Samples `test_count` characters without replacement from the characters
/// present in every style; everything else is training data.
pub fn split_dataset(
    chars_by_style: &BTreeMap<StyleLabel, BTreeSet<CharacterCode>>,
    test_count: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let mut styles = chars_by_style.values();
    let common: Vec<CharacterCode> = match styles.next() {
        Some(first) => first
            .iter()
            .filter(|c| chars_by_style.values().all(|s| s.contains(c)))
            .copied()
            .collect(),
        None => Vec::new(),
    };
    if test_count > common.len() {
        return Err(Error::Config(format!(
            "test count {test_count} exceeds the {} characters available in all styles",
            common.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test_chars: BTreeSet<CharacterCode> =
        rand::seq::index::sample(&mut rng, common.len(), test_count)
            .into_iter()
            .map(|i| common[i])
            .collect();
    let train_chars = chars_by_style
        .values()
        .flatten()
        .filter(|c| !test_chars.contains(c))
        .copied()
        .collect();
    Ok(DatasetSplit {
        train_chars,
        test_chars,
        seed,
    })
}

/// Per-style image counts of a split corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetStatistics {
    /// style → (training images, test images)
    pub per_style: BTreeMap<StyleLabel, (usize, usize)>,
}

impl DatasetStatistics {
    /// Counts images given the number of images per `(style, character)`.
    pub fn tally(
        split: &DatasetSplit,
        image_counts: impl IntoIterator<Item = ((StyleLabel, CharacterCode), usize)>,
    ) -> Self {
        let mut per_style: BTreeMap<StyleLabel, (usize, usize)> = BTreeMap::new();
        for ((style, ch), n) in image_counts {
            let row = per_style.entry(style).or_default();
            match split.tag(ch) {
                Some(SplitTag::Test) => row.1 += n,
                Some(SplitTag::Train) => row.0 += n,
                None => {}
            }
        }
        Self { per_style }
    }

    pub fn train_total(&self) -> usize {
        self.per_style.values().map(|r| r.0).sum()
    }

    pub fn test_total(&self) -> usize {
        self.per_style.values().map(|r| r.1).sum()
    }

    pub fn total(&self) -> usize {
        self.train_total() + self.test_total()
    }

    /// Training / Test / Total rows with one column per style plus a total column.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let mut header = format!("{:<10}", "Style");
        for s in self.per_style.keys() {
            write!(header, "{:>8}", s.get()).unwrap();
        }
        write!(header, "{:>8}", "Total").unwrap();
        writeln!(out, "{header}").unwrap();
        type Row = (&'static str, fn(&(usize, usize)) -> usize);
        let rows: [Row; 3] = [
            ("Training", |r| r.0),
            ("Test", |r| r.1),
            ("Total", |r| r.0 + r.1),
        ];
        for (name, pick) in rows {
            let mut line = format!("{name:<10}");
            let mut sum = 0;
            for r in self.per_style.values() {
                write!(line, "{:>8}", pick(r)).unwrap();
                sum += pick(r);
            }
            write!(line, "{sum:>8}").unwrap();
            writeln!(out, "{line}").unwrap();
        }
        out
    }
}
