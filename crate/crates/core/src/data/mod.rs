//! Glyph ingestion: image normalization, corpus indexing, train/test
//! splitting and sample assembly.

mod corpus;
mod glyph;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use corpus::{
    build_samples, render_source_glyph, BuiltSamples, Corpus, DirectoryGlyphProvider,
    GlyphProvider, MissingPolicy, Partition, SkippedSample, TrainingSample,
};
pub use glyph::{
    normalize_ground_truth, scaled_dimensions, BitDepth, GlyphImage, RawGlyphImage, GLYPH_SIZE,
};
pub use split::{split_dataset, DatasetSplit, DatasetStatistics, SplitTag};

use crate::error::{Error, Result};

/// 1-based calligraphy style label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StyleLabel(u16);

impl StyleLabel {
    /// Validates `value` against a configured number of styles.
    pub fn new(value: u16, styles: usize) -> Result<Self> {
        if value == 0 || value as usize > styles {
            return Err(Error::range("style label", value as i64, 1, styles as i64));
        }
        Ok(Self(value))
    }

    /// Unchecked constructor for labels read from corpus directory names.
    pub fn from_raw(value: u16) -> Option<Self> {
        (value > 0).then_some(Self(value))
    }

    pub fn get(self) -> u16 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for StyleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for StyleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<u16>()
            .ok()
            .and_then(Self::from_raw)
            .ok_or_else(|| Error::Config(format!("invalid style label {s:?}")))
    }
}
