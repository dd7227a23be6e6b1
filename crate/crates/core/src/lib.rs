//! Multi-style Chinese calligraphy glyph generation.
//!
//! A font-rendered glyph, a style label and the character's component
//! sequence condition a U-Net generator trained against a pair
//! discriminator with an auxiliary style classifier.

pub mod components;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod objective;
pub mod train;

pub use components::{CharacterCode, ComponentDictionary, ComponentId, ComponentSequence};
pub use data::{GlyphImage, StyleLabel, TrainingSample};
pub use error::{Error, Result};
