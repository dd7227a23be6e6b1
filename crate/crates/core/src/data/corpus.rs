use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::glyph::{normalize_ground_truth, GlyphImage, RawGlyphImage};
use super::split::{DatasetSplit, DatasetStatistics};
use super::StyleLabel;
use crate::components::{CharacterCode, ComponentDictionary, ComponentSequence};
use crate::error::{Error, Result};

/// Source of font-rendered input glyphs.
pub trait GlyphProvider {
    fn raw_glyph(&self, ch: CharacterCode) -> Result<RawGlyphImage>;
}

/// Pre-rendered glyphs stored as `<root>/<HEX>.png`.
#[derive(Clone, Debug)]
pub struct DirectoryGlyphProvider {
    root: PathBuf,
}

impl DirectoryGlyphProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, ch: CharacterCode) -> PathBuf {
        self.root.join(format!("{}.png", ch.hex()))
    }
}

impl GlyphProvider for DirectoryGlyphProvider {
    fn raw_glyph(&self, ch: CharacterCode) -> Result<RawGlyphImage> {
        let path = self.path_for(ch);
        if !path.is_file() {
            return Err(Error::MissingGlyph(ch));
        }
        RawGlyphImage::load(&path).map_err(|e| Error::Sample {
            path,
            reason: e.to_string(),
        })
    }
}

/// Renders the input image `x` for a character. Inputs that are not already
/// 256×256 go through the same normalization as ground-truth images.
pub fn render_source_glyph(ch: CharacterCode, provider: &dyn GlyphProvider) -> Result<GlyphImage> {
    normalize_ground_truth(&provider.raw_glyph(ch)?)
}

/// One training or evaluation example.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub character: CharacterCode,
    pub style: StyleLabel,
    pub source: GlyphImage,
    pub target: GlyphImage,
    pub components: ComponentSequence,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MissingPolicy {
    #[default]
    Abort,
    Skip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    Train,
    Test,
}

#[derive(Clone, Debug)]
pub struct SkippedSample {
    pub character: CharacterCode,
    pub style: StyleLabel,
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct BuiltSamples {
    pub samples: Vec<TrainingSample>,
    pub skipped: Vec<SkippedSample>,
}

/// Index over `<root>/<style>/<HEX>.png` ground truth (extra images of the
/// same character as `<HEX>_<n>.png`) and `<root>/source/<HEX>.png` inputs.
#[derive(Clone, Debug)]
pub struct Corpus {
    root: PathBuf,
    images: BTreeMap<(StyleLabel, CharacterCode), Vec<PathBuf>>,
    cache: Option<PathBuf>,
}

impl Corpus {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let mut images: BTreeMap<(StyleLabel, CharacterCode), Vec<PathBuf>> = BTreeMap::new();
        for entry in std::fs::read_dir(&root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(style) = name.parse::<u16>().ok().and_then(StyleLabel::from_raw) else {
                if name != "source" {
                    log::warn!("ignoring corpus directory {name:?}");
                }
                continue;
            };
            for file in std::fs::read_dir(entry.path())? {
                let path = file?.path();
                match parse_image_name(&path) {
                    Some(ch) => images.entry((style, ch)).or_default().push(path),
                    None => log::warn!("ignoring {}", path.display()),
                }
            }
        }
        for paths in images.values_mut() {
            paths.sort();
        }
        if images.is_empty() {
            return Err(Error::Config(format!(
                "no style directories with glyph images under {}",
                root.display()
            )));
        }
        Ok(Self {
            root,
            images,
            cache: None,
        })
    }

    /// Reads normalized tensors from `dir` when present instead of re-normalizing.
    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache = Some(dir.into());
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn source_provider(&self) -> DirectoryGlyphProvider {
        DirectoryGlyphProvider::new(self.root.join("source"))
    }

    pub fn styles(&self) -> BTreeSet<StyleLabel> {
        self.images.keys().map(|(s, _)| *s).collect()
    }

    pub fn chars_by_style(&self) -> BTreeMap<StyleLabel, BTreeSet<CharacterCode>> {
        let mut map: BTreeMap<StyleLabel, BTreeSet<CharacterCode>> = BTreeMap::new();
        for (s, c) in self.images.keys() {
            map.entry(*s).or_default().insert(*c);
        }
        map
    }

    pub fn characters(&self) -> BTreeSet<CharacterCode> {
        self.images.keys().map(|(_, c)| *c).collect()
    }

    pub fn image_counts(&self) -> impl Iterator<Item = ((StyleLabel, CharacterCode), usize)> + '_ {
        self.images.iter().map(|(k, v)| (*k, v.len()))
    }

    pub fn images(&self) -> impl Iterator<Item = (StyleLabel, CharacterCode, &Path)> + '_ {
        self.images
            .iter()
            .flat_map(|((s, c), paths)| paths.iter().map(move |p| (*s, *c, p.as_path())))
    }

    pub fn statistics(&self, split: &DatasetSplit) -> DatasetStatistics {
        DatasetStatistics::tally(split, self.image_counts())
    }

    fn target_cache_path(&self, style: StyleLabel, image: &Path) -> Option<PathBuf> {
        let stem = image.file_stem()?.to_string_lossy().into_owned();
        let cache = self.cache.as_ref()?;
        Some(cache.join(style.to_string()).join(format!("{stem}.bgi")))
    }

    fn source_cache_path(&self, ch: CharacterCode) -> Option<PathBuf> {
        let cache = self.cache.as_ref()?;
        Some(cache.join("source").join(format!("{}.bgi", ch.hex())))
    }

    pub fn target_glyph(&self, style: StyleLabel, image: &Path) -> Result<GlyphImage> {
        if let Some(p) = self.target_cache_path(style, image).filter(|p| p.is_file()) {
            return GlyphImage::read_cache(BufReader::new(File::open(p)?));
        }
        RawGlyphImage::load(image)
            .and_then(|raw| normalize_ground_truth(&raw))
            .map_err(|e| Error::Sample {
                path: image.to_path_buf(),
                reason: e.to_string(),
            })
    }

    pub fn source_glyph(&self, ch: CharacterCode) -> Result<GlyphImage> {
        if let Some(p) = self.source_cache_path(ch).filter(|p| p.is_file()) {
            return GlyphImage::read_cache(BufReader::new(File::open(p)?));
        }
        render_source_glyph(ch, &self.source_provider())
    }

    /// Writes normalized tensors for every image (and every available source
    /// glyph) under `dir`, returning the number of files written.
    pub fn write_cache(&self, dir: &Path) -> Result<usize> {
        let writer = Corpus {
            cache: Some(dir.to_path_buf()),
            ..self.clone()
        };
        let plain = Corpus {
            cache: None,
            ..self.clone()
        };
        let mut written = 0;
        for (style, _, path) in self.images() {
            let Ok(img) = plain.target_glyph(style, path) else {
                continue;
            };
            let out = writer.target_cache_path(style, path).expect("cache configured");
            write_glyph(&out, &img)?;
            written += 1;
        }
        for ch in self.characters() {
            if let Ok(img) = plain.source_glyph(ch) {
                write_glyph(&writer.source_cache_path(ch).expect("cache configured"), &img)?;
                written += 1;
            }
        }
        Ok(written)
    }
}

fn write_glyph(path: &Path, img: &GlyphImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    img.write_cache(&mut out)?;
    out.flush()?;
    Ok(())
}

fn parse_image_name(path: &Path) -> Option<CharacterCode> {
    if !path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
    {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let hex = match stem.split_once('_') {
        Some((hex, n)) if n.parse::<u32>().is_ok() => hex,
        Some(_) => return None,
        None => stem,
    };
    CharacterCode::from_hex(hex)
}

/// Materializes one sample per ground-truth image of the chosen partition.
pub fn build_samples(
    split: &DatasetSplit,
    partition: Partition,
    corpus: &Corpus,
    dict: &ComponentDictionary,
    policy: MissingPolicy,
) -> Result<BuiltSamples> {
    let chars = match partition {
        Partition::Train => &split.train_chars,
        Partition::Test => &split.test_chars,
    };
    let mut out = BuiltSamples::default();
    let mut sources: BTreeMap<CharacterCode, GlyphImage> = BTreeMap::new();
    for (style, ch, path) in corpus.images() {
        if !chars.contains(&ch) {
            continue;
        }
        let result = (|| {
            let components = dict.decompose(ch)?.clone();
            let source = match sources.get(&ch) {
                Some(s) => s.clone(),
                None => {
                    let s = corpus.source_glyph(ch)?;
                    sources.insert(ch, s.clone());
                    s
                }
            };
            let target = corpus.target_glyph(style, path)?;
            Ok::<_, Error>(TrainingSample {
                character: ch,
                style,
                source,
                target,
                components,
            })
        })();
        match (result, policy) {
            (Ok(sample), _) => out.samples.push(sample),
            (Err(e), MissingPolicy::Abort) => return Err(e),
            (Err(e), MissingPolicy::Skip) => {
                log::warn!("skipping {}: {e}", path.display());
                out.skipped.push(SkippedSample {
                    character: ch,
                    style,
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if !out.skipped.is_empty() {
        log::info!("skipped {} samples", out.skipped.len());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_names() {
        let p = |s: &str| parse_image_name(Path::new(s));
        assert_eq!(p("x/4E00.png"), Some('一'.into()));
        assert_eq!(p("x/4E00_2.png"), Some('一'.into()));
        assert_eq!(p("x/4E00_b.png"), None);
        assert_eq!(p("x/4E00.txt"), None);
    }

    #[test]
    fn directory_provider_missing_glyph() {
        let dir = tempfile::tempdir().unwrap();
        let provider = DirectoryGlyphProvider::new(dir.path());
        assert!(matches!(
            render_source_glyph('一'.into(), &provider),
            Err(Error::MissingGlyph(_))
        ));
    }
}
