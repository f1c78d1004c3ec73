//! Artwork records, content policy, and style-proportional curation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CORPUS_JSONL: &str = include_str!("../data/artworks.jsonl");
pub const WIKIART_STYLES_JSON: &str = include_str!("../data/wikiart_styles.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentFlag {
    Provocative,
    Melancholic,
    Sexual,
    Violent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artwork {
    pub id: String,
    pub artwork_name: String,
    #[serde(default)]
    pub artwork_explanation: String,
    pub artist_name: String,
    #[serde(default)]
    pub artist_explanation: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub year: String,
    pub style: String,
    #[serde(default)]
    pub media: String,
    #[serde(default)]
    pub content_flags: BTreeSet<ContentFlag>,
    /// Image path or URL used on export.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl Artwork {
    fn check(&self) -> Result<(), String> {
        for (field, value) in [
            ("id", &self.id),
            ("artwork_name", &self.artwork_name),
            ("artist_name", &self.artist_name),
            ("style", &self.style),
        ] {
            if value.trim().is_empty() {
                return Err(format!("{field} is empty"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate artwork id {0:?}")]
    DuplicateId(String),
    #[error("malformed artwork record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("style distribution is empty")]
    EmptyDistribution,
    #[error("target total must be at least 1")]
    InvalidTarget,
    #[error("style {style:?} needs {need} eligible artworks but only {have} are available")]
    InsufficientEligible { style: String, need: u64, have: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Immutable, id-indexed artwork collection.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    artworks: Vec<Artwork>,
    by_id: HashMap<String, usize>,
}

impl CorpusStore {
    pub fn from_artworks(artworks: impl IntoIterator<Item = Artwork>) -> Result<Self, CorpusError> {
        let mut store = CorpusStore::default();
        for (idx, art) in artworks.into_iter().enumerate() {
            art.check().map_err(|reason| CorpusError::MalformedRecord { line: idx + 1, reason })?;
            store.insert(art)?;
        }
        Ok(store)
    }

    fn insert(&mut self, art: Artwork) -> Result<(), CorpusError> {
        if self.by_id.contains_key(&art.id) {
            return Err(CorpusError::DuplicateId(art.id));
        }
        self.by_id.insert(art.id.clone(), self.artworks.len());
        self.artworks.push(art);
        Ok(())
    }

    pub fn default_store() -> Self {
        import_corpus_str(DEFAULT_CORPUS_JSONL).expect("shipped corpus is valid")
    }

    pub fn get(&self, id: &str) -> Option<&Artwork> {
        self.by_id.get(id).map(|&i| &self.artworks[i])
    }

    pub fn artworks(&self) -> &[Artwork] {
        &self.artworks
    }

    pub fn len(&self) -> usize {
        self.artworks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.artworks.is_empty()
    }

    /// Artwork counts per category, as a distribution.
    pub fn category_counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for art in &self.artworks {
            *out.entry(art.category.clone()).or_default() += 1;
        }
        out
    }
}

pub fn import_corpus_reader<R: BufRead>(reader: R) -> Result<CorpusStore, CorpusError> {
    let mut store = CorpusStore::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let art: Artwork = serde_json::from_str(&line)
            .map_err(|e| CorpusError::MalformedRecord { line: idx + 1, reason: e.to_string() })?;
        art.check().map_err(|reason| CorpusError::MalformedRecord { line: idx + 1, reason })?;
        store.insert(art)?;
    }
    Ok(store)
}

pub fn import_corpus_str(source: &str) -> Result<CorpusStore, CorpusError> {
    import_corpus_reader(source.as_bytes())
}

pub fn import_corpus(path: impl AsRef<Path>) -> Result<CorpusStore, CorpusError> {
    let file = std::fs::File::open(path)?;
    import_corpus_reader(std::io::BufReader::new(file))
}

/// Reference counts per style.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StyleDistribution {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl StyleDistribution {
    pub fn new(counts: BTreeMap<String, u64>) -> Result<Self, CorpusError> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(CorpusError::EmptyDistribution);
        }
        Ok(StyleDistribution { counts, total })
    }

    /// Parses a JSON object mapping style names to counts.
    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        StyleDistribution::new(serde_json::from_str(json)?)
    }

    /// The WikiArt style portions used as the default curation reference.
    pub fn wikiart() -> Self {
        StyleDistribution::from_json(WIKIART_STYLES_JSON).expect("shipped reference is valid")
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Per-style allocation for a curated subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationPlan {
    pub allocations: BTreeMap<String, u64>,
    pub target_total: u64,
}

impl CurationPlan {
    pub fn get(&self, style: &str) -> u64 {
        self.allocations.get(style).copied().unwrap_or(0)
    }
}

/// Largest-remainder (Hare quota) allocation of `target_total` items.
///
/// Each style first receives `floor(target * count / total)`; leftover
/// seats go to the largest remainders, ties broken by style name.
pub fn allocate_by_style(reference: &StyleDistribution, target_total: u64) -> Result<CurationPlan, CorpusError> {
    if target_total == 0 {
        return Err(CorpusError::InvalidTarget);
    }
    let total = u128::from(reference.total);
    let target = u128::from(target_total);
    let mut allocations = BTreeMap::new();
    // (remainder numerator, style); all remainders share the denominator `total`
    let mut remainders: Vec<(u128, &str)> = Vec::with_capacity(reference.counts.len());
    let mut assigned: u128 = 0;
    for (style, &count) in &reference.counts {
        let scaled = target * u128::from(count);
        let floor = scaled / total;
        assigned += floor;
        allocations.insert(style.clone(), floor as u64);
        remainders.push((scaled % total, style));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let leftover = (target - assigned) as usize;
    for (_, style) in remainders.into_iter().take(leftover) {
        *allocations.get_mut(style).expect("style present") += 1;
    }
    Ok(CurationPlan { allocations, target_total })
}

/// Content flags excluded from sampling.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentPolicy {
    pub excluded: BTreeSet<ContentFlag>,
}

impl ContentPolicy {
    pub fn allow_all() -> Self {
        ContentPolicy::default()
    }

    /// Excludes sexual and violent material, the default for younger audiences.
    pub fn school_default() -> Self {
        ContentPolicy { excluded: [ContentFlag::Sexual, ContentFlag::Violent].into_iter().collect() }
    }

    pub fn excluding(flags: impl IntoIterator<Item = ContentFlag>) -> Self {
        ContentPolicy { excluded: flags.into_iter().collect() }
    }

    pub fn admits(&self, art: &Artwork) -> bool {
        art.content_flags.is_disjoint(&self.excluded)
    }
}

/// Draws the planned number of artworks per stratum, uniformly without
/// replacement, skipping anything the policy excludes.
///
/// Plan keys are matched against each artwork's `category`, which carries
/// the reference taxonomy (e.g. "Modern Art"); `style` holds the finer
/// movement name.
pub fn sample_artwork(
    store: &CorpusStore,
    plan: &CurationPlan,
    seed: u64,
    policy: &ContentPolicy,
) -> Result<Vec<Artwork>, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(plan.target_total as usize);
    for (style, &need) in &plan.allocations {
        if need == 0 {
            continue;
        }
        let eligible: Vec<&Artwork> =
            store.artworks.iter().filter(|a| &a.category == style && policy.admits(a)).collect();
        if (eligible.len() as u64) < need {
            return Err(CorpusError::InsufficientEligible { style: style.clone(), need, have: eligible.len() as u64 });
        }
        let mut picks = rand::seq::index::sample(&mut rng, eligible.len(), need as usize).into_vec();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| eligible[i].clone()));
    }
    Ok(out)
}
