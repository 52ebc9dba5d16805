//! Level corpora: parsing VGLC-style text levels, tile semantics, and
//! tile-budget standardization.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sketch::SketchCell;

/// A full-resolution level (or window of one): one domain-specific symbol per cell.
pub type TileGrid = Grid<char>;

/// Default tile budget used to balance domain corpora.
pub const DEFAULT_TILE_BUDGET: usize = 18_000;

/// Short domain name such as `CV` or `LR`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(pub String);

impl DomainId {
    pub fn new(id: impl Into<String>) -> Self {
        DomainId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for DomainId {
    fn from(s: String) -> Self {
        DomainId(s)
    }
}

impl From<&str> for DomainId {
    fn from(s: &str) -> Self {
        DomainId(s.to_string())
    }
}

/// Gameplay role of a tile, used for element-distribution comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementCategory {
    EmptySpace,
    SolidObject,
    Enemy,
    Item,
    Hazard,
    Climbable,
}

impl ElementCategory {
    /// Canonical component order of element distributions.
    pub const ALL: [ElementCategory; 6] = [
        ElementCategory::EmptySpace,
        ElementCategory::SolidObject,
        ElementCategory::Enemy,
        ElementCategory::Item,
        ElementCategory::Hazard,
        ElementCategory::Climbable,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementCategory::EmptySpace => "empty-space",
            ElementCategory::SolidObject => "solid-object",
            ElementCategory::Enemy => "enemy",
            ElementCategory::Item => "item",
            ElementCategory::Hazard => "hazard",
            ElementCategory::Climbable => "climbable",
        }
    }

    /// Sketch class implied by the category when a mapping omits one.
    pub fn default_sketch(self) -> SketchCell {
        match self {
            ElementCategory::SolidObject => SketchCell::Solid,
            ElementCategory::Climbable => SketchCell::Wildcard,
            _ => SketchCell::Empty,
        }
    }
}

/// Semantics of one tile symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileAffordance {
    pub sketch: SketchCell,
    pub element: ElementCategory,
    /// Marks cells that lie outside the playable level area (VGLC "void" tiles).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub padding: bool,
}

#[derive(Deserialize)]
struct RawAffordance {
    sketch: Option<SketchCell>,
    element: Option<ElementCategory>,
    #[serde(default)]
    padding: bool,
}

/// Total map from a domain's tile symbols to sketch class and element category.
///
/// The key set doubles as the domain palette.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffordanceMap {
    entries: BTreeMap<char, TileAffordance>,
}

impl AffordanceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, symbol: char, sketch: SketchCell, element: ElementCategory) {
        self.entries.insert(
            symbol,
            TileAffordance {
                sketch,
                element,
                padding: false,
            },
        );
    }

    /// Inserts a symbol whose sketch class follows from its element category.
    pub fn insert_element(&mut self, symbol: char, element: ElementCategory) {
        self.insert(symbol, element.default_sketch(), element);
    }

    pub fn insert_padding(&mut self, symbol: char, sketch: SketchCell) {
        self.entries.insert(
            symbol,
            TileAffordance {
                sketch,
                element: ElementCategory::EmptySpace,
                padding: true,
            },
        );
    }

    pub fn get(&self, symbol: char) -> Option<&TileAffordance> {
        self.entries.get(&symbol)
    }

    pub fn sketch_class(&self, symbol: char) -> Result<SketchCell> {
        self.get(symbol).map(|a| a.sketch).ok_or(Error::UnmappedSymbol(symbol))
    }

    pub fn element(&self, symbol: char) -> Result<ElementCategory> {
        self.get(symbol).map(|a| a.element).ok_or(Error::UnmappedSymbol(symbol))
    }

    pub fn is_padding(&self, symbol: char) -> bool {
        self.get(symbol).is_some_and(|a| a.padding)
    }

    pub fn palette(&self) -> BTreeSet<char> {
        self.entries.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (char, &TileAffordance)> {
        self.entries.iter().map(|(c, a)| (*c, a))
    }

    /// Parses the JSON affordance format: an object mapping each symbol to
    /// `{"sketch": "solid|empty|wildcard", "element": "<category>"}`. Either
    /// field may be omitted, in which case it is derived from the other.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, RawAffordance> =
            serde_json::from_str(text).map_err(|e| Error::json("affordance map", e))?;
        let mut map = AffordanceMap::new();
        for (key, entry) in raw {
            let mut chars = key.chars();
            let symbol = match (chars.next(), chars.next()) {
                (Some(c), None) if !c.is_control() => c,
                _ => {
                    return Err(Error::InvalidAffordance {
                        symbol: key,
                        reason: "keys must be a single printable character".into(),
                    })
                }
            };
            let (sketch, element) = match (entry.sketch, entry.element) {
                (Some(s), Some(e)) => (s, e),
                (None, Some(e)) => (e.default_sketch(), e),
                (Some(s), None) => (s, s.default_element()),
                (None, None) => {
                    return Err(Error::InvalidAffordance {
                        symbol: key,
                        reason: "needs a sketch class or an element category".into(),
                    })
                }
            };
            map.entries.insert(
                symbol,
                TileAffordance {
                    sketch,
                    element,
                    padding: entry.padding,
                },
            );
        }
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        let obj: BTreeMap<String, &TileAffordance> = self.entries.iter().map(|(c, a)| (c.to_string(), a)).collect();
        serde_json::to_string_pretty(&obj).expect("affordance map serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Parses a level in the one-character-per-tile text convention.
///
/// Trailing blank lines and `\r` line endings are ignored.
pub fn parse_level(text: &str, palette: &BTreeSet<char>) -> Result<TileGrid> {
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(Error::EmptyLevel);
    }
    let width = lines[0].chars().count();
    if width == 0 {
        return Err(Error::EmptyLevel);
    }
    let mut cells = Vec::with_capacity(width * lines.len());
    for (row, line) in lines.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(Error::RaggedRows {
                row,
                expected: width,
                found,
            });
        }
        for (col, symbol) in line.chars().enumerate() {
            if !palette.contains(&symbol) {
                return Err(Error::UnknownSymbol { symbol, row, col });
            }
            cells.push(symbol);
        }
    }
    Ok(Grid::from_cells(lines.len(), width, cells))
}

/// Serializes a character grid as newline-terminated rows.
pub fn level_to_text(grid: &Grid<char>) -> String {
    let mut out = String::with_capacity(grid.len() + grid.height());
    for row in grid.rows() {
        out.extend(row.iter());
        out.push('\n');
    }
    out
}

/// Outcome of [`standardize_corpus`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Standardized {
    /// Number of leading levels selected.
    pub selected: usize,
    pub total_tiles: usize,
}

/// Picks the prefix of `levels` whose tile count lands closest to `tile_budget`.
///
/// Walking in order, the next level is taken while doing so does not move the
/// total further from the budget (`total + next/2 <= budget`). The first
/// level is always kept so a domain never ends up empty.
pub fn standardize_corpus(levels: &[TileGrid], tile_budget: usize) -> Result<Standardized> {
    if levels.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if tile_budget == 0 {
        return Err(Error::InvalidConfig("tile budget must be positive".into()));
    }
    let mut total = 0usize;
    let mut selected = 0usize;
    for level in levels {
        let next = level.len();
        // 2*total + next <= 2*budget, kept integral
        if selected > 0 && 2 * total + next > 2 * tile_budget {
            break;
        }
        total += next;
        selected += 1;
    }
    Ok(Standardized {
        selected,
        total_tiles: total,
    })
}

/// Raw per-category tile counts in [`ElementCategory::ALL`] order.
pub fn element_counts(levels: &[TileGrid], affordance: &AffordanceMap) -> Result<[u64; 6]> {
    let mut counts = [0u64; 6];
    for level in levels {
        for &symbol in level.cells() {
            counts[affordance.element(symbol)?.index()] += 1;
        }
    }
    Ok(counts)
}

/// Normalizes category counts into a probability vector.
pub fn counts_to_distribution(counts: &[u64; 6]) -> [f64; 6] {
    let total: u64 = counts.iter().sum();
    let mut out = [0.0; 6];
    if total == 0 {
        return out;
    }
    for (o, &c) in out.iter_mut().zip(counts) {
        *o = c as f64 / total as f64;
    }
    out
}

/// Fraction of tiles in each element category across `levels`.
pub fn element_distribution(levels: &[TileGrid], affordance: &AffordanceMap) -> Result<[f64; 6]> {
    if levels.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(counts_to_distribution(&element_counts(levels, affordance)?))
}

/// One domain's training levels plus tile semantics.
#[derive(Debug, Clone)]
pub struct DomainCorpus {
    pub domain_id: DomainId,
    pub levels: Vec<TileGrid>,
    /// Display names of the levels (file stems when loaded from disk).
    pub level_names: Vec<String>,
    pub affordance: AffordanceMap,
    pub window_height: usize,
    pub window_width: usize,
}

impl DomainCorpus {
    /// Validates the corpus invariants: non-empty, every symbol in the
    /// palette, training window no larger than any level.
    pub fn new(
        domain_id: DomainId,
        levels: Vec<TileGrid>,
        affordance: AffordanceMap,
        window: (usize, usize),
    ) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let level_names = (0..levels.len()).map(|i| format!("level{i}")).collect();
        let corpus = DomainCorpus {
            domain_id,
            levels,
            level_names,
            affordance,
            window_height: window.0,
            window_width: window.1,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_height == 0 || self.window_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "domain {} has a zero-sized window",
                self.domain_id
            )));
        }
        for level in &self.levels {
            for (i, &symbol) in level.cells().iter().enumerate() {
                if self.affordance.get(symbol).is_none() {
                    return Err(Error::UnknownSymbol {
                        symbol,
                        row: i / level.width(),
                        col: i % level.width(),
                    });
                }
            }
            if self.window_height > level.height() || self.window_width > level.width() {
                return Err(Error::WindowTooLarge {
                    win_h: self.window_height,
                    win_w: self.window_width,
                    height: level.height(),
                    width: level.width(),
                });
            }
        }
        Ok(())
    }

    pub fn total_tiles(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    /// Keeps only the levels chosen by [`standardize_corpus`].
    pub fn standardized(mut self, tile_budget: usize) -> Result<(Self, Standardized)> {
        let s = standardize_corpus(&self.levels, tile_budget)?;
        self.levels.truncate(s.selected);
        self.level_names.truncate(s.selected);
        Ok((self, s))
    }

    pub fn element_distribution(&self) -> Result<[f64; 6]> {
        element_distribution(&self.levels, &self.affordance)
    }
}

const DEFAULT_AFFORDANCES: [(&str, &str); 7] = [
    ("CV", include_str!("../data/affordances/CV.json")),
    ("KI", include_str!("../data/affordances/KI.json")),
    ("LR", include_str!("../data/affordances/LR.json")),
    ("MM", include_str!("../data/affordances/MM.json")),
    ("MT", include_str!("../data/affordances/MT.json")),
    ("NG", include_str!("../data/affordances/NG.json")),
    ("SM", include_str!("../data/affordances/SM.json")),
];

/// Shipped affordance map for one of the seven NES domains, written for the
/// VGLC tile conventions. These are editable starting points, not ground
/// truth.
pub fn default_affordance(domain: &str) -> Option<Result<AffordanceMap>> {
    DEFAULT_AFFORDANCES
        .iter()
        .find(|(d, _)| *d == domain)
        .map(|(_, text)| AffordanceMap::from_json(text))
}

/// Per-domain training windows `(height, width)` for the NES domains.
pub fn default_window(domain: &str) -> Option<(usize, usize)> {
    Some(match domain {
        "CV" | "LR" | "NG" => (11, 16),
        "KI" => (16, 16),
        "MM" | "MT" => (15, 16),
        "SM" => (14, 14),
        _ => return None,
    })
}

/// Entry of a corpus manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDomain {
    pub domain_id: DomainId,
    /// Path of the affordance JSON, relative to the manifest. Omitted for
    /// one of the seven shipped domains, it falls back to
    /// [`default_affordance`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affordance: Option<PathBuf>,
    /// Level files, in selection order.
    pub levels: Vec<PathBuf>,
    /// Training window as `[height, width]`; defaults to [`default_window`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
}

/// Corpus manifest: the domains available for training and filling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    /// When present, each domain is standardized to this many tiles on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_budget: Option<usize>,
    pub domains: Vec<ManifestDomain>,
}

impl CorpusManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("corpus manifest", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// An ordered set of domain corpora with unique ids.
#[derive(Debug, Clone, Default)]
pub struct CorpusSet {
    pub domains: Vec<DomainCorpus>,
}

impl CorpusSet {
    pub fn new(domains: Vec<DomainCorpus>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &domains {
            if !seen.insert(d.domain_id.clone()) {
                return Err(Error::DuplicateDomain(d.domain_id.0.clone()));
            }
        }
        Ok(CorpusSet { domains })
    }

    /// Loads every domain listed in a manifest, resolving paths against the
    /// manifest's directory and applying its tile budget if one is set.
    pub fn load_manifest(path: &Path) -> Result<Self> {
        let manifest = CorpusManifest::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_manifest(&manifest, base)
    }

    pub fn from_manifest(manifest: &CorpusManifest, base: &Path) -> Result<Self> {
        let mut domains = Vec::with_capacity(manifest.domains.len());
        for entry in &manifest.domains {
            let id = entry.domain_id.as_str();
            let affordance = match &entry.affordance {
                Some(p) => AffordanceMap::load(&base.join(p))?,
                None => default_affordance(id).ok_or_else(|| Error::InvalidAffordance {
                    symbol: id.to_string(),
                    reason: "no affordance file given and no shipped default for this domain".into(),
                })??,
            };
            let window = entry
                .window
                .map(|[h, w]| (h, w))
                .or_else(|| default_window(id))
                .ok_or_else(|| Error::InvalidConfig(format!("domain {id} needs a window")))?;
            let palette = affordance.palette();
            let mut levels = Vec::with_capacity(entry.levels.len());
            let mut names = Vec::with_capacity(entry.levels.len());
            for rel in &entry.levels {
                let p = base.join(rel);
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                levels.push(parse_level(&text, &palette)?);
                names.push(
                    rel.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                );
            }
            let mut corpus = DomainCorpus::new(entry.domain_id.clone(), levels, affordance, window)?;
            corpus.level_names = names;
            if let Some(budget) = manifest.tile_budget {
                corpus = corpus.standardized(budget)?.0;
            }
            domains.push(corpus);
        }
        Self::new(domains)
    }

    pub fn get(&self, id: &DomainId) -> Result<&DomainCorpus> {
        self.domains
            .iter()
            .find(|d| &d.domain_id == id)
            .ok_or_else(|| Error::UnknownDomain(id.0.clone()))
    }

    pub fn ids(&self) -> Vec<DomainId> {
        self.domains.iter().map(|d| d.domain_id.clone()).collect()
    }

    /// The corpora named in `ids`, in the given order.
    pub fn select(&self, ids: &[DomainId]) -> Result<Vec<DomainCorpus>> {
        ids.iter().map(|id| self.get(id).cloned()).collect()
    }
}
