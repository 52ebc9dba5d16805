//! Deterministic synthetic platformer corpus used by tests, examples and the
//! shipped fixture files.
//!
//! Three domains:
//! - `X`: brick platforms joined by ladders and ropes, which project to
//!   wildcards; about 12% of its tiles are wildcards.
//! - `Y`: horizontal levels with ground, pipes and floating blocks.
//! - `Z`: vertical levels with ledges and spikes.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    level_to_text, AffordanceMap, CorpusManifest, CorpusSet, DomainCorpus, ElementCategory, ManifestDomain, TileGrid,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sketch::SketchCell;

/// Wildcard share the `X` generator stops at.
pub const X_WILDCARD_TARGET: f64 = 0.12;

pub fn affordance_x() -> AffordanceMap {
    let mut a = AffordanceMap::new();
    a.insert('B', SketchCell::Solid, ElementCategory::SolidObject);
    a.insert('.', SketchCell::Empty, ElementCategory::EmptySpace);
    a.insert('H', SketchCell::Wildcard, ElementCategory::Climbable);
    a.insert('~', SketchCell::Wildcard, ElementCategory::Climbable);
    a.insert('G', SketchCell::Empty, ElementCategory::Item);
    a.insert('E', SketchCell::Empty, ElementCategory::Enemy);
    a
}

pub fn affordance_y() -> AffordanceMap {
    let mut a = AffordanceMap::new();
    a.insert('X', SketchCell::Solid, ElementCategory::SolidObject);
    a.insert('p', SketchCell::Solid, ElementCategory::SolidObject);
    a.insert('Q', SketchCell::Solid, ElementCategory::Item);
    a.insert('-', SketchCell::Empty, ElementCategory::EmptySpace);
    a.insert('o', SketchCell::Empty, ElementCategory::Item);
    a.insert('g', SketchCell::Empty, ElementCategory::Enemy);
    a
}

pub fn affordance_z() -> AffordanceMap {
    let mut a = AffordanceMap::new();
    a.insert('#', SketchCell::Solid, ElementCategory::SolidObject);
    a.insert('^', SketchCell::Solid, ElementCategory::Hazard);
    a.insert('-', SketchCell::Empty, ElementCategory::EmptySpace);
    a.insert('D', SketchCell::Empty, ElementCategory::Item);
    a.insert('m', SketchCell::Empty, ElementCategory::Enemy);
    a
}

fn ground_profile(rng: &mut ChaCha8Rng, width: usize, min: usize, max: usize) -> Vec<usize> {
    let mut g = Vec::with_capacity(width);
    let mut h = rng.random_range(min..=max);
    for _ in 0..width {
        if rng.random_bool(0.25) {
            h = if rng.random_bool(0.5) {
                h.saturating_sub(1).max(min)
            } else {
                (h + 1).min(max)
            };
        }
        g.push(h);
    }
    g
}

fn level_x(seed: u64) -> TileGrid {
    let (h, w) = (12, 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Grid::filled(h, w, '.');
    for c in 0..w {
        for r in h - 2..h {
            t.set(r, c, 'B');
        }
    }
    // brick platforms on rows 3, 6 and 9
    for row in [3, 6, 9] {
        let mut c = rng.random_range(0..4);
        while c < w {
            let len = rng.random_range(4..9).min(w - c);
            for k in c..c + len {
                t.set(row, k, 'B');
            }
            c += len + rng.random_range(3..7);
        }
    }
    let wildcards = |t: &TileGrid| t.cells().iter().filter(|&&c| c == 'H' || c == '~').count();
    let target = (X_WILDCARD_TARGET * (h * w) as f64).round() as usize;
    while wildcards(&t) < target {
        if rng.random_bool(0.6) {
            // ladder from a platform row down to the next solid cell
            let c = rng.random_range(0..w);
            let top = [2, 5, 8][rng.random_range(0..3)];
            let mut r = top;
            while r < h && *t.get(r, c) != 'B' {
                t.set(r, c, 'H');
                r += 1;
            }
        } else {
            // rope hanging across empty cells
            let row = [1, 4, 7][rng.random_range(0..3)];
            let c0 = rng.random_range(0..w - 3);
            for c in c0..(c0 + rng.random_range(3..7)).min(w) {
                if *t.get(row, c) == '.' {
                    t.set(row, c, '~');
                }
            }
        }
    }
    for _ in 0..6 {
        let (r, c) = (rng.random_range(0..h - 2), rng.random_range(0..w));
        if *t.get(r, c) == '.' {
            t.set(r, c, if rng.random_bool(0.5) { 'G' } else { 'E' });
        }
    }
    // trim the overshoot of the last ladder so the share stays at the target
    let mut extra = wildcards(&t).saturating_sub(target);
    for i in (0..h * w).rev() {
        if extra == 0 {
            break;
        }
        let (r, c) = (i / w, i % w);
        if matches!(*t.get(r, c), 'H' | '~') {
            t.set(r, c, '.');
            extra -= 1;
        }
    }
    t
}

fn level_y(seed: u64) -> TileGrid {
    let (h, w) = (12, 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground = ground_profile(&mut rng, w, 1, 3);
    let mut t = Grid::filled(h, w, '-');
    let mut c = 0;
    while c < w {
        let gap = c > 4 && c + 2 < w && rng.random_bool(0.08);
        if gap {
            c += rng.random_range(2..4);
            continue;
        }
        for r in h - ground[c]..h {
            t.set(r, c, 'X');
        }
        c += 1;
    }
    for _ in 0..3 {
        let c = rng.random_range(2..w - 2);
        let base = h - ground[c];
        let ph = rng.random_range(2..4);
        for r in base.saturating_sub(ph)..base {
            t.set(r, c, 'p');
            t.set(r, c + 1, 'p');
        }
    }
    for _ in 0..5 {
        let (r, c) = (rng.random_range(4..7), rng.random_range(0..w - 4));
        let len = rng.random_range(1..5);
        for k in c..c + len {
            t.set(r, k, if rng.random_bool(0.4) { 'Q' } else { 'X' });
        }
    }
    for _ in 0..8 {
        let (r, c) = (rng.random_range(1..h - 1), rng.random_range(0..w));
        if *t.get(r, c) == '-' {
            t.set(r, c, if rng.random_bool(0.5) { 'o' } else { 'g' });
        }
    }
    t
}

fn level_z(seed: u64) -> TileGrid {
    let (h, w) = (40, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Grid::filled(h, w, '-');
    for r in 0..h {
        t.set(r, 0, '#');
        t.set(r, w - 1, '#');
    }
    for c in 0..w {
        t.set(h - 1, c, '#');
    }
    let mut r = h - 4;
    while r > 1 {
        let len = rng.random_range(3..7);
        let c0 = rng.random_range(1..w - len);
        for c in c0..c0 + len {
            t.set(r, c, '#');
        }
        if rng.random_bool(0.3) {
            t.set(r - 1, c0 + rng.random_range(0..len), '^');
        }
        r = r.saturating_sub(rng.random_range(3..5));
    }
    for _ in 0..4 {
        let (r, c) = (rng.random_range(1..h - 1), rng.random_range(1..w - 1));
        if *t.get(r, c) == '-' {
            t.set(r, c, if rng.random_bool(0.5) { 'D' } else { 'm' });
        }
    }
    t
}

/// Level count per domain.
pub const LEVELS: [(&str, usize); 3] = [("X", 4), ("Y", 3), ("Z", 3)];

/// Training window per domain, `[height, width]`.
pub fn window(domain: &str) -> [usize; 2] {
    match domain {
        "X" => [8, 8],
        "Y" => [8, 12],
        _ => [12, 8],
    }
}

fn domain(id: &str, count: usize) -> Result<DomainCorpus> {
    let (affordance, gen): (AffordanceMap, fn(u64) -> TileGrid) = match id {
        "X" => (affordance_x(), level_x),
        "Y" => (affordance_y(), level_y),
        "Z" => (affordance_z(), level_z),
        other => return Err(Error::UnknownDomain(other.into())),
    };
    let salt = id.bytes().next().unwrap_or(0) as u64;
    let levels = (0..count as u64).map(|i| gen(salt * 1000 + i)).collect();
    let [wh, ww] = window(id);
    let mut c = DomainCorpus::new(id.into(), levels, affordance, (wh, ww))?;
    c.level_names = (0..count).map(|i| format!("{}-{i}", id.to_lowercase())).collect();
    Ok(c)
}

/// The synthetic corpus, generated in memory.
pub fn synthetic_corpus() -> Result<CorpusSet> {
    CorpusSet::new(LEVELS.iter().map(|&(id, n)| domain(id, n)).collect::<Result<_>>()?)
}

/// Writes the corpus as level files, affordance JSONs and `manifest.json`.
pub fn write_fixture(dir: &Path) -> Result<()> {
    let set = synthetic_corpus()?;
    let mut domains = Vec::new();
    for c in &set.domains {
        let id = c.domain_id.as_str();
        let sub = dir.join(id.to_lowercase());
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let aff = format!("{}/affordance.json", id.to_lowercase());
        let p = dir.join(&aff);
        std::fs::write(&p, c.affordance.to_json()).map_err(|e| Error::io(&p, e))?;
        let mut levels = Vec::new();
        for (level, name) in c.levels.iter().zip(&c.level_names) {
            let rel = format!("{}/{name}.txt", id.to_lowercase());
            let p = dir.join(&rel);
            std::fs::write(&p, level_to_text(level)).map_err(|e| Error::io(&p, e))?;
            levels.push(rel.into());
        }
        domains.push(ManifestDomain {
            domain_id: c.domain_id.clone(),
            affordance: Some(aff.into()),
            levels,
            window: Some([c.window_height, c.window_width]),
        });
    }
    let manifest = CorpusManifest {
        tile_budget: None,
        domains,
    };
    let p = dir.join("manifest.json");
    std::fs::write(
        &p,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&p, e))
}
