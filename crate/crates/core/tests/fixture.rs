//! The committed synthetic fixture must match its generator byte for byte.
//! Set `SKETCHBLEND_BLESS=1` to rewrite it.

use std::path::{Path, PathBuf};

use sketchblend::corpus::CorpusSet;
use sketchblend::synth;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synth")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn committed_fixture_matches_generator() {
    if std::env::var_os("SKETCHBLEND_BLESS").is_some() {
        let _ = std::fs::remove_dir_all(fixture_dir());
        synth::write_fixture(&fixture_dir()).unwrap();
    }
    let tmp = tempfile::tempdir().unwrap();
    synth::write_fixture(tmp.path()).unwrap();
    let expected = files(tmp.path());
    let committed = files(&fixture_dir());
    let names = |v: &[(String, Vec<u8>)]| v.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    assert_eq!(names(&committed), names(&expected));
    for ((name, a), (_, b)) in committed.iter().zip(&expected) {
        assert!(a == b, "{name} differs from the generator");
    }
}

#[test]
fn fixture_manifest_loads_like_the_generator() {
    let loaded = CorpusSet::load_manifest(&fixture_dir().join("manifest.json")).unwrap();
    let generated = synth::synthetic_corpus().unwrap();
    assert_eq!(loaded.ids(), generated.ids());
    for (a, b) in loaded.domains.iter().zip(&generated.domains) {
        assert_eq!(a.levels, b.levels);
        assert_eq!(a.level_names, b.level_names);
        assert_eq!((a.window_height, a.window_width), (b.window_height, b.window_width));
    }
}
