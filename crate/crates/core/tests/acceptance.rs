//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Criterion 8 needs real VGLC corpora and
//! is reported as SKIP unless `VGLC_ROOT` points at them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use sketchblend::corpus::{level_to_text, CorpusManifest, CorpusSet, DomainCorpus, DomainId, ElementCategory};
use sketchblend::edbsp::{
    bsp_partition, domain_proportion, fill_sketch, replay, sketch_match, validate_fill, FillConfig, ProvenanceGrid,
    SourceTile, StopRule,
};
use sketchblend::genmodel::{
    gradient_check_subset, sample_sketches, train_vae, Batch, ConvVae, ConvVaeArch, ModelConfig,
};
use sketchblend::grid::Grid;
use sketchblend::harness::{
    run_fill_existing, run_sketch_eval, sample_training_segments, EvalOptions, ReportTable, SubsetDef,
};
use sketchblend::metrics::{
    e_distance, kl_divergence, non_linearity, plagiarism, self_plagiarism, uniform, wilcoxon_rank_sum,
    wilcoxon_rank_sum_with, RankSumMethod, WildcardRule, KL_EPSILON,
};
use sketchblend::seed::rng_from;
use sketchblend::sketch::{parse_sketch, project_sketch, sketch_to_text, SketchCell, SketchGrid};
use sketchblend::synth::synthetic_corpus;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn random_sketch(rng: &mut impl Rng, h: usize, w: usize) -> SketchGrid {
    Grid::from_fn(h, w, |_, _| SketchCell::ALL[rng.random_range(0..3)])
}

// 1: partition cover, disjointness and size bound by marking cells

fn partition_suite() -> Check {
    let start = Instant::now();
    let mut failures = Vec::new();
    for seed in 0..1000u64 {
        let mut rng = rng_from(seed, &[101]);
        let (h, w) = (rng.random_range(4..=32), rng.random_range(4..=32));
        let max = rng.random_range(1..=8);
        let p = bsp_partition((h, w), max, &mut rng);
        let mut marks = vec![0u32; h * w];
        let mut bad = (p.height, p.width) != (h, w);
        for r in &p.regions {
            if r.height == 0
                || r.width == 0
                || r.height > max
                || r.width > max
                || r.row + r.height > h
                || r.col + r.width > w
            {
                bad = true;
                continue;
            }
            for row in r.row..r.row + r.height {
                for col in r.col..r.col + r.width {
                    marks[row * w + col] += 1;
                }
            }
        }
        if bad || marks.iter().any(|&m| m != 1) {
            failures.push(format!("seed {seed} ({h}x{w}, max {max})"));
        }
    }
    let took = start.elapsed();
    ensure(failures.is_empty(), || {
        format!("{} failures, first {}", failures.len(), failures[0])
    })?;
    ensure(took < Duration::from_secs(10), || format!("took {}", secs(took)))?;
    Ok(format!("1000 runs, 0 failures, {}", secs(took)))
}

// 2: fill validity on the fixture, checked by an independent re-derivation

fn check_fill(
    sketch: &SketchGrid,
    corpora: &[DomainCorpus],
    max: Option<usize>,
    seed: u64,
) -> std::result::Result<(), String> {
    let config = FillConfig {
        stop: StopRule::MaxRegion { size: max },
    };
    let result = fill_sketch(sketch, corpora, &config, &mut rng_from(seed, &[202])).map_err(|e| e.to_string())?;
    validate_fill(sketch, &result, corpora).map_err(|e| format!("validate_fill: {e}"))?;
    let (h, w) = sketch.dims();
    ensure(
        result.level.dims() == (h, w) && result.provenance.dims() == (h, w),
        || "dims".into(),
    )?;
    let by_id: BTreeMap<&DomainId, &DomainCorpus> = corpora.iter().map(|c| (&c.domain_id, c)).collect();

    let mut covered = vec![0u32; h * w];
    for fr in &result.regions {
        let (rect, src) = (fr.rect, &fr.source);
        let corpus = by_id.get(&src.domain_id).ok_or("unknown source domain")?;
        let level = &corpus.levels[src.level];
        for r in rect.row..rect.row + rect.height {
            for c in rect.col..rect.col + rect.width {
                covered[r * w + c] += 1;
                let (sr, sc) = (src.row + r - rect.row, src.col + c - rect.col);
                let expect = SourceTile {
                    domain_id: src.domain_id.clone(),
                    level: src.level,
                    row: sr,
                    col: sc,
                };
                ensure(*result.provenance.get(r, c) == expect, || {
                    format!("provenance at ({r},{c})")
                })?;
                let tile = *level.get(sr, sc);
                ensure(*result.level.get(r, c) == tile, || format!("tile at ({r},{c})"))?;
                let class = corpus.affordance.sketch_class(tile).map_err(|e| e.to_string())?;
                ensure(sketch_match(*sketch.get(r, c), class), || {
                    format!("sketch mismatch at ({r},{c})")
                })?;
            }
        }
    }
    ensure(covered.iter().all(|&n| n == 1), || {
        "regions do not cover exactly".into()
    })?;

    let mut tally: BTreeMap<DomainId, usize> = BTreeMap::new();
    for s in result.provenance.cells() {
        *tally.entry(s.domain_id.clone()).or_default() += 1;
    }
    let props = domain_proportion(&result.provenance);
    let sum: f64 = props.values().sum();
    ensure((sum - 1.0).abs() <= 1e-9, || format!("proportions sum to {sum}"))?;
    for (d, n) in &tally {
        let p = props.get(d).copied().unwrap_or(-1.0);
        ensure((p - *n as f64 / (h * w) as f64).abs() <= 1e-12, || {
            format!("proportion of {d}")
        })?;
    }

    let replayed = Grid::from_fn(h, w, |r, c| {
        let s = result.provenance.get(r, c);
        *by_id[&s.domain_id].levels[s.level].get(s.row, s.col)
    });
    ensure(level_to_text(&replayed) == level_to_text(&result.level), || {
        "manual replay differs".into()
    })?;
    let lib_replay = replay(&result.provenance, corpora).map_err(|e| e.to_string())?;
    ensure(
        level_to_text(&lib_replay).as_bytes() == level_to_text(&result.level).as_bytes(),
        || "replay differs".into(),
    )
}

fn fill_validity() -> Check {
    let set = synthetic_corpus().map_err(|e| e.to_string())?;
    let corpora = set.domains.clone();
    let mut failures = Vec::new();
    let mut noise = 0;
    for seed in 0..200u64 {
        let mut rng = rng_from(seed, &[201]);
        let sketch = if seed % 4 == 3 {
            // unstructured sketches force the re-split fallback
            noise += 1;
            let (h, w) = (rng.random_range(3..=12), rng.random_range(3..=12));
            random_sketch(&mut rng, h, w)
        } else {
            let c = &corpora[seed as usize % corpora.len()];
            let li = rng.random_range(0..c.levels.len());
            let full = project_sketch(&c.levels[li], &c.affordance).map_err(|e| e.to_string())?;
            let h = rng.random_range(4..=full.height().min(20));
            let w = rng.random_range(4..=full.width().min(20));
            let (r0, c0) = (
                rng.random_range(0..=full.height() - h),
                rng.random_range(0..=full.width() - w),
            );
            full.window(r0, c0, h, w)
        };
        let max = if rng.random_bool(0.2) {
            None
        } else {
            Some(rng.random_range(1..=8))
        };
        if let Err(e) = check_fill(&sketch, &corpora, max, seed) {
            failures.push(format!("seed {seed}: {e}"));
        }
    }
    ensure(failures.is_empty(), || {
        format!("{} failures, first {}", failures.len(), failures[0])
    })?;
    Ok(format!("200 fills ({noise} on random sketches), 0 failures"))
}

// 3: wildcard dominance when filling Z sketches from {X, Y}

fn mean_x_share(set: &CorpusSet, seed: u64) -> std::result::Result<(f64, f64), String> {
    let subset = SubsetDef {
        name: "ALL".into(),
        members: set.ids(),
    };
    let run =
        run_fill_existing(&"Z".into(), &subset, set, 100, StopRule::default(), seed).map_err(|e| e.to_string())?;
    let get = |d: &str| {
        run.table
            .entry("Z", "domain-proportion/ALL", d)
            .map(|e| e.mean)
            .ok_or("missing entry")
    };
    Ok((get("X")?, get("Y")?))
}

fn wildcard_dominance() -> Check {
    let start = Instant::now();
    let set = synthetic_corpus().map_err(|e| e.to_string())?;
    let (mut wins, mut min_margin) = (0, f64::INFINITY);
    for seed in 0..100 {
        let (x, y) = mean_x_share(&set, seed)?;
        if x > y {
            wins += 1;
        }
        min_margin = min_margin.min(x - y);
    }
    // control: the same X levels with ladders and ropes projected as empty
    let mut control = set.clone();
    let x = control
        .domains
        .iter_mut()
        .find(|d| d.domain_id.as_str() == "X")
        .unwrap();
    for sym in ['H', '~'] {
        x.affordance.insert(sym, SketchCell::Empty, ElementCategory::Climbable);
    }
    let (mut cwins, mut cshare) = (0, 0.0);
    for seed in 0..30 {
        let (x, y) = mean_x_share(&control, seed)?;
        cwins += usize::from(x > y);
        cshare += x / 30.0;
    }
    let detail = format!(
        "X highest in {wins}/100 seeds (min margin {min_margin:.3}); control without wildcards: X highest in {cwins}/30, mean X share {cshare:.3}; {}",
        secs(start.elapsed())
    );
    ensure(wins >= 95, || detail.clone())?;
    Ok(detail)
}

// 4: metric oracles

fn heights_oracle(s: &SketchGrid) -> Vec<f64> {
    let text = sketch_to_text(s);
    let rows: Vec<Vec<char>> = text.lines().map(|l| l.chars().collect()).collect();
    let h = rows.len();
    (0..rows[0].len())
        .map(|c| (0..h).find(|&r| rows[r][c] == '#').map_or(0.0, |r| (h - r) as f64))
        .collect()
}

fn non_linearity_oracle(s: &SketchGrid) -> f64 {
    // residual variance of the least-squares line: var(y) - cov(x, y)^2 / var(x)
    let y = heights_oracle(s);
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let vx = y.iter().enumerate().map(|(i, _)| (i as f64 - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cxy = y
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 - mx) * (v - my))
        .sum::<f64>()
        / n;
    (vy - cxy * cxy / vx).max(0.0)
}

fn plagiarism_oracle(a: &SketchGrid, b: &SketchGrid) -> usize {
    let ra: Vec<String> = sketch_to_text(a).lines().map(String::from).collect();
    let rb: Vec<String> = sketch_to_text(b).lines().map(String::from).collect();
    let col = |rows: &[String], j: usize| rows.iter().map(|r| r.chars().nth(j).unwrap()).collect::<String>();
    let rows = ra.iter().zip(&rb).filter(|(x, y)| x == y).count();
    let cols = (0..a.width()).filter(|&j| col(&ra, j) == col(&rb, j)).count();
    rows + cols
}

/// A copy of `s` with fewer than `max_edits` random cells redrawn.
fn mutate(rng: &mut impl Rng, s: &SketchGrid, max_edits: usize) -> SketchGrid {
    let mut t = s.clone();
    for _ in 0..rng.random_range(0..max_edits) {
        let (r, c) = (rng.random_range(0..s.height()), rng.random_range(0..s.width()));
        t.set(r, c, SketchCell::ALL[rng.random_range(0..3)]);
    }
    t
}

fn e_distance_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let mean = |u: &[Vec<f64>], v: &[Vec<f64>]| {
        let mut s = 0.0;
        for x in u {
            for y in v {
                s += d(x, y);
            }
        }
        s / (u.len() * v.len()) as f64
    };
    2.0 * mean(a, b) - mean(a, a) - mean(b, b)
}

fn kl_oracle(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let sp: f64 = p.iter().sum::<f64>() + eps * p.len() as f64;
    let sq: f64 = q.iter().sum::<f64>() + eps * q.len() as f64;
    let mut kl = 0.0;
    for (a, b) in p.iter().zip(q) {
        let (a, b) = ((a + eps) / sp, (b + eps) / sq);
        if a > 0.0 {
            kl += a * a.ln() - a * b.ln();
        }
    }
    kl.max(0.0)
}

fn random_distribution(rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..6)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let s: f64 = raw.iter().sum();
    if s == 0.0 {
        return uniform(6);
    }
    raw.iter().map(|v| v / s).collect()
}

fn metric_oracles() -> Check {
    let mut rng = rng_from(4, &[401]);
    let n = 200;
    let mut worst = BTreeMap::new();
    let mut note = |name: &str, a: f64, b: f64| {
        let e = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let w = worst.entry(name.to_string()).or_insert(0.0f64);
        *w = w.max(e);
    };
    for _ in 0..n {
        // non-linearity under both wildcard rules
        let (h, w) = (rng.random_range(1..=8), rng.random_range(2..=10));
        let s = random_sketch(&mut rng, h, w);
        note(
            "non_linearity",
            non_linearity(&s, WildcardRule::NotSolid).unwrap(),
            non_linearity_oracle(&s),
        );
        let solid = s.map(|c| {
            if *c == SketchCell::Wildcard {
                SketchCell::Solid
            } else {
                *c
            }
        });
        note(
            "non_linearity",
            non_linearity(&s, WildcardRule::AsSolid).unwrap(),
            non_linearity_oracle(&solid),
        );

        // plagiarism on near-copies so that shared rows and columns occur
        let b = mutate(&mut rng, &s, 4);
        note(
            "plagiarism",
            plagiarism(&s, &b).unwrap() as f64,
            plagiarism_oracle(&s, &b) as f64,
        );

        // self-plagiarism over every unordered pair
        let k = rng.random_range(2..=6);
        let sample: Vec<SketchGrid> = (0..k).map(|_| mutate(&mut rng, &s, 3)).collect();
        let mut pairs = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                pairs.push(plagiarism_oracle(&sample[i], &sample[j]) as f64);
            }
        }
        let mean = pairs.iter().sum::<f64>() / pairs.len() as f64;
        let std = (pairs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt();
        let got = self_plagiarism(&sample, Default::default()).unwrap();
        note("self_plagiarism", got.mean, mean);
        note("self_plagiarism", got.std, std);

        // e-distance
        let dim = rng.random_range(1..=3);
        let pts = |rng: &mut sketchblend::seed::Rng, m: usize| -> Vec<Vec<f64>> {
            (0..m)
                .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect()
        };
        let (na, nb) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let (a, b) = (pts(&mut rng, na), pts(&mut rng, nb));
        note("e_distance", e_distance(&a, &b).unwrap(), e_distance_oracle(&a, &b));

        // KL divergence
        let (p, q) = (random_distribution(&mut rng), random_distribution(&mut rng));
        note(
            "kl_divergence",
            kl_divergence(&p, &q, KL_EPSILON),
            kl_oracle(&p, &q, KL_EPSILON),
        );

        // domain proportion
        let (h, w) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let ids = ["A", "B", "C"];
        let prov: ProvenanceGrid = Grid::from_fn(h, w, |_, _| SourceTile {
            domain_id: ids[rng.random_range(0..3)].into(),
            level: 0,
            row: 0,
            col: 0,
        });
        let got = domain_proportion(&prov);
        for id in ids {
            let count = prov.cells().iter().filter(|s| s.domain_id.as_str() == id).count();
            note(
                "domain_proportion",
                got.get(&DomainId::from(id)).copied().unwrap_or(0.0),
                count as f64 / (h * w) as f64,
            );
        }
    }
    let bad: Vec<String> = worst
        .iter()
        .filter(|(_, e)| **e > 1e-9)
        .map(|(k, e)| format!("{k} {e:.2e}"))
        .collect();
    ensure(bad.is_empty(), || format!("oracle mismatch: {}", bad.join(", ")))?;

    // hand values
    let nl = non_linearity(&parse_sketch("-#-").unwrap(), WildcardRule::NotSolid).unwrap();
    ensure(rel_close(nl, 2.0 / 9.0, 1e-12), || {
        format!("non-linearity of heights 0,1,0 is {nl}")
    })?;
    let ed = e_distance(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap();
    ensure(ed == 10.0, || format!("singleton e-distance is {ed}"))?;
    let det = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let kl0 = kl_divergence(&det, &uniform(6), 0.0);
    let kl_small = kl_divergence(&det, &uniform(6), 1e-12);
    ensure(
        rel_close(kl0, 6f64.ln(), 1e-15) && rel_close(kl_small, 6f64.ln(), 1e-9),
        || format!("KL vs uniform is {kl0} (eps 0), {kl_small} (eps 1e-12)"),
    )?;
    let max = worst.values().fold(0.0f64, |a, &b| a.max(b));
    Ok(format!(
        "{n} random instances per metric, max relative error {max:.1e}; hand values 2/9, 10, ln 6 reproduced"
    ))
}

// 5: rank-sum test

fn u_statistic(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for a in x {
        for b in y {
            u += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    u
}

fn combinations(n: usize, k: usize, start: usize, current: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
    if current.len() == k {
        out(current);
        return;
    }
    for i in start..n {
        if n - i < k - current.len() {
            break;
        }
        current.push(i);
        combinations(n, k, i + 1, current, out);
        current.pop();
    }
}

/// Two-sided permutation p-value from the Mann-Whitney U statistic, by
/// enumerating every split of the pooled values.
fn permutation_p(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (n1, n) = (x.len(), pooled.len());
    let center = (x.len() * y.len()) as f64 / 2.0;
    let observed = (u_statistic(x, y) - center).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    combinations(n, n1, 0, &mut Vec::new(), &mut |idx| {
        let xs: Vec<f64> = idx.iter().map(|&i| pooled[i]).collect();
        let ys: Vec<f64> = (0..n).filter(|i| !idx.contains(i)).map(|i| pooled[i]).collect();
        total += 1;
        if (u_statistic(&xs, &ys) - center).abs() >= observed - 1e-9 {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

fn wilcoxon() -> Check {
    let t = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0]).map_err(|e| e.to_string())?;
    ensure(rel_close(t.p_value, 1.0 / 3.0, 1e-12), || {
        format!("p for ({{1,2}},{{3,4}}) is {}", t.p_value)
    })?;

    let mut rng = rng_from(5, &[501]);
    let mut pairs = 0;
    let mut worst = 0.0f64;
    for n in 2..=10usize {
        for n1 in 1..n {
            for trial in 0..4 {
                // half the trials draw from a small integer range to force ties
                let mut draw = || {
                    if trial % 2 == 0 {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random::<f64>()
                    }
                };
                let x: Vec<f64> = (0..n1).map(|_| draw()).collect();
                let y: Vec<f64> = (0..n - n1).map(|_| draw()).collect();
                let exact = wilcoxon_rank_sum_with(&x, &y, RankSumMethod::Exact).map_err(|e| e.to_string())?;
                worst = worst.max((exact.p_value - permutation_p(&x, &y)).abs());
                pairs += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || {
        format!("exact p differs from enumeration by {worst:.2e}")
    })?;

    let mut mc_worst = 0.0f64;
    for (k, shift) in [0.0, 0.25, 0.45].into_iter().enumerate() {
        let mut rng = rng_from(5, &[502, k as u64]);
        let x: Vec<f64> = (0..100).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..100).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect();
        let approx = wilcoxon_rank_sum(&x, &y).map_err(|e| e.to_string())?;
        ensure(approx.method == RankSumMethod::Normal, || {
            "expected the normal approximation".into()
        })?;
        let center = 100.0 * 100.0 / 2.0;
        let observed = (u_statistic(&x, &y) - center).abs();
        let mut pooled: Vec<f64> = x.iter().chain(&y).copied().collect();
        let mut hits = 0u32;
        let draws = 100_000;
        for _ in 0..draws {
            pooled.shuffle(&mut rng);
            let (a, b) = pooled.split_at(100);
            if (u_statistic_sorted(a, b) - center).abs() >= observed - 1e-9 {
                hits += 1;
            }
        }
        let mc = hits as f64 / draws as f64;
        mc_worst = mc_worst.max((approx.p_value - mc).abs());
    }
    ensure(mc_worst <= 0.01, || {
        format!("normal approximation off by {mc_worst:.4}")
    })?;
    Ok(format!(
        "p = 1/3 exact; {pairs} sample pairs with combined size <= 10 match enumeration; normal vs 1e5-permutation Monte Carlo max gap {mc_worst:.4}"
    ))
}

/// U statistic in O(n log n) for the Monte Carlo loop.
fn u_statistic_sorted(x: &[f64], y: &[f64]) -> f64 {
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let mut u = 0.0;
    for a in x {
        let below = ys.partition_point(|b| b < a);
        let upto = ys.partition_point(|b| b <= a);
        u += below as f64 + 0.5 * (upto - below) as f64;
    }
    u
}

// 6: VAE training at desk scale

fn vae_training() -> Check {
    let start = Instant::now();
    let set = synthetic_corpus().map_err(|e| e.to_string())?;
    let x = set.get(&"X".into()).map_err(|e| e.to_string())?;
    let data = sample_training_segments(x, 50, 1, 0).map_err(|e| e.to_string())?;
    ensure(data.len() == 50 && data.iter().all(|s| s.dims() == (8, 8)), || {
        "fixture segments".into()
    })?;
    let config = ModelConfig {
        epochs: 500,
        seed: 6,
        ..ModelConfig::default()
    };
    let model = train_vae(&data, &config).map_err(|e| e.to_string())?;
    let first = model.history[0].recon_error;
    let ratio = model.best_recon_error / first;
    ensure(ratio <= 0.1, || format!("best/epoch-1 reconstruction error {ratio:.4}"))?;
    let kl_ok = model.history.iter().all(|r| r.train_kl >= 0.0);
    ensure(kl_ok, || "negative KL term logged".into())?;

    let samples = sample_sketches(&model, 20, 60).map_err(|e| e.to_string())?;
    for s in &samples {
        ensure(s.dims() == (8, 8), || format!("sample dims {:?}", s.dims()))?;
        let text = sketch_to_text(s);
        ensure(text.chars().all(|c| matches!(c, '#' | '-' | '?' | '\n')), || {
            "sample symbols".into()
        })?;
        ensure(parse_sketch(&text).ok().as_ref() == Some(s), || {
            "sample does not round-trip".into()
        })?;
    }
    let elapsed = start.elapsed();

    // gradient check on the same architecture, evenly spaced entries of every tensor
    let arch = ConvVaeArch::new(8, 8, config.latent_dim);
    let fresh = ConvVae::new(arch, 61);
    let refs: Vec<&SketchGrid> = data.iter().take(4).collect();
    let batch = Batch::from_sketches(&refs).map_err(|e| e.to_string())?;
    let mut rng = rng_from(6, &[601]);
    let eps: Vec<f64> = (0..4 * config.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
    let gc = gradient_check_subset(&fresh, &batch, &eps, 1e-5, 24).map_err(|e| e.to_string())?;
    ensure(gc.max_rel_error <= 1e-3, || {
        format!("gradient check max relative error {:.2e}", gc.max_rel_error)
    })?;
    ensure(elapsed < Duration::from_secs(300), || {
        format!("training took {}", secs(elapsed))
    })?;
    Ok(format!(
        "best epoch {} ratio {ratio:.4}; KL >= 0 at all {} epochs; gradient check {:.1e} over {} entries; 20 valid samples; {}",
        model.best_epoch,
        model.history.len(),
        gc.max_rel_error,
        gc.checked,
        secs(elapsed)
    ))
}

// 7: CLI determinism

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn cli_round(root: &Path) -> std::result::Result<Vec<String>, String> {
    let bin = env!("CARGO_BIN_EXE_sketchblend");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synth/manifest.json");
    let m = manifest.to_str().unwrap();
    std::fs::create_dir_all(root).map_err(|e| e.to_string())?;
    std::fs::write(
        root.join("existing.json"),
        format!(r#"{{"manifest": {m:?}, "sketch_source": "existing-levels", "domain": "Z", "subset": "ALL", "total": 8, "seed": 5}}"#),
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(
        root.join("generated.json"),
        format!(
            r#"{{"manifest": {m:?}, "sketch_source": "generated-segments", "domain": "X", "subset": "ALL", "n_sketches": 3, "per_sketch": 2, "model": "models/x.json", "seed": 5}}"#
        ),
    )
    .map_err(|e| e.to_string())?;
    let verbs: Vec<(&str, Vec<&str>)> = vec![
        ("ingest", vec!["ingest", "--manifest", m, "--out", "ingest"]),
        (
            "sketch",
            vec!["sketch", "--manifest", m, "--domain", "Y", "--out", "sketch"],
        ),
        (
            "train-vae",
            vec![
                "train-vae",
                "--domain",
                "X",
                "--manifest",
                m,
                "--out",
                "models/x.json",
                "--epochs",
                "3",
                "--seed",
                "1",
                "--latent-dim",
                "8",
                "--stride",
                "4",
            ],
        ),
        (
            "train-cvae",
            vec![
                "train-cvae",
                "--manifest",
                m,
                "--out",
                "models/c.json",
                "--epochs",
                "2",
                "--seed",
                "1",
                "--latent-dim",
                "8",
                "--stride",
                "6",
                "--window",
                "8",
                "8",
            ],
        ),
        (
            "gen-sketch",
            vec![
                "gen-sketch",
                "--model",
                "models/x.json",
                "-n",
                "4",
                "--seed",
                "3",
                "--out",
                "gen",
            ],
        ),
        (
            "gen-sketch (conditional)",
            vec![
                "gen-sketch",
                "--model",
                "models/c.json",
                "-n",
                "4",
                "--seed",
                "3",
                "--domain",
                "Z",
                "--out",
                "genc",
            ],
        ),
        (
            "fill",
            vec![
                "fill",
                "--sketch",
                "gen/sketches/sketch_0000.txt",
                "--corpora",
                m,
                "--exclude-domain",
                "X",
                "--max-region",
                "4",
                "--seed",
                "9",
                "--out",
                "fill",
            ],
        ),
        (
            "eval",
            vec![
                "eval",
                "--manifest",
                m,
                "--domain",
                "X",
                "--model",
                "models/x.json",
                "--cvae",
                "models/c.json",
                "-n",
                "20",
                "--train-sample",
                "20",
                "--seed",
                "2",
                "--out",
                "eval",
            ],
        ),
        (
            "experiment (existing)",
            vec!["experiment", "--spec", "existing.json", "--out", "exp"],
        ),
        (
            "experiment (generated)",
            vec!["experiment", "--spec", "generated.json", "--out", "expg"],
        ),
    ];
    let mut names = Vec::new();
    for (name, args) in verbs {
        let out = Command::new(bin)
            .args(&args)
            .current_dir(root)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("{name} failed: {}", String::from_utf8_lossy(&out.stderr))
        })?;
        names.push(name.to_string());
    }
    Ok(names)
}

fn cli_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let verbs = cli_round(&a)?;
    cli_round(&b)?;
    let (fa, fb) = (files_under(&a), files_under(&b));
    ensure(fa.keys().eq(fb.keys()), || "runs produced different file sets".into())?;
    let differing: Vec<&String> = fa.iter().filter(|(k, v)| fb[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), || format!("files differ: {differing:?}"))?;
    for required in [
        "fill/level.txt",
        "fill/provenance.json",
        "exp/reports/report.csv",
        "expg/reports/report.json",
        "eval/reports/report.json",
    ] {
        ensure(fa.contains_key(required), || format!("missing {required}"))?;
    }
    Ok(format!(
        "{} verb runs, {} files byte-identical across reruns",
        verbs.len(),
        fa.len()
    ))
}

// 8: real corpora

fn vglc(root: &Path) -> Check {
    let path = root.join("manifest.json");
    let manifest = CorpusManifest::load(&path).map_err(|e| e.to_string())?;
    let unbudgeted = CorpusManifest {
        tile_budget: None,
        ..manifest.clone()
    };
    let full = CorpusSet::from_manifest(&unbudgeted, root).map_err(|e| e.to_string())?;
    let cv = full.get(&"CV".into()).map_err(|e| e.to_string())?;
    ensure(cv.total_tiles() == 17_728, || {
        format!("CV has {} tiles", cv.total_tiles())
    })?;

    let lr = full.get(&"LR".into()).map_err(|e| e.to_string())?;
    let aff = sketchblend::corpus::default_affordance("LR")
        .unwrap()
        .map_err(|e| e.to_string())?;
    let (mut wild, mut total) = (0usize, 0usize);
    for l in &lr.levels {
        let s = project_sketch(l, &aff).map_err(|e| e.to_string())?;
        wild += s.cells().iter().filter(|&&c| c == SketchCell::Wildcard).count();
        total += s.len();
    }
    let share = wild as f64 / total as f64;
    ensure((share - 0.12).abs() <= 0.02, || format!("LR wildcard share {share:.4}"))?;

    // reports shaped like the sketch statistics and domain proportion tables
    let set = CorpusSet::from_manifest(&manifest, root).map_err(|e| e.to_string())?;
    let all = SubsetDef {
        name: "ALL".into(),
        members: set.ids(),
    };
    let mut stats = ReportTable::new("sketch statistics");
    let mut props = ReportTable::new("domain proportions");
    let config = ModelConfig {
        epochs: 20,
        stride: 4,
        ..ModelConfig::default()
    };
    for c in &set.domains {
        let segs = sample_training_segments(c, 400, config.stride, 0).map_err(|e| e.to_string())?;
        let mut model = train_vae(&segs, &config).map_err(|e| e.to_string())?;
        model.domain_id = Some(c.domain_id.clone());
        stats.extend(
            run_sketch_eval(&c.domain_id, Some(&model), c, 100, 100, 0, &EvalOptions::default())
                .map_err(|e| e.to_string())?,
        );
        props.extend(
            run_fill_existing(&c.domain_id, &all, &set, 100, StopRule::default(), 0)
                .map_err(|e| e.to_string())?
                .table,
        );
    }
    for c in &set.domains {
        let row = c.domain_id.as_str();
        for metric in ["density", "non-linearity", "plagiarism"] {
            for sample in ["training", "generated"] {
                ensure(stats.entry(row, metric, sample).is_some(), || {
                    format!("sketch statistics lack {row}/{metric}/{sample}")
                })?;
            }
        }
        ensure(
            stats.entry(row, "e-distance", "generated-vs-training").is_some(),
            || format!("sketch statistics lack {row} e-distance"),
        )?;
        for other in set.ids().iter().filter(|d| *d != &c.domain_id) {
            ensure(
                props.entry(row, "domain-proportion/ALL", other.as_str()).is_some(),
                || format!("domain proportions lack {row}/{other}"),
            )?;
        }
    }
    Ok(format!(
        "CV 17,728 tiles; LR wildcard share {share:.4}; sketch statistics and domain proportion reports over {} domains",
        set.domains.len()
    ))
}

fn real_corpora() -> Outcome {
    match std::env::var_os("VGLC_ROOT") {
        None => Outcome::Skip("VGLC_ROOT not set; needs user-supplied VGLC corpora".into()),
        Some(root) => match vglc(&PathBuf::from(root)) {
            Ok(s) => Outcome::Pass(s),
            Err(e) => Outcome::Fail(e),
        },
    }
}

fn main() -> ExitCode {
    // ignore libtest flags such as --nocapture passed through by cargo
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |n: usize| args.is_empty() || args.iter().any(|a| a == &n.to_string());

    type Criterion = (usize, &'static str, fn() -> Outcome);
    let checks: Vec<Criterion> = vec![
        (1, "partition suite", || wrap(partition_suite())),
        (2, "fill validity", || wrap(fill_validity())),
        (3, "wildcard dominance", || wrap(wildcard_dominance())),
        (4, "metric oracles", || wrap(metric_oracles())),
        (5, "rank-sum test", || wrap(wilcoxon())),
        (6, "VAE training", || wrap(vae_training())),
        (7, "CLI determinism", || wrap(cli_determinism())),
        (8, "VGLC corpora", real_corpora),
    ];
    let mut failed = 0;
    for (n, name, check) in checks {
        if !wanted(n) {
            continue;
        }
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        match outcome {
            Outcome::Pass(d) => println!("PASS [{n}] {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL [{n}] {name}: {d}");
            }
            Outcome::Skip(d) => println!("SKIP [{n}] {name}: {d}"),
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn wrap(c: Check) -> Outcome {
    match c {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}
