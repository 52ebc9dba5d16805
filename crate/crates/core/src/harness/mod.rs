//! Experiment protocols: sketch-generator evaluation and blended fills of
//! existing or generated sketches, with reports and run directories.

pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{counts_to_distribution, level_to_text, CorpusSet, DomainCorpus, DomainId, TileGrid};
use crate::edbsp::{
    blended_element_counts, domain_proportion, fill_with_index, FillConfig, MatchIndex, ProvenanceGrid, StopRule,
};
use crate::error::{Error, Result};
use crate::genmodel::{sample_sketches, ModelParameters};
use crate::metrics::{
    cross_plagiarism, e_distance, kl_divergence, pairwise_plagiarism, uniform, wilcoxon_rank_sum, FeatureVector,
    PlagiarismMode, WildcardRule, KL_EPSILON,
};
use crate::seed::{derive_seed, rng_from, stream};
use crate::sketch::{corpus_segments, project_sketch, sketch_to_text, SketchGrid};

pub use report::{
    emit_report, read_raw_csv, read_report_csv, read_report_json, ReportEntry, ReportFormat, ReportTable,
};

/// Domains whose sketches contain wildcard tiles.
pub const WC_DOMAINS: [&str; 4] = ["CV", "LR", "MM", "NG"];
/// Domains without wildcard tiles.
pub const NWC_DOMAINS: [&str; 3] = ["KI", "MT", "SM"];

/// A named group of fill domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetDef {
    pub name: String,
    pub members: Vec<DomainId>,
}

impl SubsetDef {
    pub fn wc() -> Self {
        SubsetDef {
            name: "WC".into(),
            members: WC_DOMAINS.iter().map(|&d| d.into()).collect(),
        }
    }

    pub fn nwc() -> Self {
        SubsetDef {
            name: "NWC".into(),
            members: NWC_DOMAINS.iter().map(|&d| d.into()).collect(),
        }
    }

    pub fn all() -> Self {
        let mut s = Self::wc();
        s.name = "ALL".into();
        s.members.extend(Self::nwc().members);
        s
    }

    /// Members with the sketch's own domain removed.
    pub fn excluding(&self, domain: &DomainId) -> Result<Vec<DomainId>> {
        let rest: Vec<DomainId> = self.members.iter().filter(|d| *d != domain).cloned().collect();
        if rest.is_empty() {
            return Err(Error::EmptySubsetAfterExclusion(self.name.clone()));
        }
        Ok(rest)
    }
}

/// A subset in an experiment file: a standard name, or explicit members.
/// `ALL` names every domain of the loaded corpus set; `WC` and `NWC` are the
/// standard groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubsetRef {
    Named(String),
    Custom(SubsetDef),
}

impl SubsetRef {
    pub fn resolve(&self, corpora: &CorpusSet) -> Result<SubsetDef> {
        match self {
            SubsetRef::Custom(s) => Ok(s.clone()),
            SubsetRef::Named(n) => match n.as_str() {
                "ALL" => Ok(SubsetDef {
                    name: "ALL".into(),
                    members: corpora.ids(),
                }),
                "WC" => Ok(SubsetDef::wc()),
                "NWC" => Ok(SubsetDef::nwc()),
                other => Err(Error::InvalidExperiment(format!("unknown subset {other}"))),
            },
        }
    }
}

/// Splits `total` as evenly as possible over `k` items, remainder first.
pub fn split_counts(total: usize, k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    (0..k).map(|i| total / k + usize::from(i < total % k)).collect()
}

/// Options shared by the evaluation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub wildcards: WildcardRule,
    pub plagiarism: PlagiarismMode,
    /// Stride used to cut the training segments that are sampled.
    pub stride: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            wildcards: WildcardRule::NotSolid,
            plagiarism: PlagiarismMode::Aligned,
            stride: 1,
        }
    }
}

/// Up to `n` training segments of a domain, drawn without replacement.
/// The draw depends only on `(domain corpus, seed)`.
pub fn sample_training_segments(corpus: &DomainCorpus, n: usize, stride: usize, seed: u64) -> Result<Vec<SketchGrid>> {
    let segments = corpus_segments(corpus, stride)?;
    if segments.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut rng = rng_from(seed, &[stream::TRAIN_SAMPLE]);
    let k = n.min(segments.len());
    let mut idx = sample_indices(&mut rng, segments.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| segments[i].grid.clone()).collect())
}

fn features(sketches: &[SketchGrid], rule: WildcardRule) -> Result<Vec<FeatureVector>> {
    sketches.iter().map(|s| FeatureVector::of(s, rule)).collect()
}

/// Generated-vs-training comparison of one domain's sketch generator:
/// density, non-linearity and plagiarism for both samples with rank-sum
/// tests, and the E-distance between the feature samples.
///
/// Training plagiarism is over pairs within the training sample; generated
/// plagiarism is over every (generated, training) pair.
pub fn run_sketch_eval(
    domain: &DomainId,
    model: Option<&ModelParameters>,
    corpus: &DomainCorpus,
    n: usize,
    train_sample: usize,
    seed: u64,
    options: &EvalOptions,
) -> Result<ReportTable> {
    let model = model.ok_or_else(|| Error::MissingModel(domain.to_string()))?;
    if n == 0 || train_sample < 2 {
        return Err(Error::InvalidExperiment(
            "need at least 1 generated and 2 training sketches".into(),
        ));
    }
    let generated = sample_sketches(model, n, derive_seed(seed, &[stream::SAMPLE]))?;
    let training = sample_training_segments(corpus, train_sample, options.stride, seed)?;
    if generated[0].dims() != training[0].dims() {
        return Err(Error::DimMismatch(
            generated[0].height(),
            generated[0].width(),
            training[0].height(),
            training[0].width(),
        ));
    }
    let ft = features(&training, options.wildcards)?;
    let fg = features(&generated, options.wildcards)?;
    let row = domain.as_str();
    let mut table = ReportTable::new("sketch generator evaluation");
    table.note("density and non-linearity treat wildcards per the recorded wildcard rule");
    table.note("e-distance is the un-rooted energy statistic over (density, non-linearity)");
    table.note(
        "training plagiarism: pairs within the training sample; generated plagiarism: generated x training pairs",
    );

    type Column = (&'static str, fn(&FeatureVector) -> f64);
    let columns: [Column; 2] = [("density", |f| f.density), ("non-linearity", |f| f.non_linearity)];
    for (metric, get) in columns {
        let t: Vec<f64> = ft.iter().map(get).collect();
        let g: Vec<f64> = fg.iter().map(get).collect();
        table.record(row, metric, "training", &t);
        table.record(row, metric, "generated", &g);
        table.set_p_value(row, metric, "generated", wilcoxon_rank_sum(&t, &g)?.p_value);
    }
    let pt = pairwise_plagiarism(&training, options.plagiarism)?;
    let pg = cross_plagiarism(&generated, &training, options.plagiarism)?;
    table.record(row, "plagiarism", "training", &pt);
    table.record(row, "plagiarism", "generated", &pg);
    table.set_p_value(row, "plagiarism", "generated", wilcoxon_rank_sum(&pt, &pg)?.p_value);

    let a: Vec<[f64; 2]> = fg.iter().map(|f| f.to_array()).collect();
    let b: Vec<[f64; 2]> = ft.iter().map(|f| f.to_array()).collect();
    table.record(row, "e-distance", "generated-vs-training", &[e_distance(&a, &b)?]);
    Ok(table)
}

/// E-distances between conditional-model sketches, the domain's own VAE
/// sketches and a training sample.
pub fn run_cvae_eval(
    domain: &DomainId,
    cvae: &ModelParameters,
    vae: &ModelParameters,
    corpus: &DomainCorpus,
    n: usize,
    seed: u64,
    options: &EvalOptions,
) -> Result<ReportTable> {
    let label = cvae
        .domains
        .iter()
        .position(|d| d == domain)
        .ok_or_else(|| Error::UnknownDomain(domain.to_string()))?;
    let (h, w) = cvae.window();
    let mut cmodel = cvae.cvae()?;
    let c = cmodel.sample(label, n, derive_seed(seed, &[stream::SAMPLE, 1]))?;
    let v = sample_sketches(vae, n, derive_seed(seed, &[stream::SAMPLE]))?;
    let t = sample_training_segments(corpus, n, options.stride, seed)?;
    let feat = |s: &[SketchGrid]| -> Result<Vec<[f64; 2]>> {
        Ok(features(s, options.wildcards)?
            .into_iter()
            .map(|f| f.to_array())
            .collect())
    };
    let (fc, fv, ft) = (feat(&c)?, feat(&v)?, feat(&t)?);
    let row = domain.as_str();
    let mut table = ReportTable::new("conditional generator e-distances");
    table.note(format!(
        "conditional sketches are {h}x{w}; VAE and training sketches use the domain window"
    ));
    table.record(row, "e-distance", "cvae-vs-vae", &[e_distance(&fc, &fv)?]);
    table.record(row, "e-distance", "cvae-vs-training", &[e_distance(&fc, &ft)?]);
    table.record(row, "e-distance", "vae-vs-training", &[e_distance(&fv, &ft)?]);
    Ok(table)
}

/// One blended level produced by a fill protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct FilledLevel {
    pub name: String,
    pub sketch_index: usize,
    pub fill_index: usize,
    pub seed: u64,
    pub sketch: SketchGrid,
    pub level: TileGrid,
    pub provenance: ProvenanceGrid,
}

/// Levels and reports of one fill protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct FillRun {
    pub domain: DomainId,
    pub subset: SubsetDef,
    pub fill_domains: Vec<DomainId>,
    pub levels: Vec<FilledLevel>,
    pub table: ReportTable,
}

/// Fills `counts[i]` levels from sketch `i`, leaving the sketch domain out
/// of the fill corpora, and reports domain proportions and element KL.
fn run_fills(
    domain: &DomainId,
    subset: &SubsetDef,
    corpora: &CorpusSet,
    sketches: &[(String, SketchGrid)],
    counts: &[usize],
    stop: StopRule,
    seed: u64,
) -> Result<FillRun> {
    let fill_domains = subset.excluding(domain)?;
    let fill_corpora = corpora.select(&fill_domains)?;
    let index = MatchIndex::new(&fill_corpora)?;
    let config = FillConfig { stop };
    let mut levels = Vec::new();
    for (si, ((name, sketch), &count)) in sketches.iter().zip(counts).enumerate() {
        for fi in 0..count {
            let s = derive_seed(seed, &[stream::FILL, si as u64, fi as u64]);
            let r = fill_with_index(sketch, &index, &config, &mut rng_from(s, &[]))?;
            levels.push(FilledLevel {
                name: format!("{name}_{fi:03}"),
                sketch_index: si,
                fill_index: fi,
                seed: s,
                sketch: sketch.clone(),
                level: r.level,
                provenance: r.provenance,
            });
        }
    }
    let table = fill_report(
        domain,
        subset,
        &fill_domains,
        &fill_corpora,
        corpora.get(domain)?,
        &levels,
    )?;
    Ok(FillRun {
        domain: domain.clone(),
        subset: subset.clone(),
        fill_domains,
        levels,
        table,
    })
}

/// Domain proportions (one value per level per fill domain) and element
/// distribution KL divergences. The pooled KL is `KL(generated || training)`
/// over all levels' tiles; the uniform column is `KL(training || uniform)`.
fn fill_report(
    domain: &DomainId,
    subset: &SubsetDef,
    fill_domains: &[DomainId],
    fill_corpora: &[DomainCorpus],
    sketch_corpus: &DomainCorpus,
    levels: &[FilledLevel],
) -> Result<ReportTable> {
    let row = domain.as_str();
    let sub = subset.name.as_str();
    let mut table = ReportTable::new("blended fills");
    table.note("element KL: KL(generated || training), natural log, epsilon 1e-6 smoothing with renormalization");
    table.note("uniform column: KL(training || uniform) over the six element categories");

    let props: Vec<BTreeMap<DomainId, f64>> = levels.iter().map(|l| domain_proportion(&l.provenance)).collect();
    for d in fill_domains {
        let values: Vec<f64> = props.iter().map(|p| p.get(d).copied().unwrap_or(0.0)).collect();
        table.record(row, &format!("domain-proportion/{sub}"), d.as_str(), &values);
    }

    let training = sketch_corpus.element_distribution()?;
    let mut pooled = [0u64; 6];
    let mut per_level = Vec::with_capacity(levels.len());
    for l in levels {
        let counts = blended_element_counts(&l.level, &l.provenance, fill_corpora)?;
        per_level.push(kl_divergence(&counts_to_distribution(&counts), &training, KL_EPSILON));
        for (p, c) in pooled.iter_mut().zip(counts) {
            *p += c;
        }
    }
    table.record(row, &format!("element-kl-per-level/{sub}"), "training", &per_level);
    table.record(
        row,
        "element-kl",
        sub,
        &[kl_divergence(&counts_to_distribution(&pooled), &training, KL_EPSILON)],
    );
    table.record(
        row,
        "element-kl",
        "uniform",
        &[kl_divergence(&training, &uniform(6), KL_EPSILON)],
    );
    Ok(table)
}

/// Fills the domain's own (projected) levels, `total` fills split evenly
/// across them.
pub fn run_fill_existing(
    domain: &DomainId,
    subset: &SubsetDef,
    corpora: &CorpusSet,
    total: usize,
    stop: StopRule,
    seed: u64,
) -> Result<FillRun> {
    let corpus = corpora.get(domain)?;
    let sketches = corpus
        .levels
        .iter()
        .zip(&corpus.level_names)
        .map(|(l, name)| Ok((name.clone(), project_sketch(l, &corpus.affordance)?)))
        .collect::<Result<Vec<_>>>()?;
    let counts = split_counts(total, sketches.len());
    run_fills(domain, subset, corpora, &sketches, &counts, stop, seed)
}

/// Samples `n_sketches` sketches from the domain's model and fills each one
/// `per_sketch` times.
#[allow(clippy::too_many_arguments)]
pub fn run_fill_generated(
    domain: &DomainId,
    subset: &SubsetDef,
    corpora: &CorpusSet,
    model: Option<&ModelParameters>,
    per_sketch: usize,
    n_sketches: usize,
    stop: StopRule,
    seed: u64,
) -> Result<FillRun> {
    let model = model.ok_or_else(|| Error::MissingModel(domain.to_string()))?;
    let sketches: Vec<(String, SketchGrid)> = sample_sketches(model, n_sketches, derive_seed(seed, &[stream::SAMPLE]))?
        .into_iter()
        .enumerate()
        .map(|(i, s)| (format!("gen{i:03}"), s))
        .collect();
    let counts = vec![per_sketch; sketches.len()];
    run_fills(domain, subset, corpora, &sketches, &counts, stop, seed)
}

/// Where the sketches of an experiment come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchSource {
    ExistingLevels,
    GeneratedSegments,
}

/// An experiment file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub manifest: PathBuf,
    pub sketch_source: SketchSource,
    pub domain: DomainId,
    pub subset: SubsetRef,
    /// Total fills over the existing levels.
    #[serde(default = "default_total")]
    pub total: usize,
    /// Generated sketches to fill.
    #[serde(default = "default_total")]
    pub n_sketches: usize,
    /// Fills per generated sketch.
    #[serde(default = "default_per_sketch")]
    pub per_sketch: usize,
    #[serde(default)]
    pub stop: StopRule,
    /// Model file, required for generated sketches.
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub seed: u64,
}

fn default_total() -> usize {
    100
}

fn default_per_sketch() -> usize {
    10
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| Error::json("experiment spec", e))?;
        Ok((spec, path.parent().unwrap_or(Path::new(".")).to_path_buf()))
    }

    /// SHA-256 of the canonical JSON form of the spec.
    pub fn config_hash(&self) -> String {
        config_hash(self)
    }

    pub fn run(&self, base: &Path) -> Result<FillRun> {
        let corpora = CorpusSet::load_manifest(&base.join(&self.manifest))?;
        let subset = self.subset.resolve(&corpora)?;
        match self.sketch_source {
            SketchSource::ExistingLevels => {
                run_fill_existing(&self.domain, &subset, &corpora, self.total, self.stop, self.seed)
            }
            SketchSource::GeneratedSegments => {
                let model = match &self.model {
                    Some(p) => Some(ModelParameters::load(&base.join(p))?),
                    None => None,
                };
                run_fill_generated(
                    &self.domain,
                    &subset,
                    &corpora,
                    model.as_ref(),
                    self.per_sketch,
                    self.n_sketches,
                    self.stop,
                    self.seed,
                )
            }
        }
    }
}

/// SHA-256 hex digest of a value's JSON serialization.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Contents of `manifest.json` in a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    /// Output files relative to the run directory with their SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// Writes a run manifest covering every file already in `dir`.
pub fn write_run_manifest<T: Serialize>(dir: &Path, command: &str, config: &T) -> Result<PathBuf> {
    let mut outputs = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("inside run dir");
                if rel == Path::new("manifest.json") {
                    continue;
                }
                let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                outputs.insert(key, hex::encode(Sha256::digest(&bytes)));
            }
        }
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: serde_json::to_value(config).expect("config serializes"),
        config_hash: config_hash(config),
        outputs,
    };
    let path = dir.join("manifest.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes levels, sketches and provenance of a fill run plus its reports
/// under `dir`.
pub fn write_fill_run(dir: &Path, run: &FillRun) -> Result<()> {
    for sub in ["levels", "sketches", "provenance", "reports"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut written_sketches = std::collections::BTreeSet::new();
    for l in &run.levels {
        let p = dir.join("levels").join(format!("{}.txt", l.name));
        std::fs::write(&p, level_to_text(&l.level)).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("provenance").join(format!("{}.json", l.name));
        std::fs::write(&p, serde_json::to_string(&l.provenance).expect("provenance serializes"))
            .map_err(|e| Error::io(&p, e))?;
        if written_sketches.insert(l.sketch_index) {
            let stem = l.name.rsplit_once('_').map_or(l.name.as_str(), |(a, _)| a);
            let p = dir.join("sketches").join(format!("{stem}.txt"));
            std::fs::write(&p, sketch_to_text(&l.sketch)).map_err(|e| Error::io(&p, e))?;
        }
    }
    let reports = dir.join("reports");
    emit_report(&run.table, ReportFormat::Csv, &reports, "report")?;
    emit_report(&run.table, ReportFormat::Json, &reports, "report")?;
    Ok(())
}
