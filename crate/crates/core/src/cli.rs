//! Command-line verbs. The binary only parses arguments and calls [`run`].
//!
//! Every verb that writes a directory also writes `manifest.json` there,
//! holding the effective configuration, its hash and the SHA-256 of every
//! output. Output paths are left out of the recorded configuration so that
//! reruns into different directories produce identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::corpus::{level_to_text, CorpusSet, DomainCorpus, DomainId};
use crate::edbsp::{domain_proportion, fill_sketch, FillConfig, StopRule};
use crate::error::{Error, Result};
use crate::genmodel::{sample_sketches, train_cvae, train_vae, ModelConfig, ModelParameters, CVAE_WINDOW};
use crate::harness::{
    emit_report, run_cvae_eval, run_sketch_eval, write_fill_run, write_run_manifest, EvalOptions, ExperimentSpec,
    ReportFormat,
};
use crate::metrics::{PlagiarismMode, WildcardRule};
use crate::seed::{derive_seed, rng_from, stream};
use crate::sketch::{
    class_fraction, corpus_segments, corpus_segments_sized, parse_sketch, project_sketch, sketch_to_text, SketchCell,
};

#[derive(Debug, Parser)]
#[command(
    name = "sketchblend",
    version,
    about = "Sketch-level generation and example-driven BSP domain blending"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WildcardArg {
    NotSolid,
    AsSolid,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlagiarismArg {
    Aligned,
    AnyPosition,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus manifest and summarize tile counts and element mixes.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project a domain's levels to sketches and count training segments.
    Sketch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        domain: String,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a per-domain VAE on the domain's sketch segments.
    TrainVae {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON model config; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        latent_dim: Option<usize>,
        /// Sliding-window stride for cutting training segments.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Train the conditional VAE over several domains at one shared window.
    TrainCvae {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Domains to condition on, in label order (default: all).
        #[arg(long, num_args = 1..)]
        domains: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        latent_dim: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Shared window as HEIGHT WIDTH (default 11 16).
        #[arg(long, num_args = 2)]
        window: Option<Vec<usize>>,
    },
    /// Sample sketches from a trained model.
    GenSketch {
        #[arg(long)]
        model: PathBuf,
        #[arg(short = 'n', long = "count")]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Domain label, for conditional models.
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill one sketch with content from one or more corpus manifests.
    Fill {
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        corpora: Vec<PathBuf>,
        #[arg(long)]
        exclude_domain: Option<String>,
        #[arg(long)]
        max_region: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generated-vs-training sketch statistics for one domain.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        model: PathBuf,
        /// Conditional model; adds the conditional e-distance comparison.
        #[arg(long)]
        cvae: Option<PathBuf>,
        #[arg(short = 'n', long = "count", default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        train_sample: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, value_enum, default_value = "not-solid")]
        wildcards: WildcardArg,
        #[arg(long, value_enum, default_value = "aligned")]
        plagiarism: PlagiarismArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a fill experiment described by a JSON spec file.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { manifest, out } => ingest(&manifest, &out),
        Command::Sketch {
            manifest,
            domain,
            stride,
            out,
        } => sketch(&manifest, &domain.into(), stride, &out),
        Command::TrainVae {
            domain,
            manifest,
            out,
            config,
            epochs,
            seed,
            latent_dim,
            stride,
        } => {
            let config = model_config(config.as_deref(), epochs, seed, latent_dim, stride)?;
            train_vae_cmd(&manifest, &domain.into(), &config, &out)
        }
        Command::TrainCvae {
            manifest,
            out,
            domains,
            config,
            epochs,
            seed,
            latent_dim,
            stride,
            window,
        } => {
            let mut config = model_config(config.as_deref(), epochs, seed, latent_dim, stride)?;
            if let Some(w) = window {
                config.window = Some([w[0], w[1]]);
            }
            let domains: Vec<DomainId> = domains.into_iter().map(DomainId::from).collect();
            train_cvae_cmd(&manifest, &domains, &config, &out)
        }
        Command::GenSketch {
            model,
            n,
            seed,
            domain,
            out,
        } => gen_sketch(&model, n, seed, domain.map(DomainId::from), &out),
        Command::Fill {
            sketch,
            corpora,
            exclude_domain,
            max_region,
            seed,
            out,
        } => fill(
            &sketch,
            &corpora,
            exclude_domain.map(DomainId::from),
            max_region,
            seed,
            &out,
        ),
        Command::Eval {
            manifest,
            domain,
            model,
            cvae,
            n,
            train_sample,
            stride,
            wildcards,
            plagiarism,
            seed,
            out,
        } => {
            let options = EvalOptions {
                wildcards: match wildcards {
                    WildcardArg::NotSolid => WildcardRule::NotSolid,
                    WildcardArg::AsSolid => WildcardRule::AsSolid,
                },
                plagiarism: match plagiarism {
                    PlagiarismArg::Aligned => PlagiarismMode::Aligned,
                    PlagiarismArg::AnyPosition => PlagiarismMode::AnyPosition,
                },
                stride,
            };
            eval(&EvalArgs {
                manifest: &manifest,
                domain: domain.into(),
                model: &model,
                cvae: cvae.as_deref(),
                n,
                train_sample,
                seed,
                options,
                out: &out,
            })
        }
        Command::Experiment { spec, out } => experiment(&spec, &out),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct DomainSummary {
    domain_id: DomainId,
    levels: Vec<String>,
    total_tiles: usize,
    window: [usize; 2],
    element_distribution: BTreeMap<&'static str, f64>,
    sketch_fractions: BTreeMap<&'static str, f64>,
}

fn summarize(c: &DomainCorpus) -> Result<DomainSummary> {
    let dist = c.element_distribution()?;
    let (mut counts, mut total) = ([0.0; 3], 0.0);
    for l in &c.levels {
        let s = project_sketch(l, &c.affordance)?;
        for (k, class) in [SketchCell::Solid, SketchCell::Empty, SketchCell::Wildcard]
            .into_iter()
            .enumerate()
        {
            counts[k] += class_fraction(&s, class) * s.len() as f64;
        }
        total += s.len() as f64;
    }
    Ok(DomainSummary {
        domain_id: c.domain_id.clone(),
        levels: c.level_names.clone(),
        total_tiles: c.total_tiles(),
        window: [c.window_height, c.window_width],
        element_distribution: crate::corpus::ElementCategory::ALL
            .iter()
            .map(|e| (e.name(), dist[e.index()]))
            .collect(),
        sketch_fractions: [("solid", counts[0]), ("empty", counts[1]), ("wildcard", counts[2])]
            .into_iter()
            .map(|(k, v)| (k, if total > 0.0 { v / total } else { 0.0 }))
            .collect(),
    })
}

fn ingest(manifest: &Path, out: &Path) -> Result<()> {
    let set = CorpusSet::load_manifest(manifest)?;
    create_dir(out)?;
    let summary = set.domains.iter().map(summarize).collect::<Result<Vec<_>>>()?;
    write(&out.join("summary.json"), to_json(&summary))?;
    write_run_manifest(out, "ingest", &serde_json::json!({ "manifest": file_name(manifest) }))?;
    Ok(())
}

fn sketch(manifest: &Path, domain: &DomainId, stride: usize, out: &Path) -> Result<()> {
    let set = CorpusSet::load_manifest(manifest)?;
    let corpus = set.get(domain)?;
    let dir = out.join("sketches");
    create_dir(&dir)?;
    for (level, name) in corpus.levels.iter().zip(&corpus.level_names) {
        let s = project_sketch(level, &corpus.affordance)?;
        write(&dir.join(format!("{name}.txt")), sketch_to_text(&s))?;
    }
    let segments = corpus_segments(corpus, stride)?;
    let summary = serde_json::json!({
        "domain_id": domain,
        "window": [corpus.window_height, corpus.window_width],
        "stride": stride,
        "segments": segments.len(),
    });
    write(&out.join("summary.json"), to_json(&summary))?;
    write_run_manifest(
        out,
        "sketch",
        &serde_json::json!({ "manifest": file_name(manifest), "domain": domain, "stride": stride }),
    )?;
    Ok(())
}

fn model_config(
    path: Option<&Path>,
    epochs: Option<usize>,
    seed: Option<u64>,
    latent: Option<usize>,
    stride: Option<usize>,
) -> Result<ModelConfig> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::json("model config", e))?
        }
        None => ModelConfig::default(),
    };
    if let Some(e) = epochs {
        config.epochs = e;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(l) = latent {
        config.latent_dim = l;
    }
    if let Some(s) = stride {
        config.stride = s;
    }
    config.validate()?;
    Ok(config)
}

fn write_model(model: &ModelParameters, out: &Path) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    model.save(out)
}

fn train_vae_cmd(manifest: &Path, domain: &DomainId, config: &ModelConfig, out: &Path) -> Result<()> {
    let set = CorpusSet::load_manifest(manifest)?;
    let corpus = set.get(domain)?;
    let (h, w) = config
        .window
        .map(|[h, w]| (h, w))
        .unwrap_or((corpus.window_height, corpus.window_width));
    let segments: Vec<_> = corpus_segments_sized(corpus, h, w, config.stride)?
        .into_iter()
        .map(|s| s.grid)
        .collect();
    let mut model = train_vae(&segments, config)?;
    model.domain_id = Some(domain.clone());
    write_model(&model, out)
}

fn train_cvae_cmd(manifest: &Path, domains: &[DomainId], config: &ModelConfig, out: &Path) -> Result<()> {
    let set = CorpusSet::load_manifest(manifest)?;
    let domains = if domains.is_empty() {
        set.ids()
    } else {
        domains.to_vec()
    };
    let [h, w] = config.window.unwrap_or([CVAE_WINDOW.0, CVAE_WINDOW.1]);
    let mut segments = Vec::new();
    for (label, id) in domains.iter().enumerate() {
        for s in corpus_segments_sized(set.get(id)?, h, w, config.stride)? {
            segments.push((s.grid, label));
        }
    }
    let model = train_cvae(&segments, &domains, config)?;
    write_model(&model, out)
}

fn gen_sketch(model_path: &Path, n: usize, seed: u64, domain: Option<DomainId>, out: &Path) -> Result<()> {
    let model = ModelParameters::load(model_path)?;
    let sketches = if model.domains.is_empty() {
        sample_sketches(&model, n, seed)?
    } else {
        let id = domain
            .clone()
            .ok_or_else(|| Error::InvalidConfig("conditional model needs --domain".into()))?;
        let label = model
            .domains
            .iter()
            .position(|d| *d == id)
            .ok_or_else(|| Error::UnknownDomain(id.to_string()))?;
        model.cvae()?.sample(label, n, seed)?
    };
    let dir = out.join("sketches");
    create_dir(&dir)?;
    for (i, s) in sketches.iter().enumerate() {
        write(&dir.join(format!("sketch_{i:04}.txt")), sketch_to_text(s))?;
    }
    write_run_manifest(
        out,
        "gen-sketch",
        &serde_json::json!({ "model": file_name(model_path), "n": n, "seed": seed, "domain": domain }),
    )?;
    Ok(())
}

fn fill(
    sketch_path: &Path,
    manifests: &[PathBuf],
    exclude: Option<DomainId>,
    max_region: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let text = std::fs::read_to_string(sketch_path).map_err(|e| Error::io(sketch_path, e))?;
    let sketch = parse_sketch(&text)?;
    let mut domains = Vec::new();
    for m in manifests {
        domains.extend(CorpusSet::load_manifest(m)?.domains);
    }
    let set = CorpusSet::new(domains)?;
    let corpora: Vec<DomainCorpus> = set
        .domains
        .into_iter()
        .filter(|d| Some(&d.domain_id) != exclude.as_ref())
        .collect();
    let config = FillConfig {
        stop: StopRule::MaxRegion { size: max_region },
    };
    let mut rng = rng_from(seed, &[stream::FILL]);
    let result = fill_sketch(&sketch, &corpora, &config, &mut rng)?;
    create_dir(out)?;
    write(&out.join("level.txt"), level_to_text(&result.level))?;
    write(
        &out.join("provenance.json"),
        serde_json::to_string(&result.provenance).expect("provenance serializes"),
    )?;
    let summary = serde_json::json!({
        "domain_proportion": domain_proportion(&result.provenance),
        "regions": result.regions,
    });
    write(&out.join("summary.json"), to_json(&summary))?;
    write_run_manifest(
        out,
        "fill",
        &serde_json::json!({
            "sketch": file_name(sketch_path),
            "corpora": manifests.iter().map(|m| file_name(m)).collect::<Vec<_>>(),
            "exclude_domain": exclude,
            "max_region": max_region,
            "seed": seed,
        }),
    )?;
    Ok(())
}

struct EvalArgs<'a> {
    manifest: &'a Path,
    domain: DomainId,
    model: &'a Path,
    cvae: Option<&'a Path>,
    n: usize,
    train_sample: usize,
    seed: u64,
    options: EvalOptions,
    out: &'a Path,
}

fn eval(a: &EvalArgs<'_>) -> Result<()> {
    let set = CorpusSet::load_manifest(a.manifest)?;
    let corpus = set.get(&a.domain)?;
    let model = ModelParameters::load(a.model)?;
    let mut table = run_sketch_eval(&a.domain, Some(&model), corpus, a.n, a.train_sample, a.seed, &a.options)?;
    if let Some(p) = a.cvae {
        let cvae = ModelParameters::load(p)?;
        table.extend(run_cvae_eval(
            &a.domain,
            &cvae,
            &model,
            corpus,
            a.n,
            derive_seed(a.seed, &[stream::SAMPLE, 2]),
            &a.options,
        )?);
    }
    let reports = a.out.join("reports");
    emit_report(&table, ReportFormat::Csv, &reports, "report")?;
    emit_report(&table, ReportFormat::Json, &reports, "report")?;
    write_run_manifest(
        a.out,
        "eval",
        &serde_json::json!({
            "manifest": file_name(a.manifest),
            "domain": a.domain,
            "model": file_name(a.model),
            "cvae": a.cvae.map(file_name),
            "n": a.n,
            "train_sample": a.train_sample,
            "seed": a.seed,
            "options": a.options,
        }),
    )?;
    Ok(())
}

fn experiment(spec_path: &Path, out: &Path) -> Result<()> {
    let (spec, base) = ExperimentSpec::load(spec_path)?;
    let run = spec.run(&base)?;
    create_dir(out)?;
    write_fill_run(out, &run)?;
    write_run_manifest(out, "experiment", &spec)?;
    Ok(())
}
