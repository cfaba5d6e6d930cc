use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use slidesearch::barcode::{BarcodeIndex, Bob, BobQuery, IndexEntry};
use slidesearch::cohort::{apply_exclusions, load_manifest, Cohort, ExclusionParams};
use slidesearch::eval::PatientAggregation;
use slidesearch::mosaic::{build_mosaic, read_mosaic, write_mosaic, DEFAULT_K_CHROMA};
use slidesearch::pipeline::{run_benchmark, write_json, RunConfig};
use slidesearch::report::{self, EvalOptions, GmmOptions};
use slidesearch::results::{parse_results, write_results, RetrievalResult};
use slidesearch::synth::{generate, SynthSpec};
use slidesearch::vsearch::{knn_search, l2_normalize, SlideVector};
use slidesearch::{features, seed, Error, Result};

const THREADS_ENV: &str = "SLIDESEARCH_THREADS";

#[derive(Parser)]
#[command(name = "slidesearch", version, about = "Whole-slide retrieval benchmark")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Apply the exclusion rules and write cohort.csv / excluded.csv.
    Cohort {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one mosaic file per slide.
    Mosaic {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = DEFAULT_K_CHROMA)]
        k_chroma: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Barcode index operations.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Euclidean search over slide vectors.
    Vsearch {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// L2-normalize vectors before ranking.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score retrieval results.
    Evaluate {
        /// Results CSV; repeat for several models.
        #[arg(long, required = true)]
        results: Vec<PathBuf>,
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 3])]
        n: Vec<usize>,
        #[arg(long, default_value_t = PatientAggregation::Vote)]
        patient_agg: PatientAggregation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Statistical comparisons on report tables.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Run the whole benchmark.
    Run(RunArgs),
}

#[derive(Args)]
struct CohortArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = ExclusionParams::default().min_patients)]
    min_patients: usize,
    #[arg(long, default_value_t = ExclusionParams::default().min_diagnoses)]
    min_diagnoses: usize,
}

impl CohortArgs {
    fn load(&self) -> Result<Cohort> {
        let slides = load_manifest(&self.manifest)?;
        Ok(apply_exclusions(
            &slides,
            ExclusionParams {
                min_patients: self.min_patients,
                min_diagnoses: self.min_diagnoses,
            },
        ))
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    organs: usize,
    #[arg(long, default_value_t = 3)]
    diagnoses: usize,
    #[arg(long, default_value_t = 8)]
    patients: usize,
    #[arg(long, default_value_t = 1)]
    slides: usize,
    #[arg(long, default_value_t = 64)]
    patches: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 4.0)]
    sep: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Barcode every slide's mosaic patches into an index file.
    Build {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Directory of `<slide_id>.csv` mosaic files.
        #[arg(long)]
        mosaic: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search the index with one slide, or with every slide.
    Search {
        #[arg(long, default_value = "index.bob")]
        index: PathBuf,
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Divide Hamming distances by the barcode length.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Paired t-tests against a baseline with Holm-Bonferroni correction.
    Ttest {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        baseline: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "ttests.csv")]
        out: PathBuf,
    },
    /// GMM cut-offs on the per-diagnosis case-count / F1 scatter.
    Gmm {
        #[arg(long)]
        scatter: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_init: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fit case counts on a log scale.
        #[arg(long)]
        log_x: bool,
        #[arg(long, default_value = "thresholds.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Slide-vector models (comma separated).
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Barcode sampling rates (comma separated).
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    resume: bool,
}

fn results_writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

#[derive(Serialize)]
struct EvaluateReport<'a> {
    tool: &'static str,
    version: &'static str,
    results: &'a [PathBuf],
    manifest: &'a Path,
    exclusion: ExclusionParams,
    evaluation: &'a report::Evaluation,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let spec = SynthSpec {
                organs: a.organs,
                diagnoses: a.diagnoses,
                patients: a.patients,
                slides: a.slides,
                patches: a.patches,
                dim: a.dim,
                separation: a.sep,
                seed: a.seed,
            };
            let manifest = generate(&spec, &a.out)?;
            println!("{}", manifest.display());
        }
        Command::Cohort { cohort, out } => {
            let c = cohort.load()?;
            report::write_cohort_tables(&out, &c, &[])?;
            println!(
                "{} slides kept in {} organs, {} labels; {} excluded",
                c.slides.len(),
                c.organ_labels.len(),
                c.labels.len(),
                c.excluded.len()
            );
        }
        Command::Mosaic {
            cohort,
            rate,
            k_chroma,
            seed: master,
            out,
        } => {
            let c = cohort.load()?;
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            c.slides.par_iter().try_for_each(|s| {
                let block = features::read(&s.patch_features)?;
                let m = build_mosaic(
                    &s.slide_id,
                    &block.patches,
                    rate,
                    k_chroma,
                    seed::derive_str(master, "mosaic", &s.slide_id),
                )?;
                write_mosaic(&out.join(format!("{}.csv", s.slide_id)), &m)
            })?;
        }
        Command::Index(IndexCommand::Build { cohort, mosaic, out }) => {
            let c = cohort.load()?;
            let entries = c
                .slides
                .par_iter()
                .map(|s| {
                    let block = features::read(&s.patch_features)?;
                    // mosaic files do not record their rate
                    let m = read_mosaic(&mosaic.join(format!("{}.csv", s.slide_id)), f64::NAN)?;
                    if m.slide_id != s.slide_id {
                        return Err(Error::UnknownSlide(m.slide_id));
                    }
                    let rows = m
                        .selected_indices
                        .iter()
                        .map(|&i| {
                            block
                                .patches
                                .get(i)
                                .map(|p| p.embedding.as_slice())
                                .ok_or_else(|| Error::EmptySlide(s.slide_id.clone()))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(IndexEntry {
                        patient_id: s.patient_id.clone(),
                        label: s.label(),
                        bob: Bob::from_embeddings(s.slide_id.as_str(), rows)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            BarcodeIndex::build(entries)?.write(&out)?;
        }
        Command::Index(IndexCommand::Search {
            index,
            query,
            n,
            normalize,
            out,
        }) => {
            let idx = BarcodeIndex::read(&index)?;
            let queries: Vec<&IndexEntry> = match &query {
                Some(q) => vec![idx.get(q).ok_or_else(|| Error::UnknownSlide(q.clone()))?],
                None => idx.entries().iter().collect(),
            };
            let results = queries
                .par_iter()
                .map(|e| {
                    let q = BobQuery {
                        patient_id: &e.patient_id,
                        organ: &e.label.organ,
                        bob: &e.bob,
                    };
                    idx.search(q, n, "bob", normalize)
                })
                .collect::<Result<Vec<_>>>()?;
            write_results(results_writer(out.as_deref())?, &results, false)?;
        }
        Command::Vsearch {
            cohort,
            model,
            n,
            normalize,
            out,
        } => {
            let c = cohort.load()?;
            let pool = c
                .slides
                .iter()
                .map(|s| {
                    let path = s.slide_vectors.get(&model).ok_or_else(|| Error::Format {
                        what: "manifest",
                        msg: format!("slide {} has no vector for model {model:?}", s.slide_id),
                    })?;
                    let mut vector = features::read_slide_vector(path)?;
                    if normalize {
                        l2_normalize(&mut vector);
                    }
                    Ok(SlideVector {
                        slide_id: s.slide_id.clone(),
                        patient_id: s.patient_id.clone(),
                        organ: s.organ.clone(),
                        vector,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let results = pool
                .par_iter()
                .map(|q| knn_search(q, &pool, n, &model))
                .collect::<Result<Vec<_>>>()?;
            write_results(results_writer(out.as_deref())?, &results, true)?;
        }
        Command::Evaluate {
            results,
            cohort,
            n,
            patient_agg,
            out,
        } => {
            let c = cohort.load()?;
            let mut grouped: Vec<(String, Vec<RetrievalResult>)> = Vec::new();
            for path in &results {
                let default_model = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "model".into());
                for r in parse_results(&report::read_text(path)?, &default_model)? {
                    match grouped.iter_mut().find(|(m, _)| *m == r.model) {
                        Some((_, v)) => v.push(r),
                        None => grouped.push((r.model.clone(), vec![r])),
                    }
                }
            }
            let opts = EvalOptions {
                n_values: n,
                patient_agg,
                ..EvalOptions::default()
            };
            let eval = report::evaluate(&c, &grouped, &opts)?;
            report::write_evaluation(&out, &eval)?;
            write_json(
                &out.join("report.json"),
                &EvaluateReport {
                    tool: env!("CARGO_PKG_NAME"),
                    version: env!("CARGO_PKG_VERSION"),
                    results: &results,
                    manifest: &cohort.manifest,
                    exclusion: ExclusionParams {
                        min_patients: cohort.min_patients,
                        min_diagnoses: cohort.min_diagnoses,
                    },
                    evaluation: &eval,
                },
            )?;
        }
        Command::Stats(StatsCommand::Ttest {
            scores,
            baseline,
            alpha,
            out,
        }) => {
            let rows = report::parse_organ_rows(&report::read_text(&scores)?)?;
            let tests = report::paired_ttests(&rows, &baseline, alpha)?;
            report::write_ttests(&out, &tests)?;
        }
        Command::Stats(StatsCommand::Gmm {
            scatter,
            n_init,
            seed,
            log_x,
            out,
        }) => {
            if n_init == 0 {
                return Err(Error::Config("--n-init must be at least 1".into()));
            }
            let rows = report::parse_diagnosis_rows(&report::read_text(&scatter)?)?;
            let t = report::gmm_thresholds(&rows, GmmOptions { n_init, seed, log_x });
            report::write_thresholds(&out, &t)?;
        }
        Command::Run(a) => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::from_toml(&fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)?,
                None => RunConfig::default(),
            };
            if let Some(v) = a.manifest {
                cfg.manifest = v;
            }
            if let Some(v) = a.out {
                cfg.out_dir = v;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.models {
                cfg.vector_models = v;
            }
            if let Some(v) = a.rates {
                cfg.barcode_rates = v;
            }
            if let Some(v) = a.n {
                cfg.n_values = v;
            }
            if a.baseline.is_some() {
                cfg.baseline = a.baseline;
            }
            cfg.resume |= a.resume;
            let r = run_benchmark(&cfg)?;
            for s in &r.evaluation.summary {
                println!(
                    "{:<12} top-{} macro-F1 {:.3} ± {:.3} [{:.3}, {:.3}]",
                    s.model, s.n, s.mean, s.sd, s.ci_low, s.ci_high
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
