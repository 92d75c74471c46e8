//! Command-line entry points binding backends, stimuli, and audits into
//! reproducible runs: every command writes its reports plus a manifest
//! (input digests, seed, permutation config) under --out.
//!
//! Exit codes: 0 success, 1 validation/input error, 2 backend transport
//! error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use biasprobe::audit::{
    employment_audit, load_attribute_list, load_gap, run_gpr_audit, AttributeFormat,
    EmploymentTemplate, GprModelConfig,
};
use biasprobe::backend::{BackendKind, CachedBackend, HttpBackend, MockBackend, StaticVectorBackend};
use biasprobe::bias::run_category_test;
use biasprobe::error::{BiasError, Result};
use biasprobe::report::{results_csv, write_json, RunManifest};
use biasprobe::stats::{default_stopwords, load_stopwords, PermutationConfig};
use biasprobe::stimuli::load_category;
use biasprobe::weat::{contextual_word_sets, static_word_sets, weat_test};
use biasprobe::ModelBackend;

#[derive(Parser)]
#[command(
    name = "biasprobe",
    version,
    about = "Measure social bias in masked language models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Backend spec: mock:<fixture.json>, vectors:<vectors.txt>, or an
    /// http(s) URL of a model server.
    #[arg(long)]
    backend: String,
    /// Seed for balancing and Monte Carlo sampling. Falls back to
    /// BIASPROBE_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo sample count for permutation tests.
    #[arg(long, default_value_t = 10_000)]
    permutations: u64,
    /// Enumerate splits exhaustively up to this many.
    #[arg(long, default_value_t = 200_000)]
    exact_threshold: u64,
    /// Output directory for reports and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// Cap on parallel backend queries (default: one worker per core).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Log-probability bias test over one or more category files.
    Probe {
        #[command(flatten)]
        common: CommonArgs,
        /// Category stimulus file; repeat for several categories.
        #[arg(long, required = true)]
        category: Vec<PathBuf>,
    },
    /// Cosine association baseline over embedded word sets.
    Weat {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, required = true)]
        category: Vec<PathBuf>,
        /// static reads word vectors; contextual extracts embeddings
        /// from a masked LM under masking.
        #[arg(long, value_enum)]
        mode: WeatMode,
    },
    /// Pronoun-resolution audit: classifier, neither-probability gap,
    /// topic bias correlation.
    Gpr {
        #[command(flatten)]
        common: CommonArgs,
        /// Tab-separated pronoun/entity dataset.
        #[arg(long)]
        gap: PathBuf,
        /// JSON file overriding the classifier configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        topics: usize,
        #[arg(long, default_value_t = 15)]
        top_terms: usize,
        /// Stopword list (one word per line); defaults to the shipped list.
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// he-vs-she association over an attribute list.
    Employment {
        #[command(flatten)]
        common: CommonArgs,
        /// Attribute list file.
        #[arg(long)]
        attributes: PathBuf,
        #[arg(long, value_enum, default_value_t = FileFormat::Lines)]
        format: FileFormat,
        /// Column holding the attribute (csv format).
        #[arg(long)]
        column: Option<String>,
        /// Field delimiter for csv: "," or "tab".
        #[arg(long, default_value = ",")]
        delimiter: String,
        /// Numeric column to sort by before truncation (csv format).
        #[arg(long)]
        sort_by: Option<String>,
        /// Sort ascending instead of descending.
        #[arg(long)]
        ascending: bool,
        /// Keep only the first N rows after sorting.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, value_enum, default_value_t = TemplateKind::Is)]
        template: TemplateKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WeatMode {
    Static,
    Contextual,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FileFormat {
    Lines,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateKind {
    Is,
    CanDo,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("BIASPROBE_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(42)
}

/// The backend plus the config path to digest into the manifest, if any.
fn open_backend(spec: &str) -> Result<(Box<dyn ModelBackend>, Option<PathBuf>)> {
    if spec.starts_with("http://") || spec.starts_with("https://") {
        let backend = HttpBackend::connect(spec)?;
        return Ok((Box::new(CachedBackend::new(backend)), None));
    }
    match spec.split_once(':') {
        Some(("mock", path)) => {
            let backend = MockBackend::from_file(path)?;
            Ok((Box::new(backend), Some(PathBuf::from(path))))
        }
        Some(("vectors", path)) => {
            let backend = StaticVectorBackend::from_file(path)?;
            Ok((Box::new(backend), Some(PathBuf::from(path))))
        }
        Some(("http", url)) => {
            let backend = HttpBackend::connect(url)?;
            Ok((Box::new(CachedBackend::new(backend)), None))
        }
        _ => Err(BiasError::Validation(format!(
            "backend spec `{spec}` is not mock:<path>, vectors:<path>, or an http(s) URL"
        ))),
    }
}

fn configure_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(BiasError::Validation("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| BiasError::Validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

struct RunContext {
    backend: Box<dyn ModelBackend>,
    seed: u64,
    permutation: PermutationConfig,
    out: PathBuf,
    manifest: RunManifest,
}

fn prepare(common: &CommonArgs) -> Result<RunContext> {
    configure_jobs(common.jobs)?;
    let seed = resolve_seed(common.seed);
    let (backend, config_path) = open_backend(&common.backend)?;
    let permutation = PermutationConfig {
        exact_threshold: common.exact_threshold,
        monte_carlo_samples: common.permutations,
        seed,
    };
    permutation.validate()?;
    std::fs::create_dir_all(&common.out).map_err(|source| BiasError::File {
        path: common.out.display().to_string(),
        source,
    })?;
    let mut manifest = RunManifest::new(
        std::env::args().collect(),
        backend.descriptor().clone(),
        seed,
        permutation,
    );
    if let Some(path) = config_path {
        manifest.record_input(path)?;
    }
    Ok(RunContext {
        backend,
        seed,
        permutation,
        out: common.out.clone(),
        manifest,
    })
}

fn finish(ctx: &RunContext) -> Result<()> {
    write_json(ctx.out.join("manifest.json"), &ctx.manifest)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Probe { common, category } => cmd_probe(&common, &category),
        Command::Weat {
            common,
            category,
            mode,
        } => cmd_weat(&common, &category, mode),
        Command::Gpr {
            common,
            gap,
            config,
            topics,
            top_terms,
            stopwords,
        } => cmd_gpr(&common, &gap, config.as_deref(), topics, top_terms, stopwords.as_deref()),
        Command::Employment {
            common,
            attributes,
            format,
            column,
            delimiter,
            sort_by,
            ascending,
            limit,
            template,
        } => cmd_employment(
            &common, &attributes, format, column, &delimiter, sort_by, ascending, limit, template,
        ),
    }
}

fn cmd_probe(common: &CommonArgs, categories: &[PathBuf]) -> Result<()> {
    let mut ctx = prepare(common)?;
    let mut runs = Vec::new();
    for path in categories {
        ctx.manifest.record_input(path)?;
        let category = load_category(path)?;
        let run = run_category_test(&ctx.backend, &category, &ctx.permutation, ctx.seed)?;
        println!(
            "{}: statistic {:.4}  effect size {:.4}  p {:.6}{}",
            run.result.category_name,
            run.result.statistic,
            run.result.effect_size,
            run.result.p_value,
            if run.result.exact { " (exact)" } else { "" }
        );
        runs.push(run);
    }
    write_json(ctx.out.join("results.json"), &runs)?;
    let summary: Vec<_> = runs.iter().map(|r| r.result.clone()).collect();
    std::fs::write(ctx.out.join("summary.csv"), results_csv(&summary))?;
    finish(&ctx)
}

fn cmd_weat(common: &CommonArgs, categories: &[PathBuf], mode: WeatMode) -> Result<()> {
    let mut ctx = prepare(common)?;
    let kind = ctx.backend.descriptor().kind;
    match (mode, kind) {
        (WeatMode::Static, BackendKind::MaskedLm) => {
            return Err(BiasError::Validation(
                "static mode needs a vectors: backend (or a mock with static vectors)".into(),
            ));
        }
        (WeatMode::Contextual, BackendKind::StaticVectors) => {
            return Err(BiasError::Validation(
                "contextual mode needs a masked-lm or mock backend".into(),
            ));
        }
        _ => {}
    }

    let mut results = Vec::new();
    for path in categories {
        ctx.manifest.record_input(path)?;
        let category = load_category(path)?;
        let (x, y, a, b, prep) = match mode {
            WeatMode::Static => static_word_sets(&ctx.backend, &category, ctx.seed)?,
            WeatMode::Contextual => contextual_word_sets(&ctx.backend, &category, ctx.seed)?,
        };
        let mut result = weat_test(&x, &y, &a, &b, &ctx.permutation, ctx.seed, &category.name)?;
        result.metadata.dropped_oov = prep.dropped_oov;
        result.metadata.balance_removed = prep.balance_removed;
        result.metadata.rebalanced = prep.rebalanced;
        result.metadata.notes = prep.notes;
        println!(
            "{}: statistic {:.4}  effect size {:.4}  p {:.6}{}",
            result.category_name,
            result.statistic,
            result.effect_size,
            result.p_value,
            if result.exact { " (exact)" } else { "" }
        );
        results.push(result);
    }
    write_json(ctx.out.join("results.json"), &results)?;
    std::fs::write(ctx.out.join("summary.csv"), results_csv(&results))?;
    finish(&ctx)
}

fn cmd_gpr(
    common: &CommonArgs,
    gap_path: &Path,
    config_path: Option<&Path>,
    topics: usize,
    top_terms: usize,
    stopword_path: Option<&Path>,
) -> Result<()> {
    let mut ctx = prepare(common)?;
    ctx.manifest.record_input(gap_path)?;

    let mut model_config = match config_path {
        Some(path) => {
            ctx.manifest.record_input(path)?;
            let raw = biasprobe::error::read_file(path)?;
            serde_json::from_str::<GprModelConfig>(&raw).map_err(|e| BiasError::Parse {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?
        }
        None => GprModelConfig::default(),
    };
    model_config.seed = ctx.seed;

    let stopwords = match stopword_path {
        Some(path) => {
            ctx.manifest.record_input(path)?;
            load_stopwords(path)?
        }
        None => default_stopwords(),
    };

    let corpus = load_gap(gap_path)?;
    for (row, reason) in &corpus.skipped {
        eprintln!("skipping row {row}: {reason}");
    }
    if corpus.instances.is_empty() {
        return Err(BiasError::Validation(format!(
            "no usable rows in {}",
            gap_path.display()
        )));
    }
    let report = run_gpr_audit(
        &ctx.backend,
        &corpus,
        &model_config,
        topics,
        top_terms,
        &ctx.permutation,
        &stopwords,
    )?;

    println!("pronouns: {} male, {} female", report.counts.male, report.counts.female);
    println!("gender    prior     mean predicted");
    println!(
        "male      {:>6.1}%   {:>6.1}%",
        100.0 * report.neither.male_prior,
        100.0 * report.neither.male_mean_predicted
    );
    println!(
        "female    {:>6.1}%   {:>6.1}%",
        100.0 * report.neither.female_prior,
        100.0 * report.neither.female_mean_predicted
    );
    println!(
        "permutation p (female > male): {:.6}{}",
        report.neither.p_value,
        if report.neither.exact { " (exact)" } else { "" }
    );
    match (report.topics.spearman_rho, report.topics.spearman_p) {
        (Some(rho), Some(p)) => println!(
            "spearman rho (sample male-bias vs female NEITHER prob): {rho:.4} (p = {p:.3e}, n = {})",
            report.topics.spearman_n
        ),
        _ => println!(
            "spearman: {}",
            report
                .topics
                .spearman_note
                .as_deref()
                .unwrap_or("undefined")
        ),
    }
    println!("topic  bias      top words");
    for (index, terms) in report.topics.per_topic_terms.iter().enumerate() {
        let words: Vec<&str> = terms.iter().take(5).map(|(t, _, _)| t.as_str()).collect();
        println!(
            "{:<6} {:>+8.4}  {}",
            index + 1,
            report.topics.per_topic_bias[index],
            words.join(",")
        );
    }
    write_json(ctx.out.join("gpr_report.json"), &report)?;
    finish(&ctx)
}

#[allow(clippy::too_many_arguments)]
fn cmd_employment(
    common: &CommonArgs,
    attributes_path: &Path,
    format: FileFormat,
    column: Option<String>,
    delimiter: &str,
    sort_by: Option<String>,
    ascending: bool,
    limit: Option<usize>,
    template: TemplateKind,
) -> Result<()> {
    let mut ctx = prepare(common)?;
    ctx.manifest.record_input(attributes_path)?;

    let format = match format {
        FileFormat::Lines => AttributeFormat::Lines,
        FileFormat::Csv => {
            let column = column.ok_or_else(|| {
                BiasError::Validation("--column is required with --format csv".into())
            })?;
            let delimiter = match delimiter {
                "tab" | "\\t" => b'\t',
                d if d.len() == 1 => d.as_bytes()[0],
                other => {
                    return Err(BiasError::Validation(format!(
                        "delimiter `{other}` must be a single character or `tab`"
                    )))
                }
            };
            AttributeFormat::CsvColumn {
                column,
                delimiter,
                sort_by,
                descending: !ascending,
                limit,
            }
        }
    };
    let attributes = load_attribute_list(attributes_path, &format)?;
    let template = match template {
        TemplateKind::Is => EmploymentTemplate::Is,
        TemplateKind::CanDo => EmploymentTemplate::CanDo,
    };
    let report = employment_audit(&ctx.backend, &attributes, template)?;

    println!(
        "attributes: {} total, {} scored, {} dropped (not single vocabulary tokens)",
        report.total_attributes,
        report.scored_attributes,
        report.dropped.len()
    );
    println!("associated more strongly with male: {:.1}%", report.percentage_male);

    // Echo the scoring configuration next to the numbers.
    let mut body = serde_json::to_value(&report).map_err(|e| {
        BiasError::Validation(format!("serialization failed: {e}"))
    })?;
    if let Some(map) = body.as_object_mut() {
        map.insert(
            "configuration".into(),
            serde_json::json!({
                "template": match template {
                    EmploymentTemplate::Is => "[TARGET] is [ATTRIBUTE]",
                    EmploymentTemplate::CanDo => "[TARGET] can do [ATTRIBUTE]",
                },
                "targets": ["he", "she"],
                "seed": ctx.seed,
            }),
        );
    }
    write_json(ctx.out.join("employment_report.json"), &body)?;
    finish(&ctx)
}
