//! `authornorm`: command-line front end for the normalization toolkit.
//!
//! Exit codes: 0 success, 1 validation error (bad arguments or input
//! files), 2 internal error.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use authornorm_core::ann::{self, RpForestIndex};
use authornorm_core::dataset::{self, synthetic, VariantRule};
use authornorm_core::neural::gradcheck::grad_check;
use authornorm_core::pipeline::{self, Channels, Models, PipelineConfig};
use authornorm_core::ranker::{self, LogisticModel, LogregConfig};
use authornorm_core::record::{
    load_annotated, load_books, load_entities, write_annotated, write_books, write_entities,
};
use authornorm_core::seq2seq::{self, Seq2SeqConfig, Seq2SeqModel, TrainPair};
use authornorm_core::siamese::{self, SiameseConfig, SiameseModel};
use authornorm_core::sources::{aggregate, FixtureSources};
use authornorm_core::{isbn, seed, textnorm};

#[derive(Debug)]
enum CliError {
    /// bad arguments or malformed input files -> exit 1
    Validation(String),
    /// everything else -> exit 2
    Internal(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

macro_rules! as_validation {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Validation(e.to_string())
            }
        }
    )*};
}
as_validation!(
    authornorm_core::record::RecordError,
    authornorm_core::neural::container::ContainerError,
    authornorm_core::dataset::DatasetError,
    authornorm_core::ranker::RankerError,
    authornorm_core::pipeline::PipelineError,
    authornorm_core::ann::AnnError
);

impl From<authornorm_core::neural::NeuralError> for CliError {
    fn from(e: authornorm_core::neural::NeuralError) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.into())
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser, Debug)]
#[command(name = "authornorm", version, about = "Author name normalization toolkit")]
struct Cli {
    /// Root seed; all per-stage seeds derive from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// key=value configuration file (flags take precedence)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory (command-dependent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the bundled synthetic corpus into --out (a directory).
    GenCorpus {
        #[arg(long, default_value_t = 500)]
        entities: usize,
        #[arg(long, default_value_t = 2)]
        books_per_entity: usize,
    },
    /// Build name entities from a catalog via ISBN-match and fuzzy channels.
    BuildEntities {
        #[arg(long)]
        books: PathBuf,
        /// source fixture table (enables the ISBN channel)
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// reference name list, one per line (enables the fuzzy channel and
        /// canonical election)
        #[arg(long)]
        references: Option<PathBuf>,
    },
    /// Add synthetic variants (all rules) to an entity file.
    Augment {
        #[arg(long)]
        entities: PathBuf,
    },
    /// Entity-level train/test split into <out>/train.jsonl and test.jsonl.
    Split {
        #[arg(long)]
        entities: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
    },
    /// Train the Siamese matcher on an entity file.
    TrainSiamese {
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the seq2seq corrector on (variant, canonical) pairs.
    TrainSeq2seq {
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Build the ANN index over entity canonical names.
    BuildIndex {
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trees: Option<usize>,
    },
    /// Train the logistic-regression ranker on an annotated set.
    TrainRanker {
        #[arg(long)]
        annotated: PathBuf,
        /// directory containing siamese.anm, seq2seq.anm, index.ann
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Match one name against the index.
    Match {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
    },
    /// Print the top-10 seq2seq corrections of one name.
    Correct {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Normalize a catalog file; one result line per book.
    Normalize {
        #[arg(long)]
        books: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
    },
    /// Top-k accuracy per stratum on an annotated set.
    Evaluate {
        #[arg(long)]
        annotated: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
        /// comma-separated k values
        #[arg(long, default_value = "1,3")]
        k: String,
        /// comma-separated channels to disable: isbn, siamese, seq2seq
        #[arg(long)]
        disable: Option<String>,
    },
    /// Verify analytic gradients of both models at toy sizes.
    GradCheck,
}

fn load_config(path: Option<&Path>) -> Result<HashMap<String, String>, CliError> {
    let mut out = HashMap::new();
    let Some(path) = path else { return Ok(out) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(validation(format!(
                "config {}:{}: expected key=value",
                path.display(),
                no + 1
            )));
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

struct Ctx {
    seed: u64,
    cfg: HashMap<String, String>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.cfg.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| validation(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }

    fn resolve<T: FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        Ok(flag.or(self.get(key)?).unwrap_or(default))
    }

    fn out(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| validation("--out is required for this command"))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn load_models(dir: &Path) -> Result<(Models, RpForestIndex), CliError> {
    let models = Models {
        siamese: SiameseModel::load(&dir.join("siamese.anm"))?,
        seq2seq: Seq2SeqModel::load(&dir.join("seq2seq.anm"))?,
        ranker: LogisticModel::load(&dir.join("ranker.anm"))?,
    };
    let index = RpForestIndex::load(&dir.join("index.ann"))?;
    Ok((models, index))
}

fn pipeline_config(ctx: &Ctx, disable: Option<&str>) -> Result<PipelineConfig, CliError> {
    let mut channels = Channels::default();
    if let Some(disabled) = disable {
        for name in disabled.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "isbn" => channels.isbn = false,
                "siamese" => channels.siamese = false,
                "seq2seq" => channels.seq2seq = false,
                other => return Err(validation(format!("unknown channel {other:?}"))),
            }
        }
    }
    let defaults = PipelineConfig::default();
    Ok(PipelineConfig {
        siamese_k: ctx.resolve(None, "pipeline.siamese-k", defaults.siamese_k)?,
        search_budget: ctx.resolve(None, "pipeline.search-budget", defaults.search_budget)?,
        match_threshold: ctx.resolve(None, "pipeline.match-threshold", defaults.match_threshold)?,
        channels,
    })
}

fn variant_pairs(entities: &[authornorm_core::NameEntity]) -> Vec<TrainPair> {
    entities
        .iter()
        .flat_map(|e| {
            e.variants()
                .iter()
                .map(|v| TrainPair::from_strings(&v.name, e.canonical()))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx { seed: cli.seed, cfg: load_config(cli.config.as_deref())?, out: cli.out };
    match cli.command {
        Command::GenCorpus { entities, books_per_entity } => {
            let dir = ctx.out()?;
            std::fs::create_dir_all(dir)?;
            let corpus = synthetic::generate(&synthetic::CorpusConfig {
                n_entities: entities,
                books_per_entity,
                seed: seed::derive(ctx.seed, "corpus"),
                ..Default::default()
            });
            write_entities(&dir.join("entities.jsonl"), &corpus.entities)?;
            write_books(&dir.join("books.jsonl"), &corpus.books())?;
            write_annotated(&dir.join("annotated.jsonl"), &corpus.annotated)?;
            corpus.fixtures.save(&dir.join("fixtures.jsonl"))?;
            std::fs::write(
                dir.join("references.txt"),
                corpus.reference_names.join("\n") + "\n",
            )?;
            println!(
                "wrote {} entities, {} books to {}",
                corpus.entities.len(),
                corpus.annotated.len(),
                dir.display()
            );
        }
        Command::BuildEntities { books, fixtures, references } => {
            let records = load_books(&books)?;
            let refs: Vec<String> = match &references {
                Some(p) => read_lines(p)?,
                None => Vec::new(),
            };
            let wiki: BTreeSet<String> = refs.iter().cloned().collect();
            let mut entities = Vec::new();
            if let Some(fixtures) = fixtures {
                let sources = FixtureSources::load(&fixtures)?;
                let mut source_results = BTreeMap::new();
                for record in &records {
                    let Some(parsed) = isbn::of_record(record) else { continue };
                    let mut names = BTreeMap::new();
                    for answer in aggregate(&sources, &parsed) {
                        if let Some(name) = answer.author_names.first() {
                            names.insert(answer.source.name().to_string(), name.clone());
                        }
                    }
                    if !names.is_empty() {
                        source_results.insert(parsed.canonical13().to_string(), names);
                    }
                }
                entities =
                    dataset::build_entities_from_matches(&records, &source_results, &wiki);
            }
            if !refs.is_empty() {
                let (fuzzy, ambiguous) = dataset::build_entities_fuzzy(&records, &refs);
                for line in &ambiguous {
                    log::warn!("{line}");
                }
                let mut by_canonical: BTreeMap<String, authornorm_core::NameEntity> =
                    entities.into_iter().map(|e| (e.canonical().to_string(), e)).collect();
                for e in fuzzy {
                    match by_canonical.get_mut(e.canonical()) {
                        Some(existing) => existing.merge(e),
                        None => {
                            by_canonical.insert(e.canonical().to_string(), e);
                        }
                    }
                }
                entities = by_canonical.into_values().collect();
            }
            write_entities(ctx.out()?, &entities)?;
            println!("wrote {} entities", entities.len());
        }
        Command::Augment { entities } => {
            let input = load_entities(&entities)?;
            let (out, notes) = dataset::augment(
                input,
                &VariantRule::ALL,
                seed::derive(ctx.seed, "augment"),
            );
            log::info!("augment: {} no-op rule applications", notes.len());
            write_entities(ctx.out()?, &out)?;
            println!("wrote {} entities", out.len());
        }
        Command::Split { entities, ratio } => {
            let input = load_entities(&entities)?;
            let (train, test) = dataset::split(&input, ratio, seed::derive(ctx.seed, "split"))?;
            let dir = ctx.out()?;
            std::fs::create_dir_all(dir)?;
            write_entities(&dir.join("train.jsonl"), &train)?;
            write_entities(&dir.join("test.jsonl"), &test)?;
            println!("wrote {} train / {} test entities", train.len(), test.len());
        }
        Command::TrainSiamese { entities, epochs } => {
            let input = load_entities(&entities)?;
            let defaults = SiameseConfig::default();
            let cfg = SiameseConfig {
                embed_dim: ctx.resolve(None, "siamese.embed-dim", defaults.embed_dim)?,
                hidden: ctx.resolve(None, "siamese.hidden", defaults.hidden)?,
                lr: ctx.resolve(None, "siamese.lr", defaults.lr)?,
                batch_size: ctx.resolve(None, "siamese.batch-size", defaults.batch_size)?,
                epochs: ctx.resolve(epochs, "siamese.epochs", defaults.epochs)?,
                max_pos_per_entity: ctx
                    .resolve(None, "siamese.max-pos-per-entity", defaults.max_pos_per_entity)?,
                seed: seed::derive(ctx.seed, "siamese"),
                ..defaults
            };
            let (model, log) = siamese::train(&input, &cfg)?;
            model.save(ctx.out()?)?;
            println!(
                "trained siamese: {} epochs, final loss {:.6}",
                log.epoch_losses.len(),
                log.epoch_losses.last().unwrap_or(&f64::NAN)
            );
        }
        Command::TrainSeq2seq { entities, epochs } => {
            let input = load_entities(&entities)?;
            let pairs = variant_pairs(&input);
            if pairs.is_empty() {
                return Err(validation("no training pairs in entity file"));
            }
            let defaults = Seq2SeqConfig::default();
            let cfg = Seq2SeqConfig {
                embed_dim: ctx.resolve(None, "seq2seq.embed-dim", defaults.embed_dim)?,
                enc_hidden: ctx.resolve(None, "seq2seq.enc-hidden", defaults.enc_hidden)?,
                lr: ctx.resolve(None, "seq2seq.lr", defaults.lr)?,
                batch_size: ctx.resolve(None, "seq2seq.batch-size", defaults.batch_size)?,
                epochs: ctx.resolve(epochs, "seq2seq.epochs", defaults.epochs)?,
                seed: seed::derive(ctx.seed, "seq2seq"),
                ..defaults
            };
            let (model, log) = seq2seq::train(&pairs, &cfg)?;
            model.save(ctx.out()?)?;
            println!(
                "trained seq2seq on {} pairs, final loss {:.6}",
                pairs.len(),
                log.epoch_losses.last().unwrap_or(&f64::NAN)
            );
        }
        Command::BuildIndex { entities, model, trees } => {
            let input = load_entities(&entities)?;
            let model = SiameseModel::load(&model)?;
            let n_trees = ctx.resolve(trees, "index.trees", ann::DEFAULT_N_TREES)?;
            let leaf = ctx.resolve(None, "index.leaf-capacity", ann::DEFAULT_LEAF_CAPACITY)?;
            let index = siamese::build_match_index(
                &model,
                &input,
                n_trees,
                leaf,
                seed::derive(ctx.seed, "index"),
            )?;
            index.save(ctx.out()?)?;
            println!("indexed {} canonical names with {} trees", index.len(), n_trees);
        }
        Command::TrainRanker { annotated, models, fixtures, epochs } => {
            let annotated = load_annotated(&annotated)?;
            let siamese_model = SiameseModel::load(&models.join("siamese.anm"))?;
            let seq2seq_model = Seq2SeqModel::load(&models.join("seq2seq.anm"))?;
            let index = RpForestIndex::load(&models.join("index.ann"))?;
            let sources = FixtureSources::load(&fixtures)?;
            let pcfg = pipeline_config(&ctx, None)?;
            let samples = pipeline::ranker_samples(
                &annotated,
                &siamese_model,
                &seq2seq_model,
                &index,
                &sources,
                &pcfg,
            );
            let defaults = LogregConfig::default();
            let cfg = LogregConfig {
                lr: ctx.resolve(None, "ranker.lr", defaults.lr)?,
                epochs: ctx.resolve(epochs, "ranker.epochs", defaults.epochs)?,
                seed: seed::derive(ctx.seed, "ranker"),
            };
            let (model, loss) = ranker::train_logreg(&samples, &cfg)?;
            model.save(ctx.out()?)?;
            println!("trained ranker on {} samples, final loss {loss:.6}", samples.len());
        }
        Command::Match { models, name, k } => {
            let model = SiameseModel::load(&models.join("siamese.anm"))?;
            let index = RpForestIndex::load(&models.join("index.ann"))?;
            let pcfg = pipeline_config(&ctx, None)?;
            let hits = siamese::match_name(
                &model,
                &index,
                &name,
                k,
                pcfg.search_budget,
                pcfg.match_threshold,
            )?;
            for hit in hits {
                println!("{}\t{:.6}", hit.canonical, hit.distance);
            }
        }
        Command::Correct { models, name } => {
            let model = Seq2SeqModel::load(&models.join("seq2seq.anm"))?;
            let hyps = seq2seq::beam_decode(&model, &name, 10, textnorm::SEQ_LEN);
            let mut seen = BTreeSet::new();
            for h in hyps {
                let s = seq2seq::tokens_to_string(&h.tokens);
                if seen.insert(s.clone()) {
                    println!("{}\t{:.6}", s, h.log_prob);
                }
            }
        }
        Command::Normalize { books, models, fixtures } => {
            let records = load_books(&books)?;
            let (models, index) = load_models(&models)?;
            let sources = FixtureSources::load(&fixtures)?;
            let pcfg = pipeline_config(&ctx, None)?;
            let out_path = ctx.out()?;
            let mut lines = String::new();
            for record in &records {
                let result =
                    pipeline::normalize_book(record, &models, &index, &sources, &pcfg);
                lines.push_str(
                    &serde_json::to_string(&result).map_err(|e| CliError::Internal(e.into()))?,
                );
                lines.push('\n');
            }
            std::fs::write(out_path, lines)?;
            println!("normalized {} books", records.len());
        }
        Command::Evaluate { annotated, models, fixtures, k, disable } => {
            let annotated = load_annotated(&annotated)?;
            let (models, index) = load_models(&models)?;
            let sources = FixtureSources::load(&fixtures)?;
            let pcfg = pipeline_config(&ctx, disable.as_deref())?;
            let ks: Vec<usize> = k
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| validation(format!("bad k value {s:?}"))))
                .collect::<Result<_, _>>()?;
            let report = pipeline::evaluate(&annotated, &models, &index, &sources, &pcfg, &ks)?;
            print!("{}", report.table());
            if let Some(out) = &ctx.out {
                std::fs::write(
                    out,
                    serde_json::to_string_pretty(&report)
                        .map_err(|e| CliError::Internal(e.into()))?,
                )?;
            }
        }
        Command::GradCheck => {
            // Fixed seeds: this is a diagnostic with a known-good operating
            // point, not a randomized test.
            let ok1 = {
                use authornorm_core::record::{NameEntity, Provenance, Variant};
                let variant = |name: &str| Variant {
                    name: name.into(),
                    provenance: Provenance::NameVariantList,
                    audit: None,
                };
                let entities = vec![
                    NameEntity::new(
                        "ab cd",
                        Provenance::NameVariantList,
                        [variant("a. cd"), variant("cd, ab")],
                    ),
                    NameEntity::new(
                        "ef gh",
                        Provenance::NameVariantList,
                        [variant("e. gh")],
                    ),
                ];
                let cfg =
                    SiameseConfig { embed_dim: 5, hidden: 4, seed: 9, ..Default::default() };
                let mut model = SiameseModel::init(cfg.embed_dim, cfg.hidden, cfg.seed);
                let mut pairs = siamese::positive_pairs(&entities, &cfg);
                pairs.extend(siamese::negative_pairs(&entities, 4, &cfg, 0));
                let (_, grads) = siamese::batch_gradients(&model, &pairs, cfg.margin)?;
                let report = grad_check(
                    &mut model,
                    &grads,
                    |m| siamese::batch_loss(m, &pairs, cfg.margin),
                    1e-4,
                    1e-4,
                )
                .map_err(|e| CliError::Internal(e.into()))?;
                println!("siamese: max rel error {:.3e}", report.max_rel_error());
                report.passed()
            };
            let ok2 = {
                let pairs = vec![
                    TrainPair::from_strings("ab", "abc"),
                    TrainPair::from_strings("cd", "cd"),
                ];
                let mut model = Seq2SeqModel::init(textnorm::alphabet().len(), 5, 3, 7);
                let (_, grads) = seq2seq::batch_gradients(&model, &pairs)?;
                let report = grad_check(
                    &mut model,
                    &grads,
                    |m| seq2seq::batch_loss(m, &pairs),
                    1e-4,
                    1e-4,
                )
                .map_err(|e| CliError::Internal(e.into()))?;
                println!("seq2seq: max rel error {:.3e}", report.max_rel_error());
                report.passed()
            };
            if !(ok1 && ok2) {
                return Err(validation("gradient check failed"));
            }
            println!("gradient checks passed");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Internal(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
