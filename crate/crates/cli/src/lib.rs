//! Command-line workflows over the ctxground library: ontology inspection,
//! context validation and encoding, data preparation, training, evaluation
//! and report assembly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use ctxground::context::{
    from_triples, parse_triples, serialize_triples, to_triples, validate_context, ContextElement,
    ContextError,
};
use ctxground::corpus::{
    self, bias_type_distribution, preprocess, split, synthetic_corpus, BiasTypeRegistry, Corpus,
    CorpusError, Provenance, SensitiveAttribute, SplitSpec, SyntheticSpec,
};
use ctxground::encoder::{build_vocab, derive_context, ContextLabelVocab, EncodeError, Encoder};
use ctxground::metrics::{
    evaluate, predictions_to_csv, reports_to_csv, BtcaUniverse, EvalOptions, MetricError,
    MetricsReport,
};
use ctxground::ontology::{
    builtin_all, builtin_ontology, merge, parse_ontology, ConceptName, ContextKind, Ontology,
    OntologyError,
};
use ctxground::trainer::{train, Classifier, TrainConfig, TrainError, TrainHistory};

#[derive(Debug, Parser)]
#[command(
    name = "ctxground",
    version,
    about = "Context-grounded bias detection experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print ontologies in canonical functional syntax with their subsumption closure.
    Ontology(OntologyArgs),
    /// Check context elements (triples file) against their ontology definitions.
    ValidateContext(ValidateArgs),
    /// Encode a dataset into token-id sequences with context prefixes.
    Encode(EncodeArgs),
    /// Clean and split a dataset (or generate a synthetic one).
    Prepare(PrepareArgs),
    /// Train grounded and/or ablation classifiers on prepared splits.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test set.
    Eval(EvalArgs),
    /// Combine metrics JSON files into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OntologyArgs {
    /// Built-in ontology to include (repeatable).
    #[arg(long = "builtin")]
    pub builtin: Vec<ContextKind>,
    /// Ontology file in functional syntax (repeatable).
    #[arg(long = "file")]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Triples file describing one or more context elements.
    #[arg(long)]
    pub triples: PathBuf,
    #[command(flatten)]
    pub ontology: OntologyArgs,
    /// Concept to validate against; defaults to each element's top concept.
    #[arg(long)]
    pub target: Option<String>,
    /// Exit with status 2 when any element is not satisfied.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
    /// Encode without context segments.
    #[arg(long)]
    pub ablation: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "synthetic"])))]
pub struct PrepareArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generate a planted-signal corpus of this many records instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Additional bias categories beyond the default three.
    #[arg(long, value_delimiter = ',')]
    pub extra_types: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with train.csv and val.csv (test.csv is evaluated when present).
    #[arg(long)]
    pub data: PathBuf,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train both the grounded model and the no-context ablation.
    #[arg(long, conflicts_with = "ablation")]
    pub compare: bool,
    /// Train only the no-context ablation.
    #[arg(long)]
    pub ablation: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the full-size fine-tuning peak rate of 2e-5.
    #[arg(long)]
    pub finetune_lr: bool,
    #[arg(long, value_delimiter = ',')]
    pub extra_types: Vec<String>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "gender,race,religion,age"
    )]
    pub attributes: Vec<SensitiveAttribute>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "gender,race,religion,age"
    )]
    pub attributes: Vec<SensitiveAttribute>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value = "positives")]
    pub btca_universe: BtcaUniverse,
    /// Reference group for an attribute, as `attribute=group` (repeatable).
    #[arg(long = "reference", value_parser = parse_reference)]
    pub reference: Vec<(SensitiveAttribute, String)>,
    /// Model name in the report; defaults to `grounded` or `ablation`.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics JSON files, one row each.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_reference(s: &str) -> Result<(SensitiveAttribute, String), String> {
    let (attr, group) = s
        .split_once('=')
        .ok_or_else(|| format!("expected attribute=group, got `{s}`"))?;
    Ok((attr.parse()?, group.to_string()))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Ontology { path: String, source: OntologyError },
    #[error("{path}: {source}")]
    Context { path: String, source: ContextError },
    #[error("{path}: {source}")]
    Corpus { path: String, source: CorpusError },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

impl CliError {
    /// 2 for usage, configuration and data problems; 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Write { .. } => 1,
            CliError::Train(TrainError::Range(_)) | CliError::Train(TrainError::Io(_)) => 1,
            _ => 2,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|source| CliError::Write {
            path: PathBuf::from("<stdout>"),
            source,
        })
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn load_corpus(path: &Path, registry: &BiasTypeRegistry) -> Result<Corpus, CliError> {
    corpus::load_with(path, registry).map_err(|source| match source {
        CorpusError::Io(e) => CliError::Read {
            path: path.to_path_buf(),
            source: e,
        },
        source => CliError::Corpus {
            path: path.display().to_string(),
            source,
        },
    })
}

fn save_corpus(c: &Corpus, path: &Path) -> Result<(), CliError> {
    corpus::save(c, path).map_err(|source| match source {
        CorpusError::Io(e) => CliError::Write {
            path: path.to_path_buf(),
            source: e,
        },
        source => CliError::Corpus {
            path: path.display().to_string(),
            source,
        },
    })
}

/// Selected built-ins and files, merged; every built-in when nothing is selected.
pub fn load_ontology(args: &OntologyArgs) -> Result<Ontology, CliError> {
    if args.builtin.is_empty() && args.files.is_empty() {
        return Ok(builtin_all());
    }
    let mut acc = Ontology::empty();
    for &kind in &args.builtin {
        acc = merge(&acc, &builtin_ontology(kind)).map_err(|source| CliError::Ontology {
            path: format!("builtin:{kind}"),
            source,
        })?;
    }
    for path in &args.files {
        let label = path.display().to_string();
        let o = parse_ontology(&read(path)?).map_err(|source| CliError::Ontology {
            path: label.clone(),
            source,
        })?;
        acc = merge(&acc, &o).map_err(|source| CliError::Ontology {
            path: label,
            source,
        })?;
    }
    Ok(acc)
}

fn cmd_ontology(args: &OntologyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let o = load_ontology(args)?;
    let mut text = o.to_functional_syntax();
    text.push_str("# closure\n");
    for (sub, sup) in o.classify() {
        text.push_str(&format!("# ({sub}, {sup})\n"));
    }
    emit(out, &text)
}

fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let label = args.triples.display().to_string();
    let ctx_err = |source| CliError::Context {
        path: label.clone(),
        source,
    };
    let triples = parse_triples(&read(&args.triples)?).map_err(ctx_err)?;
    let elements = from_triples(&triples).map_err(ctx_err)?;
    let ontology = load_ontology(&args.ontology)?;
    let mut reports = Vec::new();
    for e in &elements {
        let target = args.target.as_deref().unwrap_or(e.kind().top_concept());
        let target = ConceptName::new(target).map_err(|e| CliError::Usage(e.to_string()))?;
        reports.push(validate_context(e, &ontology, &target).map_err(ctx_err)?);
    }
    emit(out, &json(&reports))?;
    if args.strict {
        if let Some(r) = reports.iter().find(|r| !r.satisfied) {
            return Err(CliError::Usage(format!(
                "context `{}` is not satisfied",
                r.element_id
            )));
        }
    }
    Ok(())
}

fn distinct_contexts(c: &Corpus) -> Vec<ContextElement> {
    let mut by_id: BTreeMap<String, ContextElement> = BTreeMap::new();
    for r in &c.records {
        let e = derive_context(r);
        by_id.entry(e.id().to_string()).or_insert(e);
    }
    by_id.into_values().collect()
}

fn cmd_encode(args: &EncodeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let data = preprocess(&load_corpus(&args.data, &BiasTypeRegistry::default())?);
    let contexts = distinct_contexts(&data);
    let encoder = Encoder::new(
        build_vocab(&data, &contexts, args.min_freq),
        ContextLabelVocab::from_contexts(&contexts),
        BiasTypeRegistry::default(),
        args.max_len,
    )?;
    let inputs = encoder.encode_corpus(&data, !args.ablation)?;
    create_dir(&args.out)?;
    write(&args.out.join("vocab.tsv"), encoder.vocab.to_tsv())?;
    write(
        &args.out.join("context_labels.tsv"),
        encoder.labels.to_tsv(),
    )?;
    let triples: Vec<_> = contexts
        .iter()
        .filter(|e| !e.is_empty())
        .flat_map(to_triples)
        .collect();
    write(&args.out.join("contexts.nt"), serialize_triples(&triples))?;
    let mut dump = String::new();
    for x in &inputs {
        dump.push_str(&x.dump_line());
        dump.push('\n');
    }
    write(&args.out.join("encoded.csv"), dump)?;
    emit(
        out,
        &format!(
            "encoded {} records: vocabulary {}, context labels {}, max_len {}\n",
            inputs.len(),
            encoder.vocab.len(),
            encoder.labels.len(),
            encoder.max_len
        ),
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub source: String,
    pub rows_read: usize,
    pub rows_kept: usize,
    pub split: SplitSpec,
    pub sizes: [usize; 3],
    pub positives: usize,
}

fn cmd_prepare(args: &PrepareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec =
        SplitSpec::parse_fractions(&args.split, args.seed).map_err(|source| CliError::Corpus {
            path: "--split".into(),
            source,
        })?;
    let registry = BiasTypeRegistry::with_extras(&args.extra_types);
    let raw = match (&args.data, args.synthetic) {
        (Some(path), _) => load_corpus(path, &registry)?,
        (None, Some(n)) => synthetic_corpus(&SyntheticSpec::new(n, args.seed)),
        (None, None) => {
            return Err(CliError::Usage(
                "one of --data or --synthetic is required".into(),
            ))
        }
    };
    let clean = preprocess(&raw);
    let (tr, va, te) = split(&clean, &spec).map_err(|source| CliError::Corpus {
        path: raw.provenance.source.clone(),
        source,
    })?;
    create_dir(&args.out)?;
    for (name, part) in [("train", &tr), ("val", &va), ("test", &te)] {
        save_corpus(part, &args.out.join(format!("{name}.csv")))?;
    }
    let mut hist = String::from("bias_type,count\n");
    for (t, n) in bias_type_distribution(&clean) {
        hist.push_str(&format!("{t},{n}\n"));
    }
    write(&args.out.join("bias_types.csv"), hist)?;
    let summary = PrepareSummary {
        source: raw.provenance.source.clone(),
        rows_read: raw.len(),
        rows_kept: clean.len(),
        split: spec,
        sizes: [tr.len(), va.len(), te.len()],
        positives: clean.positives(),
    };
    write(&args.out.join("prepare.json"), json(&summary))?;
    emit(
        out,
        &format!(
            "kept {} of {} records; train {}, val {}, test {}\n",
            clean.len(),
            raw.len(),
            tr.len(),
            va.len(),
            te.len()
        ),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub grounded: bool,
    pub lambda: f64,
    pub checkpoint: String,
    pub history: TrainHistory,
    pub metrics: Option<MetricsReport>,
}

/// Everything needed to audit and replay a `train` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: TrainConfig,
    /// The configuration file contents that reproduce this run.
    pub config_text: String,
    pub data: String,
    pub corpora: BTreeMap<String, Provenance>,
    pub bias_types: Vec<String>,
    pub vocabulary_size: usize,
    pub context_labels: usize,
    pub runs: Vec<RunRecord>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn cmd_train(
    args: &TrainArgs,
    out: &mut dyn Write,
    clock: &dyn Fn() -> u64,
) -> Result<(), CliError> {
    let started_unix = clock();
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::from_text(&read(path)?)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.finetune_lr {
        cfg = cfg.with_finetune_lr();
    }
    cfg.validate()?;

    let registry = BiasTypeRegistry::with_extras(&args.extra_types);
    let train_c = preprocess(&load_corpus(&args.data.join("train.csv"), &registry)?);
    let val_c = preprocess(&load_corpus(&args.data.join("val.csv"), &registry)?);
    let test_path = args.data.join("test.csv");
    let test_c = if test_path.exists() {
        Some(preprocess(&load_corpus(&test_path, &registry)?))
    } else {
        None
    };

    let contexts = distinct_contexts(&train_c);
    let encoder = Encoder::new(
        build_vocab(&train_c, &contexts, cfg.min_freq),
        ContextLabelVocab::from_contexts(&contexts),
        registry.clone(),
        cfg.max_len,
    )?;
    create_dir(&args.out)?;
    write(&args.out.join("config.txt"), cfg.to_text())?;
    write(&args.out.join("vocab.tsv"), encoder.vocab.to_tsv())?;
    write(
        &args.out.join("context_labels.tsv"),
        encoder.labels.to_tsv(),
    )?;

    let modes: Vec<bool> = if args.compare {
        vec![true, false]
    } else {
        vec![!args.ablation]
    };
    let opts = EvalOptions {
        threshold: args.threshold,
        attributes: args.attributes.clone(),
        ..EvalOptions::default()
    };
    let mut runs = Vec::new();
    for grounded in modes {
        let name = if grounded { "grounded" } else { "ablation" };
        let dir = args.out.join(name);
        create_dir(&dir)?;
        let (model, history) = train(&train_c, &val_c, &encoder, &cfg, grounded)?;
        model.save(dir.join("model.ckpt")).map_err(|e| match e {
            TrainError::Io(source) => CliError::Write {
                path: dir.join("model.ckpt"),
                source,
            },
            other => CliError::Train(other),
        })?;
        write(&dir.join("history.csv"), history.to_csv())?;
        write(&dir.join("lr_trace.csv"), history.lr_trace_csv())?;
        let metrics = match &test_c {
            Some(test) => match evaluate(name, &model, test, &encoder.types, &opts) {
                Ok((report, predictions)) => {
                    write(&dir.join("metrics.json"), report.to_json() + "\n")?;
                    write(
                        &dir.join("predictions.csv"),
                        predictions_to_csv(&predictions),
                    )?;
                    Some(report)
                }
                Err(e) => {
                    eprintln!("warning: {name}: test metrics unavailable: {e}");
                    None
                }
            },
            None => None,
        };
        let last = history.epochs.last();
        emit(
            out,
            &format!(
                "{name}: {} epochs, final train loss {}, test BDA {}\n",
                history.epochs.len(),
                last.map(|e| format!("{:.4}", e.train_loss))
                    .unwrap_or_else(|| "-".into()),
                metrics
                    .as_ref()
                    .map(|m| format!("{:.4}", m.bda))
                    .unwrap_or_else(|| "-".into()),
            ),
        )?;
        runs.push(RunRecord {
            name: name.to_string(),
            grounded,
            lambda: model.lambda,
            checkpoint: format!("{name}/model.ckpt"),
            history,
            metrics,
        });
    }
    let reports: Vec<MetricsReport> = runs.iter().filter_map(|r| r.metrics.clone()).collect();
    if !reports.is_empty() {
        write(&args.out.join("metrics.csv"), reports_to_csv(&reports))?;
    }
    let mut corpora = BTreeMap::new();
    corpora.insert("train".to_string(), train_c.provenance.clone());
    corpora.insert("val".to_string(), val_c.provenance.clone());
    if let Some(t) = &test_c {
        corpora.insert("test".to_string(), t.provenance.clone());
    }
    let record = ExperimentRecord {
        config_text: cfg.to_text(),
        config: cfg,
        data: args.data.display().to_string(),
        corpora,
        bias_types: registry.categories().to_vec(),
        vocabulary_size: encoder.vocab.len(),
        context_labels: encoder.labels.len(),
        runs,
        started_unix,
        finished_unix: clock(),
    };
    write(&args.out.join("experiment.json"), json(&record))
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !args.checkpoint.exists() {
        return Err(CliError::Read {
            path: args.checkpoint.clone(),
            source: io::Error::new(io::ErrorKind::NotFound, "checkpoint not found"),
        });
    }
    let model = Classifier::from_text(&read(&args.checkpoint)?)?;
    let test = preprocess(&load_corpus(&args.test, &model.encoder.types)?);
    let opts = EvalOptions {
        threshold: args.threshold,
        attributes: args.attributes.clone(),
        btca_universe: args.btca_universe,
        reference: args.reference.iter().cloned().collect(),
    };
    let name = args.name.clone().unwrap_or_else(|| {
        if model.grounded {
            "grounded"
        } else {
            "ablation"
        }
        .to_string()
    });
    let (report, predictions) = evaluate(&name, &model, &test, &model.encoder.types, &opts)?;
    create_dir(&args.out)?;
    write(&args.out.join("metrics.json"), report.to_json() + "\n")?;
    let table = reports_to_csv(std::slice::from_ref(&report));
    write(&args.out.join("metrics.csv"), &table)?;
    write(
        &args.out.join("predictions.csv"),
        predictions_to_csv(&predictions),
    )?;
    emit(out, &table)
}

fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for path in &args.metrics {
        let report = MetricsReport::from_json(&read(path)?).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })?;
        reports.push(report);
    }
    let table = reports_to_csv(&reports);
    match &args.out {
        Some(path) => write(path, table),
        None => emit(out, &table),
    }
}

/// Run a parsed command. `clock` supplies unix timestamps for experiment records.
pub fn run(cli: &Cli, out: &mut dyn Write, clock: &dyn Fn() -> u64) -> Result<(), CliError> {
    match &cli.command {
        Command::Ontology(a) => cmd_ontology(a, out),
        Command::ValidateContext(a) => cmd_validate(a, out),
        Command::Encode(a) => cmd_encode(a, out),
        Command::Prepare(a) => cmd_prepare(a, out),
        Command::Train(a) => cmd_train(a, out, clock),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Report(a) => cmd_report(a, out),
    }
}

/// Parse `args` (including the program name) and run, returning the exit status.
pub fn main_with(
    args: &[String],
    out: &mut dyn Write,
    err: &mut dyn Write,
    clock: &dyn Fn() -> u64,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = out.write_all(text.as_bytes());
            } else {
                let _ = err.write_all(text.as_bytes());
            }
            return code;
        }
    };
    match run(&cli, out, clock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
