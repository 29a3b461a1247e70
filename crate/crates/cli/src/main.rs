use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use xseg::config::{load_key_values, parse_override, PosTagset, Regime, TrainingConfig};
use xseg::corpus::{
    load_conll_corpus, write_bracketed, write_conll_corpus, Corpus, Language, PosConversionMap,
};
use xseg::embeddings::{load_word_embeddings, EmbeddingTable};
use xseg::eval::{
    baseline_corpus, evaluate, run_ablation, AblationSpec, AblationVariable, BaselineKind,
    DataBundle, Metrics, PunctuationPolicy, SeedPolicy,
};
use xseg::neural::checkpoint::Checkpoint;
use xseg::synthetic::{generate_splits, make_embeddings, SyntheticSpec};
use xseg::trainer::{train, SegmenterModel, TrainingData};
use xseg::Error;

#[derive(Parser)]
#[command(name = "xseg", version, about = "Cross-lingual EDU segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes a checkpoint and a report.
    Train(Opts),
    /// Label a corpus with a trained model.
    Segment(Opts),
    /// Score predictions against gold labels.
    Evaluate(Opts),
    /// Label a corpus with a rule baseline.
    Baseline(Opts),
    /// Run a size or POS-tagset ablation.
    Ablate(Opts),
    /// Write a synthetic corpus set, embeddings and a config.
    Synth(Opts),
}

#[derive(Args, Clone, Default)]
struct Opts {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "in", value_name = "PATH")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Rule baseline: s (sentence) or p (punctuation).
    #[arg(long)]
    baseline: Option<String>,
}

const PATH_KEYS: [&str; 10] = [
    "embeddings",
    "en_labeled",
    "zh_labeled",
    "zh_unlabeled",
    "val",
    "test",
    "checkpoint",
    "report",
    "zh_pos_map",
    "language",
];

const OTHER_KEYS: [&str; 3] = ["ablate.variable", "ablate.values", "ablate.seed_policy"];

const SYNTH_KEYS: [&str; 8] = [
    "synth.n_en",
    "synth.n_zh_unlabeled",
    "synth.n_zh_labeled",
    "synth.n_val",
    "synth.n_test",
    "synth.word_dim",
    "synth.language_specific_tags",
    "synth.distractor_rate",
];

fn known_key(key: &str) -> bool {
    if TrainingConfig::KEYS.contains(&key)
        || PATH_KEYS.contains(&key)
        || OTHER_KEYS.contains(&key)
        || SYNTH_KEYS.contains(&key)
    {
        return true;
    }
    // Per-tagset data paths for the POS ablation, e.g. `universal.en_labeled`.
    match key.split_once('.') {
        Some((variant, rest)) => variant.parse::<PosTagset>().is_ok() && PATH_KEYS.contains(&rest),
        None => false,
    }
}

/// Config file values, then `--set` overrides, then `--seed`.
struct Settings {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Settings {
    fn from_opts(opts: &Opts) -> xseg::Result<Self> {
        let mut values = match &opts.config {
            Some(p) => load_key_values(p)?,
            None => BTreeMap::new(),
        };
        let base_dir = opts
            .config
            .as_ref()
            .and_then(|p| p.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        for item in &opts.set {
            let (k, v) = parse_override(item)?;
            values.insert(k, v);
        }
        if let Some(seed) = opts.seed {
            values.insert("seed".into(), seed.to_string());
        }
        if let Some(bad) = values.keys().find(|k| !known_key(k)) {
            return Err(Error::Config(format!("unknown config key {bad:?}")));
        }
        Ok(Settings { values, base_dir })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// A path value, resolved against the config file's directory.
    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }

    fn training_config(&self) -> xseg::Result<TrainingConfig> {
        TrainingConfig::from_map(&self.values)
    }

    fn seed(&self) -> xseg::Result<u64> {
        Ok(self.training_config()?.seed)
    }

    fn language(&self) -> xseg::Result<Language> {
        self.get("language").unwrap_or("zh").parse()
    }

    fn usize_or(&self, key: &str, default: usize) -> xseg::Result<usize> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
            })
            .unwrap_or(Ok(default))
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Usage(msg.into()).into()
}

fn require<'a>(opt: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a PathBuf> {
    opt.as_ref().ok_or_else(|| usage(format!("{flag} is required")))
}

fn require_input_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn check_output_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(usage(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Read every output of a command into memory first, then write them all.
fn write_all(outputs: &[(PathBuf, String)]) -> anyhow::Result<()> {
    for (p, _) in outputs {
        check_output_parent(p)?;
    }
    for (p, c) in outputs {
        write_file(p, c)?;
    }
    Ok(())
}

fn zh_pos_map(settings: &Settings, prefix: &str) -> xseg::Result<Option<PosConversionMap>> {
    let key = format!("{prefix}zh_pos_map");
    match settings.get(&key).or_else(|| settings.get("zh_pos_map")) {
        None => Ok(None),
        Some("ctb") | Some("builtin") => Ok(Some(PosConversionMap::chinese_treebank())),
        Some(_) => {
            let p = settings
                .path(&key)
                .or_else(|| settings.path("zh_pos_map"))
                .expect("value present");
            Ok(Some(PosConversionMap::load(p)?))
        }
    }
}

fn load_corpus(
    settings: &Settings,
    prefix: &str,
    key: &str,
    language: Language,
) -> anyhow::Result<Option<Corpus>> {
    let full = format!("{prefix}{key}");
    let Some(path) = settings.path(&full).or_else(|| settings.path(key)) else {
        return Ok(None);
    };
    require_input_file(&path, key)?;
    let mut corpus = load_conll_corpus(&path, language.clone())?;
    if language == Language::Zh {
        if let Some(map) = zh_pos_map(settings, prefix)? {
            corpus = corpus.map_tags(|t| xseg::corpus::convert_pos(t, &map).to_string())?;
        }
    }
    Ok(Some(corpus))
}

fn load_embeddings(settings: &Settings, seed: u64) -> anyhow::Result<EmbeddingTable> {
    let path = settings
        .path("embeddings")
        .ok_or_else(|| usage("config key embeddings is required"))?;
    require_input_file(&path, "embeddings")?;
    Ok(load_word_embeddings(&path, seed)?)
}

fn cmd_train(opts: &Opts) -> anyhow::Result<()> {
    let settings = Settings::from_opts(opts)?;
    let cfg = settings.training_config()?;
    let out = opts
        .out
        .clone()
        .or_else(|| settings.path("checkpoint"))
        .ok_or_else(|| usage("--out or config key checkpoint is required"))?;
    let report_path = settings
        .path("report")
        .unwrap_or_else(|| with_suffix(&out, ".report.jsonl"));
    check_output_parent(&out)?;
    check_output_parent(&report_path)?;

    let en = load_corpus(&settings, "", "en_labeled", Language::En)?
        .ok_or_else(|| usage("config key en_labeled is required"))?;
    let zh_labeled = if cfg.regime.uses_target_labels() {
        load_corpus(&settings, "", "zh_labeled", Language::Zh)?
    } else {
        None
    };
    let zh_unlabeled = if cfg.regime == Regime::Zl {
        load_corpus(&settings, "", "zh_unlabeled", Language::Zh)?
    } else {
        None
    };
    let val = load_corpus(&settings, "", "val", Language::Zh)?
        .ok_or_else(|| usage("config key val is required"))?;
    let words = Arc::new(load_embeddings(&settings, cfg.seed)?);

    let data = TrainingData {
        en_labeled: &en,
        zh_labeled: zh_labeled.as_ref(),
        zh_unlabeled: zh_unlabeled.as_ref(),
        val: &val,
    };
    let (mut model, report) = train(words, &data, &cfg)?;
    for (k, v) in &settings.values {
        if PATH_KEYS.contains(&k.as_str()) {
            model.provenance.insert(k.clone(), v.clone().into());
        }
    }
    if let Some(p) = settings.path("embeddings") {
        model
            .provenance
            .insert("embeddings".into(), p.display().to_string().into());
    }
    let bytes = model.to_checkpoint().to_bytes();
    std::fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
    write_file(&report_path, &report.to_jsonl())?;
    println!(
        "{} | best epoch {} | val {} | generator:critic steps {}:{}",
        cfg.regime,
        report.best_epoch,
        report.best_val,
        report.counters.generator_steps,
        report.counters.critic_steps
    );
    Ok(())
}

fn load_model(opts: &Opts, settings: &Settings) -> anyhow::Result<SegmenterModel> {
    let ck_path = require(&opts.checkpoint, "--checkpoint")?;
    require_input_file(ck_path, "checkpoint")?;
    let ck = Checkpoint::load(ck_path)?;
    let emb_path = settings.path("embeddings").or_else(|| {
        ck.meta["provenance"]["embeddings"]
            .as_str()
            .map(PathBuf::from)
    });
    let emb_path = emb_path.ok_or_else(|| usage("config key embeddings is required"))?;
    require_input_file(&emb_path, "embeddings")?;
    let seed = ck.meta["seed"].as_u64().unwrap_or(0);
    let mut words = load_word_embeddings(&emb_path, seed)?;
    let lowercase = ck.meta["config"]["lowercase_en"].as_str() != Some("false");
    words.set_lowercase_en(lowercase);
    Ok(SegmenterModel::from_checkpoint(&ck, words)?)
}

fn bracketed(corpus: &Corpus) -> xseg::Result<String> {
    let mut out = String::new();
    for s in corpus.sentences() {
        out.push_str(&write_bracketed(s)?);
        out.push('\n');
    }
    Ok(out)
}

fn cmd_segment(opts: &Opts) -> anyhow::Result<()> {
    let settings = Settings::from_opts(opts)?;
    let input = require(&opts.input, "--in")?;
    let out = require(&opts.out, "--out")?;
    require_input_file(input, "input")?;
    let model = load_model(opts, &settings)?;
    let corpus = load_conll_corpus(input, settings.language()?)?;
    let labeled = model.segment_corpus(&corpus)?;
    write_all(&[
        (out.clone(), write_conll_corpus(&labeled)),
        (with_suffix(out, ".bracketed"), bracketed(&labeled)?),
    ])
}

fn metrics_record(m: &Metrics, system: &str, extra: serde_json::Value) -> String {
    let mut v = serde_json::to_value(m).expect("metrics serialize");
    v["system"] = system.into();
    if let serde_json::Value::Object(map) = extra {
        for (k, val) in map {
            v[k] = val;
        }
    }
    v.to_string() + "\n"
}

fn print_table(system: &str, m: &Metrics) {
    println!("{:<12} {:>8} {:>8} {:>8}", "system", "P", "R", "F");
    println!(
        "{:<12} {:>7.2}% {:>7.2}% {:>7.2}%",
        system,
        100.0 * m.precision,
        100.0 * m.recall,
        100.0 * m.f_measure
    );
    println!("{m}");
}

fn cmd_evaluate(opts: &Opts) -> anyhow::Result<()> {
    let settings = Settings::from_opts(opts)?;
    let language = settings.language()?;
    let gold_path = require(&opts.gold, "--gold")?;
    require_input_file(gold_path, "gold")?;
    let gold = load_conll_corpus(gold_path, language.clone())?;
    let (pred, system) = match &opts.baseline {
        Some(kind) => {
            let kind: BaselineKind = kind.parse()?;
            let source = match &opts.input {
                Some(p) => {
                    require_input_file(p, "input")?;
                    load_conll_corpus(p, language)?
                }
                None => gold.clone(),
            };
            let name = match kind {
                BaselineKind::Sentence => "S-baseline",
                BaselineKind::Punctuation => "P-baseline",
            };
            (baseline_corpus(&source, kind, &PunctuationPolicy::default())?, name)
        }
        None => {
            let p = require(&opts.input, "--in")?;
            require_input_file(p, "input")?;
            (load_conll_corpus(p, language)?, "model")
        }
    };
    let m = evaluate(&pred, &gold)?;
    if let Some(out) = &opts.out {
        write_all(&[(out.clone(), metrics_record(&m, system, serde_json::json!({})))])?;
    }
    print_table(system, &m);
    Ok(())
}

fn cmd_baseline(opts: &Opts) -> anyhow::Result<()> {
    let settings = Settings::from_opts(opts)?;
    let kind: BaselineKind = opts
        .baseline
        .as_deref()
        .ok_or_else(|| usage("--baseline is required"))?
        .parse()?;
    let input = require(&opts.input, "--in")?;
    let out = require(&opts.out, "--out")?;
    require_input_file(input, "input")?;
    let corpus = load_conll_corpus(input, settings.language()?)?;
    let labeled = baseline_corpus(&corpus, kind, &PunctuationPolicy::default())?;
    write_all(&[
        (out.clone(), write_conll_corpus(&labeled)),
        (with_suffix(out, ".bracketed"), bracketed(&labeled)?),
    ])
}

fn bundle(settings: &Settings, prefix: &str, cfg: &TrainingConfig) -> anyhow::Result<Option<DataBundle>> {
    let en = load_corpus(settings, prefix, "en_labeled", Language::En)?;
    let val = load_corpus(settings, prefix, "val", Language::Zh)?;
    let test = load_corpus(settings, prefix, "test", Language::Zh)?;
    let (Some(en_labeled), Some(val), Some(test)) = (en, val, test) else {
        return Ok(None);
    };
    let zh_labeled = load_corpus(settings, prefix, "zh_labeled", Language::Zh)?;
    let zh_unlabeled = if cfg.regime.is_adversarial() {
        load_corpus(settings, prefix, "zh_unlabeled", Language::Zh)?
    } else {
        None
    };
    Ok(Some(DataBundle {
        en_labeled,
        zh_labeled,
        zh_unlabeled,
        val,
        test,
    }))
}

fn cmd_ablate(opts: &Opts) -> anyhow::Result<()> {
    let settings = Settings::from_opts(opts)?;
    let cfg = settings.training_config()?;
    let out = require(&opts.out, "--out")?;
    let variable: AblationVariable = settings
        .get("ablate.variable")
        .ok_or_else(|| usage("config key ablate.variable is required"))?
        .parse()?;
    let values: Vec<String> = settings
        .get("ablate.values")
        .ok_or_else(|| usage("config key ablate.values is required"))?
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    let seed_policy = match settings.get("ablate.seed_policy").unwrap_or("shared") {
        "shared" => SeedPolicy::Shared,
        "per_value" => SeedPolicy::PerValue,
        other => return Err(Error::Config(format!("unknown seed policy {other:?}")).into()),
    };
    let (text_path, records_path) = (with_suffix(out, ".txt"), with_suffix(out, ".jsonl"));
    check_output_parent(&text_path)?;

    let spec = match variable {
        AblationVariable::ZhLabeledSize => {
            let sizes = values
                .iter()
                .map(|v| v.parse::<usize>().map_err(|_| Error::Config(format!("invalid size {v:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let data = bundle(&settings, "", &cfg)?
                .ok_or_else(|| usage("en_labeled, val and test are required"))?;
            AblationSpec::ZhLabeledSize { sizes, data }
        }
        AblationVariable::PosTagset => {
            let mut variants = Vec::new();
            for v in &values {
                let tagset: PosTagset = v.parse()?;
                variants.push((tagset, bundle(&settings, &format!("{tagset}."), &cfg)?));
            }
            AblationSpec::PosTagset { variants }
        }
    };
    let words = Arc::new(load_embeddings(&settings, cfg.seed)?);
    let table = run_ablation(&cfg, words, &spec, seed_policy)?;
    table.save(&text_path, &records_path)?;
    print!("{}", table.to_text());
    Ok(())
}

fn cmd_synth(opts: &Opts) -> anyhow::Result<()> {
    let settings = Settings::from_opts(opts)?;
    let dir = require(&opts.out, "--out")?;
    let seed = settings.seed()?;
    let mut spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    spec.word_dim = settings.usize_or("synth.word_dim", spec.word_dim)?;
    if let Some(v) = settings.get("synth.language_specific_tags") {
        spec.language_specific_tags = matches!(v, "true" | "1" | "yes");
    }
    if let Some(v) = settings.get("synth.distractor_rate") {
        spec.distractor_rate = v
            .parse()
            .map_err(|_| Error::Config(format!("invalid distractor rate {v:?}")))?;
    }
    let n_en = settings.usize_or("synth.n_en", 2000)?;
    let sizes = [
        settings.usize_or("synth.n_zh_unlabeled", 2000)?,
        settings.usize_or("synth.n_zh_labeled", 40)?,
        settings.usize_or("synth.n_val", 200)?,
        settings.usize_or("synth.n_test", 1000)?,
    ];
    spec.validate()?;
    if n_en == 0 || sizes.iter().any(|&n| n == 0) {
        return Err(Error::Config("synthetic split sizes must be >= 1".into()).into());
    }
    let en = generate_splits(&spec, Language::En, &[n_en])?.remove(0);
    let zh = generate_splits(&spec, Language::Zh, &sizes)?;
    let words = make_embeddings(&spec)?;

    let mut outputs = vec![
        (dir.join("en_labeled.tsv"), write_conll_corpus(&en)),
        (dir.join("zh_unlabeled.tsv"), write_conll_corpus(&zh[0].without_labels())),
        (dir.join("zh_labeled.tsv"), write_conll_corpus(&zh[1])),
        (dir.join("zh_val.tsv"), write_conll_corpus(&zh[2])),
        (dir.join("zh_test.tsv"), write_conll_corpus(&zh[3])),
        (dir.join("embeddings.txt"), words.to_text()),
    ];
    let conf = format!(
        "# synthetic run, seed {seed}\n\
         regime = ZL\n\
         seed = {seed}\n\
         word_dim = {}\n\
         pos_dim = 8\n\
         n_filters = 16\n\
         max_epochs = 10\n\
         embeddings = embeddings.txt\n\
         en_labeled = en_labeled.tsv\n\
         zh_unlabeled = zh_unlabeled.tsv\n\
         zh_labeled = zh_labeled.tsv\n\
         val = zh_val.tsv\n\
         test = zh_test.tsv\n",
        spec.word_dim
    );
    outputs.push((dir.join("synthetic.conf"), conf));
    if !dir.is_dir() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_all(&outputs)?;
    println!("wrote synthetic data (seed {seed}) to {}", dir.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Usage(_) | Error::Config(_) | Error::Parse { .. }) => 2,
        Some(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(o) => cmd_train(o),
        Command::Segment(o) => cmd_segment(o),
        Command::Evaluate(o) => cmd_evaluate(o),
        Command::Baseline(o) => cmd_baseline(o),
        Command::Ablate(o) => cmd_ablate(o),
        Command::Synth(o) => cmd_synth(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
