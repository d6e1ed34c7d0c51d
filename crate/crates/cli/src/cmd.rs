use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use tooka_core::aggregate::{
    aggregate_runs, load_fixtures, parse_runs_jsonl, render_table, verify_fixtures, TableFormat,
};
use tooka_core::bpe::{
    count_words, decode as decode_ids, encode_batch, train_from_counts, EncodeOptions, Encoding, TokenId, Vocab,
    WordCounts,
};
use tooka_core::config::PipelineConfig;
use tooka_core::eval::{score_files, F1Average, NerAccuracy, ScoreOptions, TaskKind};
use tooka_core::mlm::{build_instances, write_instances, MaskingReport};
use tooka_core::normalize::{
    normalize_corpus, read_documents, write_document, DocFormat, NormalizationConfig, Normalizer, RawDocument,
};
use tooka_core::pack::{pack_to_dir, read_shard};

use crate::{
    usage, AggregateArgs, AllArgs, DecodeArgs, EncodeArgs, MaskArgs, NormalizeArgs, PackArgs, ScoreArgs, TrainArgs,
    VerifyArgs,
};

const BATCH: usize = 4096;
const NORMALIZATION_KEYS: [&str; 3] = ["apply_nfkc", "char_map", "collapse_whitespace"];

/// A pipeline config, or a bare normalization config (the `normalize`
/// subcommand's own format), which is wrapped into the default pipeline.
pub fn load_config_file(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("config {} is not JSON", path.display()))?;
    let bare =
        value.as_object().is_some_and(|o| !o.is_empty() && o.keys().all(|k| NORMALIZATION_KEYS.contains(&k.as_str())));
    let cfg = if bare {
        let normalization: NormalizationConfig = serde_json::from_value(value)?;
        let cfg = PipelineConfig { normalization, ..Default::default() };
        cfg.validate()?;
        cfg
    } else {
        PipelineConfig::from_json(&text)?
    };
    Ok(cfg)
}

fn open_input(spec: &str) -> Result<Box<dyn BufRead>> {
    if spec == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    let f = File::open(spec).with_context(|| format!("cannot open {spec}"))?;
    Ok(Box::new(BufReader::with_capacity(1 << 20, f)))
}

fn create_file(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

fn open_output(spec: &str) -> Result<Box<dyn Write>> {
    if spec == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    Ok(Box::new(BufWriter::with_capacity(1 << 20, create_file(Path::new(spec))?)))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut f = create_file(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn doc_format(forced: Option<&str>, path: &str) -> Result<DocFormat> {
    match forced {
        None => Ok(DocFormat::from_path(path)),
        Some("lines") => Ok(DocFormat::Lines),
        Some("jsonl") => Ok(DocFormat::Jsonl),
        Some(other) => Err(usage(format!("unknown format {other:?} (expected lines or jsonl)"))),
    }
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Reads documents in batches of [`BATCH`], calling `f(first_index, batch)`.
fn for_each_batch(input: &str, format: DocFormat, mut f: impl FnMut(u64, &[RawDocument]) -> Result<()>) -> Result<u64> {
    let mut docs = read_documents(open_input(input)?, format);
    let mut batch = Vec::with_capacity(BATCH);
    let mut first = 0u64;
    loop {
        batch.clear();
        for d in docs.by_ref().take(BATCH) {
            batch.push(d?);
        }
        if batch.is_empty() {
            return Ok(first);
        }
        f(first, &batch)?;
        first += batch.len() as u64;
    }
}

fn load_vocab(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<Vocab> {
    let path = flag.unwrap_or_else(|| cfg.paths.vocab.clone());
    Vocab::load(&path).with_context(|| format!("cannot load vocab {}", path.display()))
}

fn encode_options(cfg: &PipelineConfig, dropout: Option<f64>, seed: Option<u64>) -> Result<EncodeOptions> {
    let opts = EncodeOptions::with_dropout(dropout.unwrap_or(cfg.encode.dropout_p), seed.unwrap_or(cfg.encode.seed));
    if !opts.is_valid() {
        return Err(usage(format!("dropout {} outside [0, 1]", opts.dropout_p)));
    }
    Ok(opts)
}

pub fn normalize(cfg: PipelineConfig, a: NormalizeArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| path_str(&cfg.paths.corpus));
    let out = a.out.unwrap_or_else(|| path_str(&cfg.paths.normalized));
    let in_fmt = doc_format(a.format.as_deref(), &input)?;
    let out_fmt = if a.format.is_some() || out == "-" { in_fmt } else { DocFormat::from_path(&out) };
    let normalizer = Normalizer::new(cfg.normalization.clone()).map_err(usage)?;

    let mut w = open_output(&out)?;
    let mut documents = 0u64;
    let docs = read_documents(open_input(&input)?, in_fmt);
    let report = normalize_corpus(docs, &normalizer, |d| {
        documents += 1;
        write_document(&mut w, d, out_fmt)
    })?;
    w.flush()?;

    let mut value = serde_json::to_value(&report)?;
    value["documents"] = json!(documents);
    let report_path = a.report.unwrap_or_else(|| cfg.paths.reports.join("normalize.json"));
    write_json(&report_path, &value)?;
    eprintln!("normalized {documents} documents ({} -> {} chars)", report.input_chars, report.output_chars);
    Ok(())
}

pub fn train_bpe(cfg: PipelineConfig, a: TrainArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| path_str(&cfg.paths.normalized));
    let format = doc_format(a.format.as_deref(), &input)?;
    let mut params = cfg.tokenizer.params();
    if let Some(v) = a.vocab_size {
        params.target_vocab = v;
    }
    if let Some(m) = a.min_frequency {
        if m == 0 {
            return Err(usage("--min-frequency must be at least 1"));
        }
        params.min_pair_frequency = m;
    }

    let mut counts = WordCounts::default();
    let documents = for_each_batch(&input, format, |_, batch| {
        let part = count_words(batch.iter().map(|d| d.text.as_str()));
        counts = std::mem::take(&mut counts).merge(part);
        Ok(())
    })?;
    let outcome = train_from_counts(&counts, params)?;
    let vocab = outcome.vocab;
    let out = a.out.unwrap_or_else(|| cfg.paths.vocab.clone());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    vocab.save(&out)?;

    if !outcome.reached_target {
        eprintln!("warning: ran out of pairs at {} tokens (target {})", vocab.len(), params.target_vocab);
    }
    write_json(
        &cfg.paths.reports.join("train_bpe.json"),
        &json!({
            "documents": documents,
            "distinct_words": counts.len(),
            "vocab_size": vocab.len(),
            "merges": vocab.merges().len(),
            "target_vocab": params.target_vocab,
            "reached_target": outcome.reached_target,
            "content_hash": format!("{:016x}", vocab.content_hash()),
        }),
    )?;
    eprintln!("vocab of {} tokens written to {}", vocab.len(), out.display());
    Ok(())
}

fn encoding_record(id: &str, e: &Encoding) -> Value {
    json!({ "id": id, "ids": e.ids, "word_starts": e.word_starts })
}

pub fn encode(cfg: PipelineConfig, a: EncodeArgs) -> Result<()> {
    let vocab = load_vocab(a.vocab, &cfg)?;
    let opts = encode_options(&cfg, a.dropout, a.seed)?;
    let format = doc_format(a.format.as_deref(), &a.input)?;
    let mut w = open_output(&a.out)?;
    for_each_batch(&a.input, format, |first, batch| {
        let texts: Vec<&str> = batch.iter().map(|d| d.text.as_str()).collect();
        for (d, e) in batch.iter().zip(encode_batch(&texts, first, &vocab, &opts)) {
            serde_json::to_writer(&mut w, &encoding_record(&d.doc_id, &e))?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    w.flush()?;
    Ok(())
}

fn parse_ids(v: &Value, line: usize) -> Result<Vec<TokenId>> {
    serde_json::from_value(v.clone()).with_context(|| format!("line {line}: ids must be an array of integers"))
}

pub fn decode(cfg: PipelineConfig, a: DecodeArgs) -> Result<()> {
    let vocab = load_vocab(a.vocab, &cfg)?;
    let mut w = open_output(&a.out)?;
    for (i, line) in open_input(&a.input)?.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('{') {
            let v: Value = serde_json::from_str(trimmed).with_context(|| format!("line {n}"))?;
            let ids = parse_ids(v.get("ids").unwrap_or(&Value::Null), n)?;
            let text = decode_ids(&ids, &vocab).with_context(|| format!("line {n}"))?;
            let id = v.get("id").cloned().unwrap_or_else(|| json!(n.to_string()));
            serde_json::to_writer(&mut w, &json!({ "id": id, "text": text }))?;
            writeln!(w)?;
        } else {
            let ids: Vec<TokenId> = if trimmed.starts_with('[') {
                parse_ids(&serde_json::from_str(trimmed).with_context(|| format!("line {n}"))?, n)?
            } else {
                trimmed
                    .split_whitespace()
                    .map(|t| t.parse().with_context(|| format!("line {n}: bad id {t:?}")))
                    .collect::<Result<_>>()?
            };
            writeln!(w, "{}", decode_ids(&ids, &vocab).with_context(|| format!("line {n}"))?)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// True when `path` holds the JSONL written by `encode`.
fn holds_encodings(path: &str) -> Result<bool> {
    if path == "-" || !path.ends_with(".jsonl") {
        return Ok(false);
    }
    let first = open_input(path)?.lines().map_while(|l| l.ok()).find(|l| !l.trim().is_empty());
    Ok(first.and_then(|l| serde_json::from_str::<Value>(&l).ok()).is_some_and(|v| v.get("ids").is_some()))
}

/// Streams encodings from a text corpus (encoding it on the fly) or from
/// `encode` output. The first error stops the stream and lands in `failure`.
fn encoding_stream<'a>(
    input: &'a str,
    format: Option<&str>,
    vocab: &'a Vocab,
    opts: EncodeOptions,
    failure: &'a mut Option<anyhow::Error>,
) -> Result<Box<dyn Iterator<Item = Encoding> + 'a>> {
    if format == Some("ids") || (format.is_none() && holds_encodings(input)?) {
        let mut lines = open_input(input)?.lines().enumerate();
        return Ok(Box::new(std::iter::from_fn(move || loop {
            let (i, line) = lines.next()?;
            let parsed = line
                .map_err(anyhow::Error::from)
                .and_then(|l| {
                    if l.trim().is_empty() {
                        return Ok(None);
                    }
                    Ok(Some(serde_json::from_str::<Encoding>(&l)?))
                })
                .with_context(|| format!("{input} line {}", i + 1));
            match parsed {
                Ok(Some(e)) => return Some(e),
                Ok(None) => continue,
                Err(e) => {
                    *failure = Some(e);
                    return None;
                }
            }
        })));
    }
    let doc_fmt = doc_format(format, input)?;
    let mut docs = read_documents(open_input(input)?, doc_fmt);
    let mut buffer = std::collections::VecDeque::new();
    let mut first = 0u64;
    Ok(Box::new(std::iter::from_fn(move || {
        if buffer.is_empty() {
            let mut texts = Vec::with_capacity(BATCH);
            for d in docs.by_ref().take(BATCH) {
                match d {
                    Ok(d) => texts.push(d.text),
                    Err(e) => {
                        *failure = Some(e.into());
                        return None;
                    }
                }
            }
            buffer.extend(encode_batch(&texts, first, vocab, &opts));
            first += texts.len() as u64;
        }
        buffer.pop_front()
    })))
}

fn shard_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("shard_") && name.ends_with(".tkpk")
        })
        .collect();
    out.sort();
    Ok(out)
}

pub fn pack(cfg: PipelineConfig, a: PackArgs) -> Result<()> {
    let vocab = load_vocab(a.vocab, &cfg)?;
    let opts = encode_options(&cfg, a.dropout, a.seed)?;
    let mut packer = cfg.packer;
    if let Some(n) = a.seq_len {
        packer.seq_len = n;
    }
    if let Some(n) = a.shard_size {
        packer.shard_capacity = n;
    }
    packer.validate().map_err(usage)?;
    let input = a.input.unwrap_or_else(|| path_str(&cfg.paths.normalized));
    let out_dir = a.out_dir.unwrap_or_else(|| cfg.paths.shards.clone());

    let mut failure = None;
    let stream = encoding_stream(&input, a.format.as_deref(), &vocab, opts, &mut failure)?;
    let (paths, report) = pack_to_dir(stream, &packer, &vocab, &out_dir)?;
    if let Some(e) = failure {
        return Err(e);
    }
    // Shards left over from an earlier, longer run would be picked up by `mask`.
    for stale in shard_files(&out_dir)?.into_iter().filter(|p| !paths.contains(p)) {
        fs::remove_file(&stale).with_context(|| format!("cannot remove stale {}", stale.display()))?;
    }

    let mut value = serde_json::to_value(&report)?;
    value["seq_len"] = json!(packer.seq_len);
    value["vocab_hash"] = json!(format!("{:016x}", vocab.content_hash()));
    value["dropout_p"] = json!(opts.dropout_p);
    value["seed"] = json!(opts.seed);
    let report_path = a.report.unwrap_or_else(|| cfg.paths.reports.join("pack.json"));
    write_json(&report_path, &value)?;
    eprintln!("packed {} sequences into {} shard(s) in {}", report.sequences, report.shards, out_dir.display());
    Ok(())
}

fn shard_index(path: &Path, position: usize) -> u64 {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("shard_"))
        .and_then(|d| d.parse().ok())
        .unwrap_or(position as u64)
}

pub fn mask(cfg: PipelineConfig, a: MaskArgs) -> Result<()> {
    let vocab = load_vocab(a.vocab, &cfg)?;
    let mut policy = cfg.masking;
    if let Some(r) = a.rate {
        policy.mask_rate = r;
    }
    if let Some(s) = a.seed {
        policy.seed = s;
    }
    policy.validate().map_err(usage)?;
    let single = a.shard.is_some();
    let shards = match a.shard {
        Some(p) => vec![p],
        None => shard_files(&cfg.paths.shards)?,
    };
    if shards.is_empty() {
        bail!("no shard files in {}", cfg.paths.shards.display());
    }
    if let Some(dir) = a.emit.as_ref().filter(|_| !single) {
        fs::create_dir_all(dir)?;
    }

    let mut report = MaskingReport::default();
    for (pos, path) in shards.iter().enumerate() {
        let shard = read_shard(path, Some(vocab.content_hash())).with_context(|| format!("{}", path.display()))?;
        let index = shard_index(path, pos);
        let instances = build_instances(&shard, index, &policy, &vocab);
        for inst in &instances {
            report.add(inst);
        }
        if let Some(target) = &a.emit {
            let file = if single { target.clone() } else { target.join(format!("instances_{index:05}.tkmi")) };
            let mut w = BufWriter::new(create_file(&file)?);
            write_instances(&mut w, shard.seq_len, vocab.content_hash(), &instances)?;
            w.flush()?;
        }
    }

    let mut value = serde_json::to_value(&report)?;
    value["shards"] = json!(shards.len());
    value["policy"] = serde_json::to_value(policy)?;
    let report_path = a.report.unwrap_or_else(|| cfg.paths.reports.join("mask.json"));
    write_json(&report_path, &value)?;
    eprintln!(
        "{} instances, labeled fraction {:.4}, [MASK] share {:.4}",
        report.instances, report.label_fraction, report.mask_fraction_of_labeled
    );
    Ok(())
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let task: TaskKind = a.task.parse().map_err(usage)?;
    let labels: Option<Vec<String>> = a.labels.map(|l| l.split(',').map(|s| s.trim().to_owned()).collect());
    let average = match a.average.as_str() {
        "macro" => F1Average::Macro,
        "micro" => F1Average::Micro,
        "binary" => {
            let (Some(pos), Some(labels)) = (&a.positive, &labels) else {
                return Err(usage("--average binary needs --positive and --labels"));
            };
            let positive = labels
                .iter()
                .position(|l| l == pos)
                .ok_or_else(|| usage(format!("positive label {pos:?} is not in --labels")))?;
            F1Average::Binary { positive }
        }
        other => return Err(usage(format!("unknown average {other:?}"))),
    };
    let ner_accuracy = match a.ner_accuracy.as_str() {
        "entity-type" => NerAccuracy::EntityType,
        "full-tag" => NerAccuracy::FullTag,
        other => return Err(usage(format!("unknown ner accuracy {other:?}"))),
    };
    let opts = ScoreOptions { labels, average, ner_accuracy };
    let bundle = score_files(task, &a.gold, &a.pred, &opts)?;
    let value = serde_json::to_value(&bundle)?;
    match a.out {
        Some(p) => write_json(&p, &value)?,
        None => println!("{}", serde_json::to_string_pretty(&value)?),
    }
    Ok(())
}

pub fn aggregate(cfg: PipelineConfig, a: AggregateArgs) -> Result<()> {
    let format = match (&a.format, &a.out) {
        (Some(f), _) => f.parse::<TableFormat>().map_err(usage)?,
        (None, Some(p)) if p.extension().is_some_and(|e| e == "tsv") => TableFormat::Tsv,
        _ => TableFormat::Markdown,
    };
    let text = fs::read_to_string(&a.runs).with_context(|| format!("cannot read {}", a.runs.display()))?;
    let runs = parse_runs_jsonl(&text)?;
    let rows = aggregate_runs(&runs, &cfg.sweep)?;
    let table = render_table(&rows, format)?;
    match a.out {
        Some(p) => create_file(&p)?.write_all(table.as_bytes())?,
        None => print!("{table}"),
    }
    Ok(())
}

pub fn verify_tables(a: VerifyArgs) -> Result<()> {
    let fixtures = load_fixtures(&a.fixtures)?;
    if fixtures.is_empty() {
        bail!("no fixtures in {}", a.fixtures.display());
    }
    let checks = verify_fixtures(&fixtures)?;
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed { "ok" } else { "FAIL" };
        println!(
            "table {}  {:<20} computed {:>8.4}  published {:>5.1}  {status}",
            c.table, c.model, c.computed, c.published
        );
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        bail!("{failed} of {} averages outside tolerance", checks.len());
    }
    println!("all {} averages reproduced", checks.len());
    Ok(())
}

pub fn all(mut cfg: PipelineConfig, a: AllArgs) -> Result<()> {
    if let Some(seed) = a.seed {
        cfg.set_seed(seed);
    }
    normalize(cfg.clone(), NormalizeArgs { input: None, out: None, report: None, format: None })?;
    train_bpe(cfg.clone(), TrainArgs { input: None, vocab_size: None, min_frequency: None, out: None, format: None })?;
    pack(
        cfg.clone(),
        PackArgs {
            vocab: None,
            input: None,
            seq_len: None,
            shard_size: None,
            out_dir: None,
            dropout: None,
            seed: None,
            report: None,
            format: None,
        },
    )?;
    let emit = Some(cfg.paths.instances.clone());
    mask(cfg, MaskArgs { shard: None, vocab: None, rate: None, seed: None, report: None, emit })
}
