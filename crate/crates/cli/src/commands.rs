//! One function per subcommand. The `*_with` variants take already loaded
//! data so that `repro` can chain them without rereading files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use taskdisc::corpus::io::write_jsonl_file;
use taskdisc::corpus::world::{answer_embeddings, slot_synset, SLOTS};
use taskdisc::corpus::{build_oov_split, generate_micro_world, VqaTriple};
use taskdisc::eval::{eval_threads, evaluate, retrieve_questions, ScoreReport};
use taskdisc::lexical_graph::{build_inverted_table, build_word_groups, parse_graph};
use taskdisc::model::{
    pretrain, train_answer_embedding, train_dual, train_standard, transfer, AnswerEmbeddings, DualView, EpochLog, Head,
    ModelError, PretrainData, Pretrained, VqaData, VqaKind, VqaModel,
};
use taskdisc::task_discovery::Mode;

use crate::config::file_hash;
use crate::events::{Event, EventLog};
use crate::workspace::{
    missing, run_path, write_json, RunRecord, SplitFile, Workspace, World, WorldKind, WorldManifest,
};
use crate::{CliError, Result};

/// Baselines trained by `train-baseline`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Standard,
    AnswerEmbedding,
    Separable,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Standard, Baseline::AnswerEmbedding, Baseline::Separable];
}

pub fn pretrained_name(head: Head, mode: Mode, seed: u64) -> String {
    match head {
        Head::TaskConditional => format!("pretrain-{mode}-s{seed}"),
        Head::Separable => format!("pretrain-separable-{mode}-s{seed}"),
    }
}

pub fn transfer_name(head: Head, mode: Mode, seed: u64) -> String {
    match head {
        Head::TaskConditional => format!("proposed-{mode}-s{seed}"),
        Head::Separable => format!("separable-{mode}-s{seed}"),
    }
}

pub fn baseline_name(kind: Baseline, mode: Mode, seed: u64) -> String {
    match kind {
        Baseline::Standard => format!("standard-s{seed}"),
        Baseline::AnswerEmbedding => format!("answer-embedding-s{seed}"),
        Baseline::Separable => transfer_name(Head::Separable, mode, seed),
    }
}

pub fn dual_name(mode: Mode, seed: u64) -> String {
    format!("dual-{mode}-s{seed}")
}

fn observer_error(e: CliError) -> ModelError {
    ModelError::Io(std::io::Error::other(e.to_string()))
}

/// A world with its split, loaded once.
pub struct Data {
    pub kind: WorldKind,
    pub world: World,
    pub split: SplitFile,
}

impl Data {
    pub fn load(ws: &Workspace, kind: WorldKind) -> Result<Self> {
        Ok(Self {
            kind,
            world: ws.load_world(kind)?,
            split: ws.load_split(kind)?,
        })
    }

    pub fn part(&self, name: &str) -> Result<Vec<&VqaTriple>> {
        let ids = self
            .split
            .split
            .part(name)
            .ok_or_else(|| CliError::ConfigInvalid(format!("unknown split part {name:?}")))?;
        self.world.pick(ids)
    }

    fn pretrain_data(&self) -> PretrainData<'_> {
        PretrainData {
            quadruples: &self.world.quadruples,
            bank: &self.world.bank,
            graph: &self.world.graph,
            vocab: &self.world.vocab,
            tokens: &self.world.tokens,
        }
    }
}

fn record(
    ws: &Workspace,
    data: &Data,
    name: &str,
    seed: u64,
    trace: Vec<EpochLog>,
    theta: Option<(String, String)>,
) -> Result<()> {
    let rec = RunRecord {
        name: name.to_string(),
        world: data.kind,
        config_hash: ws.cfg.config_hash(),
        data_hash: data.split.data_hash.clone(),
        seed,
        trace,
        theta,
    };
    write_json(&run_path(&ws.model_stem(name)), &rec)
}

/// Word group and inverted tables of `graph`, or of the configured graph,
/// or of the generated world's graph.
pub fn cmd_build_tables(ws: &Workspace, graph: Option<&Path>) -> Result<(usize, usize)> {
    let path: PathBuf = match (graph, &ws.cfg.graph_path) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => ws.world_dir(WorldKind::Main).join("graph.jsonl"),
    };
    let f = File::open(&path).map_err(|e| missing(&path, e))?;
    let g = parse_graph(BufReader::new(f))?;
    let groups = build_word_groups(&g);
    let inverted = build_inverted_table(&groups);
    let dir = ws.dir("tables")?;
    write_json(&dir.join("word_groups.json"), &groups)?;
    write_json(&dir.join("inverted_word_groups.json"), &inverted)?;
    write_json(
        &dir.join("manifest.json"),
        &serde_json::json!({
            "config_hash": ws.cfg.config_hash(),
            "graph": path.display().to_string(),
            "graph_hash": file_hash(&path)?,
            "word_groups": groups.len(),
            "inverted_entries": inverted.len(),
        }),
    )?;
    ws.write_meta("build-tables", &[path], serde_json::Value::Null)?;
    Ok((groups.len(), inverted.len()))
}

/// Generates the micro-world and writes it in the ingestion formats.
pub fn cmd_gen_world(ws: &Workspace, kind: WorldKind) -> Result<WorldManifest> {
    let world = generate_micro_world(&ws.cfg.world(kind == WorldKind::YesNo))?;
    let dir = ws.world_dir(kind);
    fs::create_dir_all(&dir)?;
    let mut graph = BufWriter::new(File::create(dir.join("graph.jsonl"))?);
    world.graph.write_jsonl(&mut graph)?;
    graph.flush()?;
    drop(graph);
    write_jsonl_file(&world.quadruples, &dir.join("quadruples.jsonl"))?;
    write_jsonl_file(&world.triples, &dir.join("triples.jsonl"))?;
    write_jsonl_file(&world.meta, &dir.join("triple_meta.jsonl"))?;
    world.bank.write(&dir.join("scenes.bin"))?;
    write_json(&dir.join("answers.json"), &world.vocab)?;
    // Stand-in word vectors are a fixed input, like downloaded embeddings,
    // so they follow the world seed rather than the model seed.
    let emb = AnswerEmbeddings::new(answer_embeddings(&world, ws.cfg.embedding_dim, ws.cfg.world_seed))?;
    let mut w = BufWriter::new(File::create(dir.join("answer_embeddings.txt"))?);
    emb.write(world.vocab.answers(), &mut w)?;
    w.flush()?;
    drop(w);

    let mut files = BTreeMap::new();
    let mut names: Vec<String> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    for n in names {
        files.insert(n.clone(), file_hash(&dir.join(&n))?);
    }
    let manifest = WorldManifest {
        config_hash: ws.cfg.config_hash(),
        data_hash: ws.data_hash(kind),
        scenes: world.bank.len(),
        quadruples: world.quadruples.len(),
        triples: world.triples.len(),
        answers: world.vocab.len(),
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    ws.write_meta(
        &format!("gen-world{}", suffix(kind)),
        &[],
        serde_json::to_value(&manifest)?,
    )?;
    Ok(manifest)
}

fn suffix(kind: WorldKind) -> &'static str {
    match kind {
        WorldKind::Main => "",
        WorldKind::YesNo => "-yesno",
    }
}

pub fn cmd_make_splits(ws: &Workspace, kind: WorldKind) -> Result<SplitFile> {
    let world = ws.load_world(kind)?;
    let (split, vocab) = build_oov_split(&world.triples, &world.vocab, ws.cfg.oov_fraction, ws.cfg.split_seed)?;
    let file = SplitFile {
        config_hash: ws.cfg.config_hash(),
        data_hash: ws.data_hash(kind),
        split,
        vocab,
    };
    ws.dir("splits")?;
    let path = ws.split_path(kind);
    write_json(&path, &file)?;
    let triples = ws.world_dir(kind).join("triples.jsonl");
    ws.write_meta(
        &format!("make-splits{}", suffix(kind)),
        &[triples, path],
        serde_json::json!({
            "oov_answers": file.split.oov_answers.len(),
            "train": file.split.train.len(),
            "val": file.split.val.len(),
            "test_oov": file.split.test_oov.len(),
            "test_mixed": file.split.test_mixed.len(),
        }),
    )?;
    Ok(file)
}

/// Pretrains one head; the checkpoint is rewritten after every epoch.
pub fn pretrain_with(
    ws: &Workspace,
    data: &Data,
    head: Head,
    mode: Mode,
    seed: u64,
    events: &mut EventLog,
) -> Result<(Pretrained, Vec<EpochLog>)> {
    let name = pretrained_name(head, mode, seed);
    let stem = ws.model_stem(&name);
    ws.dir("models")?;
    let mut obs = |log: &EpochLog, state: &Pretrained| -> taskdisc::model::Result<()> {
        events.epoch(&name, log).map_err(observer_error)?;
        state.save(&stem, log.epoch as u64)
    };
    let (pre, trace) = pretrain(
        &data.pretrain_data(),
        head,
        mode,
        &ws.cfg.model(),
        &ws.cfg.pretrain(),
        seed,
        &mut obs,
    )?;
    pre.save(&stem, trace.len() as u64)?;
    record(ws, data, &name, seed, trace.clone(), None)?;
    Ok((pre, trace))
}

pub fn cmd_pretrain(ws: &Workspace, head: Head, mode: Mode) -> Result<Vec<EpochLog>> {
    let data = Data::load(ws, WorldKind::Main)?;
    let mut events = EventLog::append(&ws.events_path())?;
    let (_, trace) = pretrain_with(ws, &data, head, mode, ws.cfg.seed, &mut events)?;
    ws.write_meta(
        "pretrain",
        &[],
        serde_json::json!({"head": head, "mode": mode, "trace": trace}),
    )?;
    Ok(trace)
}

pub fn load_pretrained(ws: &Workspace, head: Head, mode: Mode, seed: u64) -> Result<Pretrained> {
    let stem = ws.model_stem(&pretrained_name(head, mode, seed));
    load_pretrained_at(ws, &stem, WorldKind::Main)
}

fn load_pretrained_at(ws: &Workspace, stem: &Path, kind: WorldKind) -> Result<Pretrained> {
    let rec = ws.load_record(stem).map_err(|e| match e {
        CliError::MissingInput { .. } => missing(stem, "no pretrained checkpoint; run pretrain first"),
        e => e,
    })?;
    ws.check_hash(&run_path(stem), kind_for_pretrained(kind), &rec.data_hash)?;
    Ok(Pretrained::load(stem)?)
}

/// Pretraining only reads quadruples, which both worlds share, so a
/// checkpoint from the main world serves the yes/no world as well.
fn kind_for_pretrained(_: WorldKind) -> WorldKind {
    WorldKind::Main
}

/// Transfers a pretrained head to VQA and checks that θ came through
/// unchanged.
pub fn transfer_with(
    ws: &Workspace,
    data: &Data,
    mut pre: Pretrained,
    seed: u64,
    events: &mut EventLog,
) -> Result<(VqaModel, bool)> {
    let name = transfer_name(pre.head, pre.mode, seed);
    pre.freeze_theta();
    let before = pre.params.group_bytes("theta");
    let (train, val) = (data.part("train")?, data.part("val")?);
    let vdata = VqaData {
        bank: &data.world.bank,
        train: &train,
        val: &val,
    };
    let mut obs = |log: &EpochLog, _: &VqaModel| events.epoch(&name, log).map_err(observer_error);
    let (model, trace) = transfer(&pre, &data.split.vocab, &vdata, &ws.cfg.vqa(), seed, &mut obs)?;
    let after = model.params.group_bytes("theta");
    let unchanged = before == after;
    if !unchanged {
        log::error!("{name}: theta changed during transfer");
    }
    model.save(&ws.model_stem(&name), trace.len() as u64)?;
    let theta = (model_hash(&before), model_hash(&after));
    record(ws, data, &name, seed, trace, Some(theta))?;
    Ok((model, unchanged))
}

fn model_hash(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

pub fn cmd_transfer(ws: &Workspace, head: Head, mode: Mode) -> Result<bool> {
    let data = Data::load(ws, WorldKind::Main)?;
    let pre = load_pretrained(ws, head, mode, ws.cfg.seed)?;
    let mut events = EventLog::append(&ws.events_path())?;
    let (_, unchanged) = transfer_with(ws, &data, pre, ws.cfg.seed, &mut events)?;
    ws.write_meta(
        "transfer",
        &[],
        serde_json::json!({"head": head, "mode": mode, "theta_unchanged": unchanged}),
    )?;
    Ok(unchanged)
}

/// Trains a baseline. The separable baseline pretrains its own head first.
pub fn baseline_with(
    ws: &Workspace,
    data: &Data,
    kind: Baseline,
    mode: Mode,
    seed: u64,
    events: &mut EventLog,
) -> Result<VqaModel> {
    if kind == Baseline::Separable {
        let (pre, _) = pretrain_with(ws, data, Head::Separable, mode, seed, events)?;
        return Ok(transfer_with(ws, data, pre, seed, events)?.0);
    }
    let name = baseline_name(kind, mode, seed);
    let (train, val) = (data.part("train")?, data.part("val")?);
    let vdata = VqaData {
        bank: &data.world.bank,
        train: &train,
        val: &val,
    };
    let mut obs = |log: &EpochLog, _: &VqaModel| events.epoch(&name, log).map_err(observer_error);
    let (vocab, tokens, model_cfg, vqa_cfg) = (&data.split.vocab, &data.world.tokens, ws.cfg.model(), ws.cfg.vqa());
    let (model, trace) = match kind {
        Baseline::Standard => train_standard(vocab, tokens, &model_cfg, &vdata, &vqa_cfg, seed, &mut obs)?,
        _ => train_answer_embedding(
            vocab,
            tokens,
            &data.world.embeddings,
            &model_cfg,
            &vdata,
            &vqa_cfg,
            seed,
            &mut obs,
        )?,
    };
    ws.dir("models")?;
    model.save(&ws.model_stem(&name), trace.len() as u64)?;
    record(ws, data, &name, seed, trace, None)?;
    Ok(model)
}

pub fn cmd_train_baseline(ws: &Workspace, kind: Baseline) -> Result<String> {
    let data = Data::load(ws, WorldKind::Main)?;
    let mut events = EventLog::append(&ws.events_path())?;
    baseline_with(ws, &data, kind, ws.cfg.mode, ws.cfg.seed, &mut events)?;
    let name = baseline_name(kind, ws.cfg.mode, ws.cfg.seed);
    ws.write_meta("train-baseline", &[], serde_json::json!({"kind": kind, "model": name}))?;
    Ok(name)
}

/// Scores `model` on one split part and writes the report under
/// `reports/<report>/`.
pub fn evaluate_with(ws: &Workspace, data: &Data, model: &VqaModel, part: &str, report: &str) -> Result<ScoreReport> {
    let triples = data.part(part)?;
    let slots = data.world.slots();
    let r = evaluate(
        model,
        &data.world.bank,
        &triples,
        &data.split.vocab,
        Some(&slots),
        eval_threads(),
    )?;
    let dir = ws.dir(&format!("reports/{report}"))?;
    write_json(
        &dir.join("report.json"),
        &serde_json::json!({
            "config_hash": ws.cfg.config_hash(),
            "data_hash": data.split.data_hash,
            "part": part,
            "report": r,
        }),
    )?;
    let mut csv = BufWriter::new(File::create(dir.join("report.csv"))?);
    r.write_csv(&mut csv)?;
    csv.flush()?;
    let mut answers = BufWriter::new(File::create(dir.join("answers.csv"))?);
    r.write_answer_csv(&mut answers)?;
    answers.flush()?;
    Ok(r)
}

/// A checkpoint named either by path or by its name under `models/`.
pub fn resolve_model(ws: &Workspace, name: &str) -> PathBuf {
    let p = PathBuf::from(name);
    if p.components().count() > 1 {
        p
    } else {
        ws.model_stem(name)
    }
}

fn stem_name(stem: &Path) -> String {
    stem.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a VQA checkpoint after checking its sidecar against the split.
fn load_vqa(ws: &Workspace, stem: &Path) -> Result<(VqaModel, RunRecord)> {
    let rec = ws.load_record(stem)?;
    let split = ws.load_split(rec.world)?;
    ws.guard(stem, &split.data_hash, &rec.data_hash)?;
    Ok((VqaModel::load(stem)?, rec))
}

pub fn cmd_evaluate(ws: &Workspace, model: &str, part: &str) -> Result<ScoreReport> {
    let stem = resolve_model(ws, model);
    let (m, rec) = load_vqa(ws, &stem)?;
    let data = Data::load(ws, rec.world)?;
    let name = format!("{}-{part}", stem_name(&stem));
    let r = evaluate_with(ws, &data, &m, part, &name)?;
    let mut events = EventLog::append(&ws.events_path())?;
    if let Some(a) = &r.aggregates {
        events.emit(&Event::Score {
            run: &name,
            part,
            overall: a.overall,
            oov: a.oov,
            in_vocab: a.in_vocab,
        })?;
    }
    ws.write_meta(
        "evaluate",
        &[stem.with_extension("bin"), ws.split_path(rec.world)],
        serde_json::json!({"model": name}),
    )?;
    Ok(r)
}

/// Retrieval purity per slot synset: the share of retrieved questions that
/// were generated for that slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub part: String,
    pub top_k: usize,
    pub purity: BTreeMap<String, f64>,
    pub entries: BTreeMap<String, Vec<(u64, f32)>>,
}

pub fn retrieve_with(
    ws: &Workspace,
    data: &Data,
    pre: &Pretrained,
    vqa: &VqaModel,
    part: &str,
    out: &str,
) -> Result<RetrievalSummary> {
    let questions = data.part(part)?;
    let synsets: Vec<_> = SLOTS.iter().map(|s| slot_synset(s)).collect();
    let table = retrieve_questions(pre, vqa, &synsets, &questions, ws.cfg.top_k)?;
    let slots = data.world.slots();
    let mut purity = BTreeMap::new();
    for (syn, rows) in &table.entries {
        let slot = syn.split('.').next().unwrap_or_default();
        let hits = rows
            .iter()
            .filter(|(id, _)| slots.get(id).is_some_and(|s| s == slot))
            .count();
        purity.insert(syn.clone(), hits as f64 / rows.len().max(1) as f64);
    }
    let summary = RetrievalSummary {
        part: part.to_string(),
        top_k: ws.cfg.top_k,
        purity,
        entries: table.entries,
    };
    write_json(&ws.dir("retrieval")?.join(format!("{out}.json")), &summary)?;
    Ok(summary)
}

pub fn cmd_retrieve(ws: &Workspace, pretrained: &str, vqa: &str, part: &str) -> Result<RetrievalSummary> {
    let pre_stem = resolve_model(ws, pretrained);
    let pre = load_pretrained_at(ws, &pre_stem, WorldKind::Main)?;
    let vqa_stem = resolve_model(ws, vqa);
    let (model, rec) = load_vqa(ws, &vqa_stem)?;
    let data = Data::load(ws, rec.world)?;
    let out = stem_name(&vqa_stem);
    let s = retrieve_with(ws, &data, &pre, &model, part, &out)?;
    ws.write_meta(
        "retrieve",
        &[pre_stem.with_extension("bin"), vqa_stem.with_extension("bin")],
        serde_json::json!({"purity": s.purity}),
    )?;
    Ok(s)
}

/// Total mixed-split score of each view of a dual model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualScores {
    pub combined: f64,
    pub frozen: f64,
    pub finetuned: f64,
    pub per_slot: BTreeMap<String, BTreeMap<String, f64>>,
}

pub fn dual_train_with(
    ws: &Workspace,
    data: &Data,
    pre: &Pretrained,
    seed: u64,
    events: &mut EventLog,
) -> Result<VqaModel> {
    let mut pre = pre.clone();
    pre.freeze_theta();
    let name = dual_name(pre.mode, seed);
    let (train, val) = (data.part("train")?, data.part("val")?);
    let vdata = VqaData {
        bank: &data.world.bank,
        train: &train,
        val: &val,
    };
    let mut obs = |log: &EpochLog, _: &VqaModel| events.epoch(&name, log).map_err(observer_error);
    let (model, trace) = train_dual(&pre, &data.split.vocab, &vdata, &ws.cfg.vqa(), seed, &mut obs)?;
    ws.dir("models")?;
    model.save(&ws.model_stem(&name), trace.len() as u64)?;
    record(ws, data, &name, seed, trace, None)?;
    Ok(model)
}

pub fn dual_scores_with(ws: &Workspace, data: &Data, model: &VqaModel, name: &str) -> Result<DualScores> {
    let mut totals = BTreeMap::new();
    let mut per_slot = BTreeMap::new();
    for (view, tag) in [
        (DualView::Combined, "combined"),
        (DualView::Frozen, "frozen"),
        (DualView::Finetuned, "finetuned"),
    ] {
        let r = evaluate_with(ws, data, &model.with_view(view), "test_mixed", &format!("{name}-{tag}"))?;
        let a = r
            .aggregates
            .ok_or_else(|| CliError::ConfigInvalid("the mixed split has no questions".into()))?;
        totals.insert(tag, a.overall);
        per_slot.insert(tag.to_string(), a.per_slot);
    }
    Ok(DualScores {
        combined: totals["combined"],
        frozen: totals["frozen"],
        finetuned: totals["finetuned"],
        per_slot,
    })
}

/// Dual combine on the yes/no world. `frozen` names the pretrained
/// checkpoint; `finetuned`, if given, an already trained dual model, which
/// otherwise is trained here.
pub fn cmd_combine(ws: &Workspace, frozen: Option<&str>, finetuned: Option<&str>) -> Result<DualScores> {
    let seed = ws.cfg.seed;
    let data = Data::load(ws, WorldKind::YesNo)?;
    let pre_stem = match frozen {
        Some(f) => resolve_model(ws, f),
        None => ws.model_stem(&pretrained_name(Head::TaskConditional, ws.cfg.mode, seed)),
    };
    let pre = load_pretrained_at(ws, &pre_stem, WorldKind::YesNo)?;
    let (model, name) = match finetuned {
        Some(f) => {
            let stem = resolve_model(ws, f);
            let (m, _) = load_vqa(ws, &stem)?;
            if m.kind != VqaKind::Dual {
                return Err(CliError::ConfigInvalid(format!(
                    "{} is not a dual model",
                    stem.display()
                )));
            }
            (m, stem_name(&stem))
        }
        None => {
            let mut events = EventLog::append(&ws.events_path())?;
            (
                dual_train_with(ws, &data, &pre, seed, &mut events)?,
                dual_name(pre.mode, seed),
            )
        }
    };
    let scores = dual_scores_with(ws, &data, &model, &name)?;
    ws.write_meta(
        "combine",
        &[pre_stem.with_extension("bin")],
        serde_json::to_value(&scores)?,
    )?;
    Ok(scores)
}

/// Elapsed seconds since `t0`.
pub fn secs(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64()
}
