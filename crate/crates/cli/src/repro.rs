//! The full pipeline: world, splits, tables, every model on every seed,
//! retrieval and the dual combine, summarized in one `report.json`.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use taskdisc::eval::{summarize, ScoreReport, SeedSummary};
use taskdisc::model::{Head, VqaModel};
use taskdisc::task_discovery::Mode;

use crate::commands::{
    baseline_with, cmd_build_tables, cmd_gen_world, cmd_make_splits, dual_name, dual_scores_with, dual_train_with,
    evaluate_with, pretrain_with, retrieve_with, secs, transfer_with, Baseline, Data, DualScores,
};
use crate::events::{Event, EventLog};
use crate::workspace::{write_json, Workspace, WorldKind};
use crate::{CliError, Result};

/// Slots pooled as attribute answers.
pub const ATTRIBUTE_SLOTS: [&str; 2] = ["color", "material"];

/// Seed summaries of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    /// Score on questions whose answers are all out of vocabulary.
    pub oov: SeedSummary,
    /// In-vocabulary stratum of the mixed test part.
    pub in_vocab: SeedSummary,
    /// Whole mixed test part.
    pub mixed: SeedSummary,
    pub oov_per_slot: BTreeMap<String, SeedSummary>,
    /// OOV questions about colors and materials, pooled.
    pub oov_attribute: SeedSummary,
    pub oov_object: SeedSummary,
    pub epochs: Vec<usize>,
}

/// Proposed minus separable OOV score, on seed means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeGap {
    pub attribute: f64,
    pub object: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Seconds per seed of training plus evaluation.
    pub per_model: BTreeMap<String, Vec<f64>>,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproReport {
    pub config_hash: String,
    pub data_hash: String,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    /// Mean OOV score of the proposed model.
    pub oov_overall: f64,
    /// `proposed`, `separable`, `answer_embedding`, `standard`.
    pub models: BTreeMap<String, ModelSummary>,
    /// The proposed model pretrained on each task source.
    pub modes: BTreeMap<String, ModelSummary>,
    pub attribute_gap: AttributeGap,
    /// Held-out pretraining task accuracy per pretrained head.
    pub pretrain_accuracy: BTreeMap<String, SeedSummary>,
    /// θ was bit-identical before and after every transfer.
    pub theta_unchanged: bool,
    /// Retrieval purity per slot synset, base seed.
    pub retrieval: BTreeMap<String, f64>,
    /// Dual combine on the mixed part of the yes/no world, base seed.
    pub dual: DualScores,
    pub timings: Timings,
}

#[derive(Default)]
struct Runs {
    oov: Vec<f64>,
    in_vocab: Vec<f64>,
    mixed: Vec<f64>,
    per_slot: BTreeMap<String, Vec<f64>>,
    attribute: Vec<f64>,
    object: Vec<f64>,
    epochs: Vec<usize>,
}

fn pooled(r: &ScoreReport, slots: &[&str]) -> f64 {
    let picked: Vec<f64> = r
        .questions
        .iter()
        .filter(|q| q.slot.as_deref().is_some_and(|s| slots.contains(&s)))
        .map(|q| q.score)
        .collect();
    picked.iter().sum::<f64>() / picked.len().max(1) as f64
}

impl Runs {
    fn add(&mut self, oov: &ScoreReport, mixed: &ScoreReport, epochs: usize) -> Result<()> {
        let empty = || CliError::ConfigInvalid("a test part has no questions".into());
        let a = oov.aggregates.as_ref().ok_or_else(empty)?;
        let m = mixed.aggregates.as_ref().ok_or_else(empty)?;
        self.oov.push(a.overall);
        self.in_vocab.push(m.in_vocab.unwrap_or(0.0));
        self.mixed.push(m.overall);
        for (slot, v) in &a.per_slot {
            self.per_slot.entry(slot.clone()).or_default().push(*v);
        }
        self.attribute.push(pooled(oov, &ATTRIBUTE_SLOTS));
        self.object.push(pooled(oov, &["object"]));
        self.epochs.push(epochs);
        Ok(())
    }

    fn summary(&self) -> ModelSummary {
        ModelSummary {
            oov: summarize(&self.oov),
            in_vocab: summarize(&self.in_vocab),
            mixed: summarize(&self.mixed),
            oov_per_slot: self.per_slot.iter().map(|(k, v)| (k.clone(), summarize(v))).collect(),
            oov_attribute: summarize(&self.attribute),
            oov_object: summarize(&self.object),
            epochs: self.epochs.clone(),
        }
    }
}

struct Ctx<'a> {
    ws: &'a Workspace,
    data: &'a Data,
    events: EventLog,
    runs: BTreeMap<String, Runs>,
    timings: Timings,
}

impl Ctx<'_> {
    fn score(&mut self, key: &str, name: &str, model: &VqaModel, epochs: usize, t0: Instant) -> Result<()> {
        let oov = evaluate_with(self.ws, self.data, model, "test_oov", &format!("{name}-test_oov"))?;
        let mixed = evaluate_with(self.ws, self.data, model, "test_mixed", &format!("{name}-test_mixed"))?;
        for (part, r) in [("test_oov", &oov), ("test_mixed", &mixed)] {
            if let Some(a) = &r.aggregates {
                self.events.emit(&Event::Score {
                    run: name,
                    part,
                    overall: a.overall,
                    oov: a.oov,
                    in_vocab: a.in_vocab,
                })?;
            }
        }
        self.runs
            .entry(key.to_string())
            .or_default()
            .add(&oov, &mixed, epochs)?;
        self.timings
            .per_model
            .entry(key.to_string())
            .or_default()
            .push(secs(t0));
        Ok(())
    }
}

fn trace_len(ws: &Workspace, name: &str) -> Result<usize> {
    Ok(ws.load_record(&ws.model_stem(name))?.trace.len())
}

/// Runs everything under the workspace's output directory.
pub fn cmd_repro(ws: &Workspace) -> Result<ReproReport> {
    let start = Instant::now();
    let cfg = &ws.cfg;
    let mut events = EventLog::create(&ws.events_path())?;
    let config_hash = cfg.config_hash();
    events.emit(&Event::Start {
        command: "repro",
        config_hash: &config_hash,
    })?;

    for kind in [WorldKind::Main, WorldKind::YesNo] {
        cmd_gen_world(ws, kind)?;
        cmd_make_splits(ws, kind)?;
    }
    cmd_build_tables(ws, Some(&ws.world_dir(WorldKind::Main).join("graph.jsonl")))?;
    let data = Data::load(ws, WorldKind::Main)?;

    let seeds = cfg.seed_list();
    let base = cfg.seed;
    let mut ctx = Ctx {
        ws,
        data: &data,
        events,
        runs: BTreeMap::new(),
        timings: Timings::default(),
    };
    let mut pretrain_acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut theta_unchanged = true;
    let mut base_models = None;

    for &seed in &seeds {
        for mode in Mode::ALL {
            let t0 = Instant::now();
            let (pre, trace) = pretrain_with(ws, &data, Head::TaskConditional, mode, seed, &mut ctx.events)?;
            pretrain_acc
                .entry(format!("task_conditional_{mode}"))
                .or_default()
                .push(trace.last().map_or(0.0, |l| l.score));
            let (model, unchanged) = transfer_with(ws, &data, pre.clone(), seed, &mut ctx.events)?;
            theta_unchanged &= unchanged;
            let name = crate::commands::transfer_name(Head::TaskConditional, mode, seed);
            let epochs = trace_len(ws, &name)?;
            ctx.score(&format!("mode_{mode}"), &name, &model, epochs, t0)?;
            if mode == cfg.mode && seed == base {
                base_models = Some((pre, model));
            }
        }

        let t0 = Instant::now();
        let model = baseline_with(ws, &data, Baseline::Separable, cfg.mode, seed, &mut ctx.events)?;
        let sep_pre =
            ws.load_record(&ws.model_stem(&crate::commands::pretrained_name(Head::Separable, cfg.mode, seed)))?;
        pretrain_acc
            .entry(format!("separable_{}", cfg.mode))
            .or_default()
            .push(sep_pre.trace.last().map_or(0.0, |l| l.score));
        let name = crate::commands::baseline_name(Baseline::Separable, cfg.mode, seed);
        if let Some((before, after)) = ws.load_record(&ws.model_stem(&name))?.theta {
            theta_unchanged &= before == after;
        }
        let epochs = trace_len(ws, &name)?;
        ctx.score("separable", &name, &model, epochs, t0)?;

        for kind in [Baseline::AnswerEmbedding, Baseline::Standard] {
            let t0 = Instant::now();
            let model = baseline_with(ws, &data, kind, cfg.mode, seed, &mut ctx.events)?;
            let name = crate::commands::baseline_name(kind, cfg.mode, seed);
            let epochs = trace_len(ws, &name)?;
            let key = match kind {
                Baseline::Standard => "standard",
                _ => "answer_embedding",
            };
            ctx.score(key, &name, &model, epochs, t0)?;
        }
    }

    let (pre, proposed) = base_models.expect("the base seed is always run");
    let t0 = Instant::now();
    let retrieval = retrieve_with(
        ws,
        &data,
        &pre,
        &proposed,
        "train",
        &format!("proposed-{}-s{base}", cfg.mode),
    )?;
    ctx.timings.per_model.insert("retrieval".into(), vec![secs(t0)]);

    let t0 = Instant::now();
    let yes_no = Data::load(ws, WorldKind::YesNo)?;
    let dual_model = dual_train_with(ws, &yes_no, &pre, base, &mut ctx.events)?;
    let dual = dual_scores_with(ws, &yes_no, &dual_model, &dual_name(cfg.mode, base))?;
    ctx.timings.per_model.insert("dual".into(), vec![secs(t0)]);

    let mut runs = std::mem::take(&mut ctx.runs);
    let mut models = BTreeMap::new();
    let mut modes = BTreeMap::new();
    for mode in Mode::ALL {
        if let Some(r) = runs.remove(&format!("mode_{mode}")) {
            let s = r.summary();
            if mode == cfg.mode {
                models.insert("proposed".to_string(), s.clone());
            }
            modes.insert(mode.to_string(), s);
        }
    }
    for (k, r) in runs {
        models.insert(k, r.summary());
    }
    let (prop, sep) = (&models["proposed"], &models["separable"]);
    let attribute_gap = AttributeGap {
        attribute: prop.oov_attribute.mean - sep.oov_attribute.mean,
        object: prop.oov_object.mean - sep.oov_object.mean,
    };
    let mut timings = std::mem::take(&mut ctx.timings);
    timings.total = secs(start);
    let report = ReproReport {
        config_hash,
        data_hash: data.split.data_hash.clone(),
        seeds: seeds.clone(),
        mode: cfg.mode,
        oov_overall: prop.oov.mean,
        pretrain_accuracy: pretrain_acc.iter().map(|(k, v)| (k.clone(), summarize(v))).collect(),
        models,
        modes,
        attribute_gap,
        theta_unchanged,
        retrieval: retrieval.purity,
        dual,
        timings,
    };
    write_json(&ws.root.join("report.json"), &report)?;
    ctx.events.emit(&Event::Done { command: "repro" })?;
    ws.write_meta("repro", &[], serde_json::json!({"oov_overall": report.oov_overall}))?;
    Ok(report)
}
