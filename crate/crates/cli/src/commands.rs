//! One function per subcommand. Each returns the fields of its summary line.

use std::fs;
use std::path::{Path, PathBuf};

use kgctx::aggregator::{
    accuracy, label_order, predict, prediction_records, train_recon as fit_recon, ReconConfig, ReconModel, ReconTrainConfig,
    TripleContext, Variant,
};
use kgctx::checkpoint::Checkpoint;
use kgctx::diagnostics::{gradcheck, GradTarget, GRADCHECK_TOLERANCE};
use kgctx::eac::load_word_vectors;
use kgctx::evalstats::{
    build_contingency, evaluate, format_mcnemar_table, format_pr_csv, load_predictions, mcnemar, pr_curve,
    ranking_metrics, save_predictions, PredictionRecord,
};
use kgctx::kgstore::{load_attributes, load_sentences, load_triples, AttributeStore};
use kgctx::numkit::{ParamStore, Rng};
use kgctx::tripler::{
    expressiveness_probe, rank_relations, train_batchwise, ProbeConfig, SpaceMode, TrainConfig, TripleModel,
    TriplerConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bundle::{self, load_bundle, Bundle};
use crate::config::RunConfig;
use crate::failure::{CmdResult, Context, Failure};
use crate::scaling::{format_scaling_csv, run_scaling, ScalingConfig};

pub const TRIPLER_KIND: &str = "tripler";
pub const RECON_KIND: &str = "recon";
pub const TRIPLER_CHECKPOINT: &str = "tripler.ckpt.json";
pub const RECON_CHECKPOINT: &str = "recon.ckpt.json";

/// Configuration stored inside a triple-model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriplerSnapshot {
    pub seed: u64,
    pub model: TriplerConfig,
    pub train: TrainConfig,
}

/// Configuration stored inside an extraction-model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconSnapshot {
    pub seed: u64,
    pub model: ReconConfig,
    pub train: ReconTrainConfig,
    /// Digest of the triple checkpoint the model was trained against.
    pub tripler_digest: Option<String>,
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("summaries are objects"),
    }
}

fn out_dir(cfg: &RunConfig) -> CmdResult<&Path> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Failure::data(format!("{}: {e}", cfg.output_dir.display())))?;
    Ok(&cfg.output_dir)
}

fn write(path: &Path, content: &str) -> CmdResult<()> {
    fs::write(path, content).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    s
}

fn attributes(cfg: &RunConfig) -> CmdResult<AttributeStore> {
    match &cfg.data.attributes {
        Some(p) => load_attributes(p).ctx("reading attributes"),
        None => Ok(AttributeStore::new()),
    }
}

pub fn prepare(cfg: &RunConfig) -> CmdResult<Map<String, Value>> {
    let (m, warnings) = bundle::prepare(cfg)?;
    Ok(object(json!({
        "bundle": bundle::bundle_dir(cfg).display().to_string(),
        "entities": m.entities,
        "relations": m.relations,
        "triples": m.triples,
        "sentences": m.sentences,
        "words": m.words,
        "chars": m.chars,
        "warnings": warnings,
    })))
}

pub fn train_tripler(cfg: &RunConfig) -> CmdResult<Map<String, Value>> {
    let b = load_bundle(cfg)?;
    if b.kg.is_empty() {
        return Err(Failure::data("the prepared graph has no triples"));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut params = ParamStore::new();
    let model = TripleModel::init(&mut params, b.kg.num_entities(), b.kg.num_relations(), cfg.tripler, &mut rng)
        .ctx("initializing the triple model")?;
    let report = train_batchwise(&model, &mut params, &b.kg, &b.neighborhoods, &cfg.tripler_train, &mut rng)
        .ctx("training the triple model")?;
    let snapshot = TriplerSnapshot {
        seed: cfg.seed,
        model: cfg.tripler,
        train: cfg.tripler_train,
    };
    let ckpt = Checkpoint::new(TRIPLER_KIND, &snapshot, params)?
        .with_index("entities", b.kg.entities())
        .with_index("relations", b.kg.relations());
    let dir = out_dir(cfg)?;
    let path = dir.join(TRIPLER_CHECKPOINT);
    ckpt.save(&path)?;
    let csv = dir.join("tripler_loss.csv");
    write(&csv, &loss_csv(&report.epoch_losses))?;
    Ok(object(json!({
        "checkpoint": path.display().to_string(),
        "digest": ckpt.digest(),
        "loss_csv": csv.display().to_string(),
        "epochs": report.epoch_losses.len(),
        "initial_loss": report.epoch_losses.first(),
        "final_loss": report.epoch_losses.last(),
    })))
}

struct LoadedTripler {
    model: TripleModel,
    params: ParamStore,
    entities: Vec<String>,
    digest: String,
}

fn load_tripler(path: &Path) -> CmdResult<LoadedTripler> {
    let what = format!("loading {}", path.display());
    let ckpt = Checkpoint::load(path).ctx(what.clone())?;
    ckpt.expect_kind(TRIPLER_KIND).ctx(what.clone())?;
    let snap: TriplerSnapshot = ckpt.config_as().ctx(what.clone())?;
    let entities = ckpt.index("entities").ctx(what.clone())?.to_vec();
    let relations = ckpt.index("relations").ctx(what.clone())?.len();
    let model = TripleModel::bind(&ckpt.params, entities.len(), relations, snap.model).ctx(what)?;
    Ok(LoadedTripler {
        model,
        digest: ckpt.digest(),
        params: ckpt.params,
        entities,
    })
}

fn triple_context(path: &Path, b: &Bundle) -> CmdResult<(TripleContext, String)> {
    let t = load_tripler(path)?;
    if t.entities != b.kg.entities() {
        return Err(Failure::data(format!(
            "{} was trained on a different graph than the prepared bundle",
            path.display()
        )));
    }
    let ctx = TripleContext::new(t.model, t.params, &b.neighborhoods, &t.entities).ctx("precomputing triple embeddings")?;
    Ok((ctx, t.digest))
}

/// Fills the classifier's triple-slot sizes from the attached model.
fn fit_to_context(rc: &mut ReconConfig, ctx: &TripleContext) -> CmdResult<()> {
    if Some(ctx.mode()) != rc.variant.triple_mode() {
        return Err(Failure::usage(format!(
            "variant {} needs a {:?}-space triple model, the checkpoint is {:?}",
            rc.variant,
            rc.variant.triple_mode(),
            ctx.mode()
        )));
    }
    rc.triple_dim = ctx.feature_dim(rc.entity_feature);
    if rc.variant == Variant::EacKggatSeparate {
        rc.kg_relations = ctx.model.num_relations();
    }
    Ok(())
}

pub fn train_recon(cfg: &RunConfig, variant: Option<Variant>, tripler: Option<PathBuf>) -> CmdResult<Map<String, Value>> {
    let b = load_bundle(cfg)?;
    let train_path = cfg.require(&cfg.data.train_sentences, "train_sentences")?;
    let train = load_sentences(train_path).ctx("reading training sentences")?;
    let attrs = attributes(cfg)?;
    let mut rc = cfg.recon;
    if let Some(v) = variant {
        rc.variant = v;
    }
    let (ctx, tripler_digest) = if rc.variant.triple_mode().is_some() {
        let path = tripler.unwrap_or_else(|| cfg.output_dir.join(TRIPLER_CHECKPOINT));
        let (ctx, digest) = triple_context(&path, &b)?;
        fit_to_context(&mut rc, &ctx)?;
        (Some(ctx), Some(digest))
    } else {
        (None, None)
    };
    rc.validate().map_err(|e| Failure::usage(format!("[recon] {e}")))?;
    let table = b.token_table(rc.word_dim, rc.char_dim);
    let labels = label_order(train.iter().flat_map(|s| s.pairs.iter().map(|p| p.relation.as_str())));
    let mut rng = Rng::new(cfg.seed);
    let mut params = ParamStore::new();
    if let Some(p) = &cfg.data.word_vectors {
        let wv = load_word_vectors(p).ctx("reading word vectors")?;
        table.init_params(&mut params, &mut rng, Some(&wv)).ctx("initializing token embeddings")?;
    }
    let model = ReconModel::init(&mut params, table.clone(), labels.clone(), rc, &mut rng).ctx("initializing the model")?;
    let report = fit_recon(&model, &mut params, &train, &attrs, ctx.as_ref(), &cfg.recon_train, &mut rng)
        .ctx("training the extraction model")?;
    let preds = predict(&model, &params, &train, &attrs, ctx.as_ref()).ctx("scoring the training set")?;
    let train_accuracy = accuracy(&prediction_records(&model, &train, &preds));
    let snapshot = ReconSnapshot {
        seed: cfg.seed,
        model: rc,
        train: cfg.recon_train,
        tripler_digest,
    };
    let chars: Vec<String> = table.chars().iter().map(char::to_string).collect();
    let ckpt = Checkpoint::new(RECON_KIND, &snapshot, params)?
        .with_index("labels", &labels)
        .with_index("words", table.words())
        .with_index("chars", &chars);
    let dir = out_dir(cfg)?;
    let path = dir.join(RECON_CHECKPOINT);
    ckpt.save(&path)?;
    let csv = dir.join("recon_loss.csv");
    write(&csv, &loss_csv(&report.epoch_losses))?;
    Ok(object(json!({
        "variant": rc.variant.name(),
        "checkpoint": path.display().to_string(),
        "digest": ckpt.digest(),
        "loss_csv": csv.display().to_string(),
        "labels": labels,
        "final_loss": report.epoch_losses.last(),
        "train_accuracy": train_accuracy,
    })))
}

fn eval_records(records: &[PredictionRecord], cfg: &RunConfig, extra: Map<String, Value>) -> CmdResult<Map<String, Value>> {
    let report = evaluate(records).ctx("evaluating predictions")?;
    let dir = out_dir(cfg)?;
    let path = dir.join("eval.json");
    write(&path, &(serde_json::to_string_pretty(&report).expect("serializable") + "\n"))?;
    let mut m = object(json!({
        "report": path.display().to_string(),
        "samples": report.samples,
        "micro_f1": report.micro.f1,
        "micro_precision": report.micro.precision,
        "micro_recall": report.micro.recall,
        "macro_f1": report.macro_avg.f1,
        "p_at_10": report.p_at_10,
        "p_at_30": report.p_at_30,
    }));
    m.extend(extra);
    Ok(m)
}

pub fn eval(
    cfg: &RunConfig,
    predictions: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    sentences: Option<PathBuf>,
    tripler: Option<PathBuf>,
) -> CmdResult<Map<String, Value>> {
    if let Some(p) = predictions {
        let records = load_predictions(&p).ctx("reading predictions")?;
        return eval_records(&records, cfg, Map::new());
    }
    let ckpt_path = checkpoint.unwrap_or_else(|| cfg.output_dir.join(RECON_CHECKPOINT));
    let what = format!("loading {}", ckpt_path.display());
    let ckpt = Checkpoint::load(&ckpt_path).ctx(what.clone())?;
    ckpt.expect_kind(RECON_KIND).ctx(what.clone())?;
    let snap: ReconSnapshot = ckpt.config_as().ctx(what.clone())?;
    let labels = ckpt.index("labels").ctx(what.clone())?.to_vec();
    let words = ckpt.index("words").ctx(what.clone())?.to_vec();
    let chars = ckpt
        .index("chars")
        .ctx(what.clone())?
        .iter()
        .map(|c| {
            let mut it = c.chars();
            match (it.next(), it.next()) {
                (Some(ch), None) => Ok(ch),
                _ => Err(Failure::data(format!("{what}: bad character entry {c:?}"))),
            }
        })
        .collect::<CmdResult<Vec<char>>>()?;
    let table = kgctx::eac::TokenEmbeddingTable::from_parts(words, chars, snap.model.word_dim, snap.model.char_dim);
    let model = ReconModel::bind(&ckpt.params, table, labels, snap.model).ctx(what)?;
    let ctx = match &snap.tripler_digest {
        Some(expected) => {
            let b = load_bundle(cfg)?;
            let path = tripler.unwrap_or_else(|| cfg.output_dir.join(TRIPLER_CHECKPOINT));
            let (ctx, digest) = triple_context(&path, &b)?;
            if &digest != expected {
                return Err(Failure::data(format!(
                    "{} is not the triple model this checkpoint was trained with",
                    path.display()
                )));
            }
            Some(ctx)
        }
        None => None,
    };
    let sent_path = match sentences {
        Some(p) => p,
        None => cfg.require(&cfg.data.test_sentences, "test_sentences")?.to_path_buf(),
    };
    let test = load_sentences(&sent_path).ctx("reading evaluation sentences")?;
    let attrs = attributes(cfg)?;
    let preds = predict(&model, &ckpt.params, &test, &attrs, ctx.as_ref()).ctx("predicting")?;
    let records = prediction_records(&model, &test, &preds);
    let pred_path = out_dir(cfg)?.join("predictions.jsonl");
    save_predictions(&records, &pred_path)?;
    let extra = object(json!({
        "variant": snap.model.variant.name(),
        "predictions": pred_path.display().to_string(),
    }));
    eval_records(&records, cfg, extra)
}

pub fn eval_triples(cfg: &RunConfig, checkpoint: Option<PathBuf>, triples: Option<PathBuf>, raw: bool) -> CmdResult<Map<String, Value>> {
    let b = load_bundle(cfg)?;
    let path = checkpoint.unwrap_or_else(|| cfg.output_dir.join(TRIPLER_CHECKPOINT));
    let t = load_tripler(&path)?;
    if t.entities != b.kg.entities() {
        return Err(Failure::data(format!("{} was trained on a different graph", path.display())));
    }
    let emb = t.model.forward_embeddings(&t.params, &b.neighborhoods).ctx("forward pass")?;
    let targets: Vec<(usize, usize, usize)> = match &triples {
        Some(p) => {
            let test = load_triples(p).ctx("reading evaluation triples")?;
            test.triples()
                .iter()
                .map(|&x| {
                    let n = test.to_named(x);
                    Ok((b.kg.entity(&n.head)?, b.kg.relation(&n.relation)?, b.kg.entity(&n.tail)?))
                })
                .collect::<kgctx::Result<_>>()
                .ctx("mapping evaluation triples onto the training graph")?
        }
        None => b.kg.triples().iter().map(|x| (x.head, x.relation, x.tail)).collect(),
    };
    let filter = (!raw).then_some(&b.kg);
    let ranks = targets
        .iter()
        .map(|&(h, r, tl)| rank_relations(&t.model, &t.params, &emb, h, tl, r, filter).map(|x| x.rank))
        .collect::<kgctx::Result<Vec<_>>>()
        .ctx("ranking")?;
    let m = ranking_metrics(&ranks, &[1, 3, 10]).ctx("ranking metrics")?;
    let out = out_dir(cfg)?.join("eval_triples.json");
    write(&out, &(serde_json::to_string_pretty(&m).expect("serializable") + "\n"))?;
    Ok(object(json!({
        "report": out.display().to_string(),
        "filtered": !raw,
        "count": m.count,
        "hits_at_1": m.hits_at(1),
        "hits_at_3": m.hits_at(3),
        "hits_at_10": m.hits_at(10),
        "mean_rank": m.mean_rank,
        "mrr": m.mrr,
    })))
}

fn read_gold(path: &Path) -> CmdResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

pub fn mcnemar_cmd(a: &Path, b: &Path, gold: Option<&Path>, name: &str) -> CmdResult<Map<String, Value>> {
    let ra = load_predictions(a).ctx("reading predictions A")?;
    let rb = load_predictions(b).ctx("reading predictions B")?;
    if ra.len() != rb.len() {
        return Err(Failure::data(format!("{} predictions in A but {} in B", ra.len(), rb.len())));
    }
    if let Some(i) = (0..ra.len()).find(|&i| (ra[i].sentence, &ra[i].head, &ra[i].tail) != (rb[i].sentence, &rb[i].head, &rb[i].tail)) {
        return Err(Failure::data(format!("prediction files disagree on the pair at line {}", i + 1)));
    }
    let gold: Vec<String> = match gold {
        Some(p) => read_gold(p)?,
        None => {
            if let Some(i) = (0..ra.len()).find(|&i| ra[i].gold != rb[i].gold) {
                return Err(Failure::data(format!("prediction files disagree on the gold label at line {}", i + 1)));
            }
            ra.iter().map(|r| r.gold.clone()).collect()
        }
    };
    let pa: Vec<&str> = ra.iter().map(|r| r.predicted.as_str()).collect();
    let pb: Vec<&str> = rb.iter().map(|r| r.predicted.as_str()).collect();
    let gold: Vec<&str> = gold.iter().map(String::as_str).collect();
    let c = build_contingency(&pa, &pb, &gold).ctx("building the contingency table")?;
    let r = mcnemar(&c).ctx("McNemar test")?;
    print!("{}", format_mcnemar_table(&[(name.to_string(), c, r)]));
    Ok(object(json!({
        "rr": c.rr, "rw": c.rw, "wr": c.wr, "ww": c.ww,
        "statistic": r.statistic,
        "p_value": r.p_value,
    })))
}

pub fn pr_curve_cmd(cfg: &RunConfig, predictions: &Path, output: Option<PathBuf>) -> CmdResult<Map<String, Value>> {
    let records = load_predictions(predictions).ctx("reading predictions")?;
    let pred: Vec<&str> = records.iter().map(|r| r.predicted.as_str()).collect();
    let gold: Vec<&str> = records.iter().map(|r| r.gold.as_str()).collect();
    let conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    let points = pr_curve(&pred, &gold, &conf).ctx("precision-recall curve")?;
    let path = match output {
        Some(p) => p,
        None => out_dir(cfg)?.join("pr_curve.csv"),
    };
    write(&path, &format_pr_csv(&points))?;
    Ok(object(json!({ "csv": path.display().to_string(), "points": points.len() })))
}

pub fn probe(cfg: &RunConfig, lemma: u8, mode: SpaceMode, steps: Option<usize>) -> CmdResult<Map<String, Value>> {
    let mut pc = ProbeConfig {
        seed: cfg.seed,
        ..ProbeConfig::default()
    };
    if let Some(s) = steps {
        pc.steps = s;
    }
    let report = expressiveness_probe(lemma, mode, &pc).map_err(|e| match e {
        kgctx::Error::InvalidArgument(m) => Failure::usage(m),
        other => Failure::from(other),
    })?;
    Ok(object(serde_json::to_value(report).expect("serializable")))
}

pub fn gradcheck_cmd(target: GradTarget) -> CmdResult<Map<String, Value>> {
    let reports = gradcheck(target)?;
    for r in &reports {
        let status = if r.skipped {
            "skip"
        } else if r.passes(GRADCHECK_TOLERANCE) {
            "ok"
        } else {
            "FAIL"
        };
        println!("{:<40} {:>12.3e} {:>12.4e} {:>12.4e}  {status}", r.param, r.max_rel_error, r.analytic_norm, r.numeric_norm);
    }
    let checked: Vec<_> = reports.iter().filter(|r| !r.skipped).collect();
    let worst = checked.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = checked
        .iter()
        .filter(|r| !r.passes(GRADCHECK_TOLERANCE))
        .map(|r| r.param.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(Failure::numeric(format!(
            "gradient check failed for {}: worst relative error {worst:.3e}",
            failed.join(", ")
        )));
    }
    Ok(object(json!({
        "target": target.name(),
        "checked": checked.len(),
        "skipped": reports.len() - checked.len(),
        "max_rel_error": worst,
        "tolerance": GRADCHECK_TOLERANCE,
    })))
}

pub fn bench_scaling(
    cfg: &RunConfig,
    fractions: &[f64],
    entities: usize,
    repetitions: usize,
    output: Option<PathBuf>,
) -> CmdResult<Map<String, Value>> {
    let sc = ScalingConfig {
        entities,
        repetitions,
        seed: cfg.seed,
        tripler: cfg.tripler,
        train: cfg.tripler_train,
        ..ScalingConfig::default()
    };
    let rows = run_scaling(&sc, fractions)?;
    let path = match output {
        Some(p) => p,
        None => out_dir(cfg)?.join("scaling.csv"),
    };
    write(&path, &format_scaling_csv(&rows))?;
    Ok(object(json!({ "csv": path.display().to_string(), "rows": rows })))
}
