use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use kgctx::aggregator::Variant;
use kgctx::evalstats::{format_predictions, PredictionRecord};
use kgctx::kgstore::{format_attributes, format_sentences, format_triples, NA};
use kgctx::numkit::{ParamStore, Rng};
use kgctx::synth::{attribute_dataset, toy_chain_kg, AttributeDatasetConfig};
use kgctx::tripler::{train_batchwise, Neighborhoods, TrainConfig, TripleModel, TriplerConfig};
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
    summary: Value,
}

fn kgctx(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_kgctx"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let last = stdout.lines().last().unwrap_or("").to_string();
    Run {
        code: out.status.code().unwrap_or(-1),
        summary: serde_json::from_str(&last).unwrap_or(Value::Null),
        stderr: String::from_utf8(out.stderr).unwrap(),
        stdout,
    }
}

fn ok(r: &Run) {
    assert_eq!(r.code, 0, "stderr: {}\nstdout: {}", r.stderr, r.stdout);
    assert_eq!(r.summary["status"], "ok");
}

const TOY_CONFIG: &str = r#"
seed = 1
[data]
triples = "kg.tsv"
[tripler]
init_dim = 4
final_dim = 4
heads = 2
layers = 2
[tripler_train]
epochs = 40
learning_rate = 0.01
"#;

fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("kg.tsv"), format_triples(&toy_chain_kg())).unwrap();
    fs::write(dir.path().join("run.toml"), TOY_CONFIG).unwrap();
    dir
}

fn read_dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.clone(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn prepare_counts_match_hand_counts_and_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("kg.tsv"), "a\tr\tb\nb\ts\tc\na\tr\tb\n").unwrap();
    fs::write(
        d.join("attrs.jsonl"),
        "{\"id\":\"a\",\"label\":\"Alpha Beta\",\"instance_of\":[\"city\"]}\n{\"id\":\"b\",\"label\":\"beta\"}\n",
    )
    .unwrap();
    fs::write(
        d.join("train.jsonl"),
        concat!(
            "{\"tokens\":[\"alpha\",\"met\",\"beta\"],\"mentions\":[{\"id\":\"a\",\"start\":0,\"end\":1},{\"id\":\"b\",\"start\":2,\"end\":3}],\"pairs\":[{\"head\":0,\"tail\":1,\"relation\":\"r\"}]}\n",
            "{\"tokens\":[\"Beta\",\"saw\",\"gamma\"],\"mentions\":[{\"id\":\"b\",\"start\":0,\"end\":1},{\"id\":\"c\",\"start\":2,\"end\":3}],\"pairs\":[{\"head\":0,\"tail\":1,\"relation\":\"NA\"}]}\n",
        ),
    )
    .unwrap();
    fs::write(
        d.join("run.toml"),
        "[data]\ntriples = \"kg.tsv\"\nattributes = \"attrs.jsonl\"\ntrain_sentences = \"train.jsonl\"\n",
    )
    .unwrap();
    let r = kgctx(d, &["--config", "run.toml", "prepare"]);
    ok(&r);
    // counting oracle: lowercase words of sentences and attribute literals
    let words: BTreeSet<&str> = ["alpha", "met", "beta", "saw", "gamma", "city"].into_iter().collect();
    let chars: BTreeSet<char> = words.iter().flat_map(|w| w.chars()).collect();
    assert_eq!(r.summary["words"], words.len());
    assert_eq!(r.summary["chars"], chars.len());
    assert_eq!(r.summary["entities"], 3);
    assert_eq!(r.summary["relations"], 2);
    assert_eq!(r.summary["triples"], 2);
    let bundle = d.join("out/prepared");
    assert_eq!(fs::read_to_string(bundle.join("entities.txt")).unwrap(), "a\nb\nc\n");
    let first = read_dir_bytes(&bundle);
    assert_eq!(first.len(), 6);
    ok(&kgctx(d, &["--config", "run.toml", "prepare"]));
    assert_eq!(read_dir_bytes(&bundle), first);
}

#[test]
fn prepare_empty_sentence_file_warns() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.jsonl"), "").unwrap();
    fs::write(dir.path().join("run.toml"), "[data]\ntrain_sentences = \"s.jsonl\"\n").unwrap();
    let r = kgctx(dir.path(), &["--config", "run.toml", "prepare"]);
    ok(&r);
    assert_eq!(r.summary["words"], 0);
    assert_eq!(r.summary["sentences"], 0);
    assert!(!r.summary["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn train_tripler_matches_in_process_run_and_is_reproducible() {
    let dir = toy_dir();
    let d = dir.path();
    ok(&kgctx(d, &["--config", "run.toml", "prepare"]));
    let a = kgctx(d, &["--config", "run.toml", "train-tripler"]);
    ok(&a);
    let csv = fs::read_to_string(d.join("out/tripler_loss.csv")).unwrap();
    let losses: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 40);
    assert!(losses.iter().all(|l| *l >= 0.0));

    let b = kgctx(d, &["--config", "run.toml", "train-tripler"]);
    ok(&b);
    assert_eq!(a.summary["digest"], b.summary["digest"]);

    // the same run through the library
    let kg = toy_chain_kg();
    let cfg = TriplerConfig { init_dim: 4, final_dim: 4, heads: 2, layers: 2, ..Default::default() };
    let train = TrainConfig { epochs: 40, learning_rate: 0.01, ..Default::default() };
    let mut rng = Rng::new(1);
    let mut p = ParamStore::new();
    let m = TripleModel::init(&mut p, kg.num_entities(), kg.num_relations(), cfg, &mut rng).unwrap();
    let nb = Neighborhoods::build(&kg, cfg.two_hop).unwrap();
    let rep = train_batchwise(&m, &mut p, &kg, &nb, &train, &mut rng).unwrap();
    assert_eq!(rep.epoch_losses, losses);
    assert_eq!(a.summary["final_loss"].as_f64().unwrap(), *rep.epoch_losses.last().unwrap());

    let c = kgctx(d, &["--config", "run.toml", "--seed", "2", "train-tripler"]);
    ok(&c);
    assert_ne!(a.summary["digest"], c.summary["digest"]);

    let e = kgctx(d, &["--config", "run.toml", "eval-triples"]);
    ok(&e);
    assert_eq!(e.summary["count"], 3);
    let h1 = e.summary["hits_at_1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&h1));
}

#[test]
fn training_requires_a_bundle() {
    let dir = toy_dir();
    let r = kgctx(dir.path(), &["--config", "run.toml", "train-tripler"]);
    assert_eq!(r.code, 2);
    assert!(r.summary["error"].as_str().unwrap().contains("prepare"));
}

#[test]
fn stale_bundle_is_rejected() {
    let dir = toy_dir();
    let d = dir.path();
    ok(&kgctx(d, &["--config", "run.toml", "prepare"]));
    fs::write(d.join("kg.tsv"), "x\tr\ty\n").unwrap();
    let r = kgctx(d, &["--config", "run.toml", "train-tripler"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn divergence_exits_with_numeric_code() {
    let dir = toy_dir();
    let d = dir.path();
    let cfg = TOY_CONFIG.replace("learning_rate = 0.01", "learning_rate = 1e308");
    fs::write(d.join("run.toml"), cfg).unwrap();
    ok(&kgctx(d, &["--config", "run.toml", "prepare"]));
    let r = kgctx(d, &["--config", "run.toml", "train-tripler"]);
    assert_eq!(r.code, 3, "{}", r.stdout);
}

#[test]
fn truncated_checkpoint_is_a_digest_error() {
    let dir = toy_dir();
    let d = dir.path();
    ok(&kgctx(d, &["--config", "run.toml", "prepare"]));
    ok(&kgctx(d, &["--config", "run.toml", "train-tripler"]));
    let path = d.join("out/tripler.ckpt.json");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() / 2]).unwrap();
    let r = kgctx(d, &["--config", "run.toml", "eval-triples"]);
    assert_eq!(r.code, 2);
    assert!(r.summary["error"].as_str().unwrap().contains("digest"), "{}", r.summary);
}

fn record(sentence: usize, gold: &str, predicted: &str) -> PredictionRecord {
    PredictionRecord {
        sentence,
        head: "h".into(),
        tail: "t".into(),
        gold: gold.into(),
        predicted: predicted.into(),
        confidence: 0.5,
        distribution: Default::default(),
    }
}

#[test]
fn mcnemar_reconstructs_the_second_table_row() {
    // rw = 33036 pairs only A gets right, wr = 41029 only B gets right
    let (rw, wr, rr, ww) = (33036usize, 41029usize, 500usize, 700usize);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut i = 0;
    for (n, ca, cb) in [(rr, true, true), (rw, true, false), (wr, false, true), (ww, false, false)] {
        for _ in 0..n {
            a.push(record(i, "r", if ca { "r" } else { NA }));
            b.push(record(i, "r", if cb { "r" } else { "s" }));
            i += 1;
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.jsonl"), format_predictions(&a)).unwrap();
    fs::write(d.join("b.jsonl"), format_predictions(&b)).unwrap();
    let r = kgctx(d, &["mcnemar", "--a", "a.jsonl", "--b", "b.jsonl"]);
    ok(&r);
    assert_eq!(r.summary["rw"], rw);
    assert_eq!(r.summary["wr"], wr);
    assert_eq!(r.summary["rr"], rr);
    assert_eq!(r.summary["ww"], ww);
    let stat = r.summary["statistic"].as_f64().unwrap();
    assert!((stat - 862.38).abs() < 0.01, "{stat}");
    assert!(r.stdout.contains("A vs B"));
}

#[test]
fn eval_rejects_all_na_gold() {
    let dir = tempfile::tempdir().unwrap();
    let recs = vec![record(0, NA, "r"), record(1, NA, NA)];
    fs::write(dir.path().join("p.jsonl"), format_predictions(&recs)).unwrap();
    let r = kgctx(dir.path(), &["eval", "--predictions", "p.jsonl"]);
    assert_eq!(r.code, 2);
    assert!(r.summary["error"].as_str().unwrap().contains("no non-NA gold"));
}

#[test]
fn eval_and_pr_curve_on_a_predictions_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut recs = vec![record(0, "r", "r"), record(1, "r", NA), record(2, "s", "s"), record(3, NA, "s")];
    recs[2].confidence = 0.9;
    fs::write(d.join("p.jsonl"), format_predictions(&recs)).unwrap();
    let r = kgctx(d, &["eval", "--predictions", "p.jsonl"]);
    ok(&r);
    // gold-NA pairs are dropped: tp 2, fp 0, non-NA gold 3
    let micro = r.summary["micro_f1"].as_f64().unwrap();
    let (p, rc) = (1.0, 2.0 / 3.0);
    assert!((micro - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
    assert!(d.join("out/eval.json").exists());
    let c = kgctx(d, &["pr-curve", "--predictions", "p.jsonl", "--output", "pr.csv"]);
    ok(&c);
    let csv = fs::read_to_string(d.join("pr.csv")).unwrap();
    assert!(csv.starts_with("recall,precision\n"));
    assert_eq!(csv.lines().count() - 1, c.summary["points"].as_u64().unwrap() as usize);
}

#[test]
fn gradcheck_aggregator_passes() {
    let dir = tempfile::tempdir().unwrap();
    let r = kgctx(dir.path(), &["gradcheck", "aggregator"]);
    ok(&r);
    assert!(r.summary["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert!(r.summary["checked"].as_u64().unwrap() > 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(kgctx(d, &["--frobnicate", "prepare"]).code, 1);
    assert_eq!(kgctx(d, &["gradcheck", "lstm"]).code, 1);
    assert_eq!(kgctx(d, &["bench-scaling", "--fractions", "0,1"]).code, 1);
    assert_eq!(kgctx(d, &["probe", "--lemma", "9"]).code, 1);
    fs::write(d.join("bad.toml"), "[tripler]\nfinal_dim = 5\n").unwrap();
    assert_eq!(kgctx(d, &["--config", "bad.toml", "prepare"]).code, 1);
    assert_eq!(kgctx(d, &["--config", "missing.toml", "prepare"]).code, 2);
    assert_eq!(kgctx(d, &["--help"]).code, 0);
}

#[test]
fn probe_reports_same_space_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let r = kgctx(dir.path(), &["probe", "--lemma", "1", "--mode", "same"]);
    ok(&r);
    assert!(r.summary["fit_loss"].as_f64().unwrap() < 1e-3);
    assert!(r.summary["collapse_metric"].as_f64().unwrap() < 0.05);
}

#[test]
fn bench_scaling_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "[tripler]\ninit_dim = 8\nfinal_dim = 8\n").unwrap();
    let r = kgctx(d, &["--config", "run.toml", "bench-scaling", "--entities", "40", "--repetitions", "1"]);
    ok(&r);
    let rows = r.summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|x| x["epoch_seconds"].as_f64().unwrap() > 0.0));
    let csv = fs::read_to_string(d.join("out/scaling.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let one = kgctx(d, &["--config", "run.toml", "bench-scaling", "--entities", "40", "--repetitions", "1", "--fractions", "1.0"]);
    ok(&one);
    assert_eq!(one.summary["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn extraction_pipeline_end_to_end() {
    let data = attribute_dataset(&AttributeDatasetConfig {
        sentences: 40,
        train_entities_per_type: 4,
        test_entities_per_type: 2,
        seed: 3,
        ..Default::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("kg.tsv"), format_triples(&data.kg)).unwrap();
    fs::write(d.join("attrs.jsonl"), format_attributes(&data.attributes)).unwrap();
    fs::write(d.join("train.jsonl"), format_sentences(&data.train)).unwrap();
    fs::write(d.join("test.jsonl"), format_sentences(&data.test)).unwrap();
    fs::write(
        d.join("run.toml"),
        r#"
seed = 4
[data]
triples = "kg.tsv"
attributes = "attrs.jsonl"
train_sentences = "train.jsonl"
test_sentences = "test.jsonl"
[tripler]
init_dim = 4
final_dim = 4
layers = 1
[tripler_train]
epochs = 5
learning_rate = 0.01
[recon]
word_dim = 6
char_dim = 3
pos_dim = 3
encoder_hidden = 4
state_dim = 4
classifier_hidden = 8
eac = { hidden = 4, channels = 4 }
[recon_train]
epochs = 3
learning_rate = 0.01
"#,
    )
    .unwrap();
    ok(&kgctx(d, &["--config", "run.toml", "prepare"]));
    ok(&kgctx(d, &["--config", "run.toml", "train-tripler"]));
    for v in [Variant::Plain, Variant::EacKggatSeparate] {
        let t = kgctx(d, &["--config", "run.toml", "train-recon", "--variant", v.name()]);
        ok(&t);
        assert_eq!(t.summary["variant"], v.name());
        let e = kgctx(d, &["--config", "run.toml", "eval"]);
        ok(&e);
        assert_eq!(e.summary["variant"], v.name());
        let preds = fs::read_to_string(d.join("out/predictions.jsonl")).unwrap();
        let n_pairs: usize = data.test.iter().map(|s| s.pairs.len()).sum();
        assert_eq!(preds.lines().count(), n_pairs);
        let f1 = e.summary["micro_f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
    // a kggat model refuses a different triple model
    ok(&kgctx(d, &["--config", "run.toml", "--seed", "9", "train-tripler"]));
    let r = kgctx(d, &["--config", "run.toml", "eval"]);
    assert_eq!(r.code, 2, "{}", r.stdout);
}
