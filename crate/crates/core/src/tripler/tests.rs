use std::collections::BTreeSet;

use super::*;
use crate::kgstore::{KnowledgeGraph, Triple, TripleIdx, TwoHopPaths};
use crate::numkit::{finite_diff_check, Graph, ParamStore, Rng, Tensor, DEFAULT_FD_EPS};
use crate::synth::toy_chain_kg;
use crate::Error;

fn cfg(d0: usize, df: usize, heads: usize, layers: usize, mode: SpaceMode) -> TriplerConfig {
    TriplerConfig {
        init_dim: d0,
        final_dim: df,
        heads,
        layers,
        mode,
        ..TriplerConfig::default()
    }
}

fn build(kg: &KnowledgeGraph, c: TriplerConfig, seed: u64) -> (TripleModel, ParamStore, Neighborhoods) {
    let mut p = ParamStore::new();
    let m = TripleModel::init(&mut p, kg.num_entities(), kg.num_relations(), c, &mut Rng::new(seed)).unwrap();
    let nb = Neighborhoods::build(kg, c.two_hop).unwrap();
    (m, p, nb)
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|i| w.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn random_kg(entities: usize, relations: usize, triples: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = Rng::new(seed);
    let mut kg = KnowledgeGraph::new();
    for e in 0..entities {
        kg.add_entity(&format!("e{e}"));
    }
    for r in 0..relations {
        kg.add_relation(&format!("r{r}"));
    }
    while kg.len() < triples {
        let (h, t) = (rng.index(entities), rng.index(entities));
        if h != t {
            kg.add_triple(&Triple::new(format!("e{h}"), format!("r{}", rng.index(relations)), format!("e{t}")))
                .unwrap();
        }
    }
    kg
}

#[test]
fn triple_vector_identity_and_zero() {
    let kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b")]).unwrap();
    let (m, mut p, _) = build(&kg, cfg(1, 3, 1, 1, SpaceMode::Same), 0);
    p.insert("tripler.gat.0.0.w", Tensor::identity(3));
    assert_eq!(m.triple_vector(&p, &[1.0], &[2.0], &[3.0], 0, 0).unwrap(), [1.0, 2.0, 3.0]);
    p.insert("tripler.gat.0.0.w", Tensor::zeros(&[3, 3]));
    assert_eq!(m.triple_vector(&p, &[1.0], &[2.0], &[3.0], 0, 0).unwrap(), [0.0; 3]);
    assert!(m.triple_vector(&p, &[1.0, 2.0], &[2.0], &[3.0], 0, 0).is_err());
}

#[test]
fn triple_vector_matches_direct_product() {
    let kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b")]).unwrap();
    let (m, p, _) = build(&kg, cfg(2, 4, 2, 1, SpaceMode::Same), 13);
    let mut rng = Rng::new(13);
    let x: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let got = m.triple_vector(&p, &x[0..2], &x[2..4], &x[4..6], 0, 1).unwrap();
    let w = p.get("tripler.gat.0.1.w").unwrap();
    for (i, g) in got.iter().enumerate() {
        let want: f64 = (0..6).map(|j| w.get(i, j) * x[j]).sum();
        assert!((g - want).abs() < 1e-12);
    }
}

#[test]
fn singleton_and_symmetric_attention() {
    let kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b")]).unwrap();
    let (m, p, nb) = build(&kg, cfg(3, 4, 2, 1, SpaceMode::Separate), 1);
    assert_eq!(m.attention_weights(&p, &nb, 0, 0, 0).unwrap(), [1.0]);

    // two triples a->b, a->c whose endpoints share an embedding
    let kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b"), Triple::new("a", "r", "c")]).unwrap();
    let (m, mut p, nb) = build(&kg, cfg(3, 4, 2, 1, SpaceMode::Separate), 1);
    let ent = p.get_mut("tripler.ent").unwrap();
    let row = ent.row(1).to_vec();
    ent.row_mut(2).copy_from_slice(&row);
    let a = m.attention_weights(&p, &nb, 0, 0, 1).unwrap();
    assert!((a[0] - 0.5).abs() < 1e-15 && (a[1] - 0.5).abs() < 1e-15);
}

#[test]
fn isolated_entity_gets_self_loop() {
    let mut kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b")]).unwrap();
    kg.add_entity("lonely");
    let nb = Neighborhoods::build(&kg, Some(TwoHopPaths::Outgoing)).unwrap();
    let n = nb.get(2).unwrap();
    assert_eq!((n.len(), n[0].head, n[0].tail, n[0].relations.clone()), (1, 2, 2, vec![1]));
    let raw = Neighborhoods::from_lists(vec![vec![]]);
    assert!(matches!(raw.get(0), Err(Error::IsolatedEntity(_))));
}

#[test]
fn four_triple_attention_matches_step_by_step() {
    // entity 0 has 3 incident triples and one hop-2 path
    let kg = KnowledgeGraph::from_triples([
        Triple::new("e0", "r0", "e1"),
        Triple::new("e2", "r1", "e0"),
        Triple::new("e0", "r1", "e3"),
        Triple::new("e1", "r0", "e4"),
    ])
    .unwrap();
    let (m, p, nb) = build(&kg, cfg(3, 4, 2, 1, SpaceMode::Same), 5);
    let hood = nb.get(0).unwrap();
    assert_eq!(hood.len(), 4);
    let ent = p.get("tripler.ent").unwrap();
    let rel = p.get("tripler.rel").unwrap();
    for head in 0..2 {
        let w = p.get(&format!("tripler.gat.0.{head}.w")).unwrap();
        let a = p.get(&format!("tripler.gat.0.{head}.a")).unwrap();
        let mut b = Vec::new();
        for n in hood {
            let r: Vec<f64> = (0..3).map(|k| n.relations.iter().map(|&r| rel.get(r, k)).sum()).collect();
            let x = [ent.row(n.head), ent.row(n.tail), &r].concat();
            let tau = matvec(w, &x);
            let s: f64 = tau.iter().zip(a.row(0)).map(|(t, w2)| t * w2).sum();
            b.push(if s >= 0.0 { s } else { 0.2 * s });
        }
        let z: f64 = b.iter().map(|v| v.exp()).sum();
        let got = m.attention_weights(&p, &nb, 0, 0, head).unwrap();
        for (g, bi) in got.iter().zip(&b) {
            assert!((g - bi.exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_sums_to_one_everywhere() {
    let kg = random_kg(12, 3, 25, 2);
    let (m, p, nb) = build(&kg, cfg(4, 6, 3, 2, SpaceMode::Separate), 2);
    let all = m.all_attention(&p, &nb).unwrap();
    assert_eq!(all.len(), 12 * 3 * 2);
    for (_, a) in all {
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn degenerate_single_entity_graph() {
    let mut kg = KnowledgeGraph::new();
    kg.add_entity("solo");
    let (m, mut p, nb) = build(&kg, cfg(1, 1, 1, 1, SpaceMode::Same), 0);
    p.insert("tripler.ent", Tensor::matrix(1, 1, vec![0.3]));
    p.insert("tripler.rel", Tensor::matrix(1, 1, vec![0.2]));
    p.insert("tripler.gat.0.0.w", Tensor::matrix(1, 3, vec![1.0, 1.0, 1.0]));
    p.insert("tripler.gat.0.0.a", Tensor::matrix(1, 1, vec![1.0]));
    p.insert("tripler.w_e", Tensor::matrix(1, 1, vec![1.0]));
    let emb = m.forward_embeddings(&p, &nb).unwrap();
    // τ = e + e + r_self, α = 1
    let tau: f64 = 0.3 + 0.3 + 0.2;
    assert!((emb.entities.get(0, 0) - (tau + 0.3)).abs() < 1e-15);
    assert_eq!(emb.relations.rows(), 0);
}

#[test]
fn zero_attention_leaves_only_residual() {
    let kg = random_kg(6, 2, 8, 4);
    let (m, mut p, nb) = build(&kg, cfg(3, 4, 2, 2, SpaceMode::Same), 4);
    let names: Vec<String> = p.iter().map(|(_, n, _)| n.to_string()).filter(|n| n.ends_with(".w")).collect();
    for n in names {
        p.get_mut(&n).unwrap().data_mut().fill(0.0);
    }
    let emb = m.forward_embeddings(&p, &nb).unwrap();
    let w_e = p.get("tripler.w_e").unwrap();
    for e in 0..6 {
        let want = matvec(w_e, p.get("tripler.ent").unwrap().row(e));
        assert_eq!(emb.entities.row(e), want.as_slice());
    }
}

#[test]
fn one_layer_forward_matches_loops() {
    let kg = random_kg(5, 2, 7, 11);
    let (m, p, nb) = build(&kg, cfg(3, 4, 1, 1, SpaceMode::Same), 11);
    let emb = m.forward_embeddings(&p, &nb).unwrap();
    let ent = p.get("tripler.ent").unwrap();
    let rel = p.get("tripler.rel").unwrap();
    let w = p.get("tripler.gat.0.0.w").unwrap();
    let a = p.get("tripler.gat.0.0.a").unwrap();
    let w_e = p.get("tripler.w_e").unwrap();
    for e in 0..5 {
        let mut taus = Vec::new();
        let mut b = Vec::new();
        for n in nb.get(e).unwrap() {
            let mut r = vec![0.0; 3];
            for &ri in &n.relations {
                for k in 0..3 {
                    r[k] += rel.get(ri, k);
                }
            }
            let mut x = ent.row(n.head).to_vec();
            x.extend_from_slice(ent.row(n.tail));
            x.extend_from_slice(&r);
            let tau = matvec(w, &x);
            let s: f64 = (0..4).map(|k| a.get(0, k) * tau[k]).sum();
            b.push(if s > 0.0 { s } else { 0.2 * s });
            taus.push(tau);
        }
        let mx = b.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = b.iter().map(|v| (v - mx).exp()).sum();
        let res = matvec(w_e, ent.row(e));
        for k in 0..4 {
            let mut s = 0.0;
            for (tau, bi) in taus.iter().zip(&b) {
                s += (bi - mx).exp() / z * tau[k];
            }
            let elu = if s > 0.0 { s } else { s.exp() - 1.0 };
            assert!((emb.entities.get(e, k) - (elu + res[k])).abs() < 1e-10);
        }
    }
}

#[test]
fn relation_space_projection() {
    let kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b")]).unwrap();
    let (m, mut p, _) = build(&kg, cfg(2, 3, 1, 1, SpaceMode::Separate), 3);
    let mut rng = Rng::new(3);
    let e: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let w = p.get("tripler.rel_tf.0").unwrap().clone();
    let want: Vec<f64> = matvec(&w, &e).into_iter().map(f64::tanh).collect();
    let got = m.to_relation_space(&p, &e, 0).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
    p.insert("tripler.rel_tf.0", Tensor::identity(3));
    let small = [0.01, -0.02, 0.005];
    assert_eq!(m.to_relation_space(&p, &small, 0).unwrap(), small.map(f64::tanh));
    p.insert("tripler.rel_tf.0", Tensor::zeros(&[3, 3]));
    assert_eq!(m.to_relation_space(&p, &e, 0).unwrap(), [0.0; 3]);

    let (same, sp, _) = build(&kg, cfg(2, 3, 1, 1, SpaceMode::Same), 3);
    let err = same.to_relation_space(&sp, &e, 0).unwrap_err();
    assert!(err.to_string().contains("no per-relation transform"));
}

#[test]
fn distance_examples() {
    let kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b"), Triple::new("b", "s", "c")]).unwrap();
    let (m, p, _) = build(&kg, cfg(2, 2, 1, 1, SpaceMode::Same), 0);
    let emb = EmbeddingSet {
        entities: Tensor::matrix(3, 2, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]),
        relations: Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, -2.0]),
    };
    let t = |h, r, t| TripleIdx { head: h, relation: r, tail: t };
    assert_eq!(m.triple_distance(&p, &emb, t(0, 0, 1)).unwrap(), 0.0);
    assert_eq!(m.triple_distance(&p, &emb, t(2, 1, 2)).unwrap(), 3.0);
    assert!(m.triple_distance(&p, &emb, t(0, 5, 1)).is_err());
    assert!(m.triple_distance(&p, &emb, t(9, 0, 1)).is_err());

    let mut rng = Rng::new(21);
    let v: Vec<f64> = (0..12).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let want: f64 = (0..4).map(|k| (v[k] + v[4 + k] - v[8 + k]).abs()).sum();
    assert_eq!(translation_distance(&v[0..4], &v[4..8], &v[8..12]), want);
}

#[test]
fn margin_loss_examples() {
    assert_eq!(margin_loss(&[0.0], &[2.0], 1.0).unwrap(), 0.0);
    assert_eq!(margin_loss(&[1.0], &[1.0], 1.0).unwrap(), 1.0);
    assert!(margin_loss(&[1.0], &[1.0], -0.5).is_err());
    let mut rng = Rng::new(10);
    let pos: Vec<f64> = (0..10).map(|_| rng.uniform(0.0, 3.0)).collect();
    let neg: Vec<f64> = (0..10).map(|_| rng.uniform(0.0, 3.0)).collect();
    let mut want = 0.0;
    for i in 0..10 {
        let h = 1.0 + pos[i] - neg[i];
        if h > 0.0 {
            want += h;
        }
    }
    assert!((margin_loss(&pos, &neg, 1.0).unwrap() - want).abs() < 1e-12);
}

#[test]
fn exact_fit_gives_zero_loss() {
    let kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b"), Triple::new("a", "s", "c")]).unwrap();
    let (m, p, _) = build(&kg, cfg(2, 2, 1, 1, SpaceMode::Same), 0);
    // a + r = b exactly, a + s = c exactly; swapped relations are ≥ 1 away
    let emb = EmbeddingSet {
        entities: Tensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
        relations: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
    };
    let t = |h, r, t| TripleIdx { head: h, relation: r, tail: t };
    let pos = [t(0, 0, 1), t(0, 1, 2)].map(|x| m.triple_distance(&p, &emb, x).unwrap());
    let neg = [t(0, 1, 1), t(0, 0, 2)].map(|x| m.triple_distance(&p, &emb, x).unwrap());
    assert_eq!(margin_loss(&pos, &neg, 1.0).unwrap(), 0.0);
}

fn train_cfg(lr: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_entities: 2,
        epochs,
        learning_rate: lr,
        negatives: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_is_identity() {
    let kg = toy_chain_kg();
    let (m, mut p, nb) = build(&kg, cfg(4, 4, 2, 2, SpaceMode::Separate), 1);
    let before = p.clone();
    let rep = train_batchwise(&m, &mut p, &kg, &nb, &train_cfg(1e-2, 0), &mut Rng::new(1)).unwrap();
    assert!(rep.epoch_losses.is_empty());
    assert_eq!(p, before);
}

#[test]
fn chain_training_converges_and_is_deterministic() {
    let kg = toy_chain_kg();
    let run = || {
        let (m, mut p, nb) = build(&kg, cfg(8, 8, 2, 2, SpaceMode::Separate), 1);
        let rep = train_batchwise(&m, &mut p, &kg, &nb, &train_cfg(1e-2, 300), &mut Rng::new(1)).unwrap();
        (rep, p)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    let first = a.epoch_losses[0];
    let last = *a.epoch_losses.last().unwrap();
    assert!(last < 0.2 * first, "{first} -> {last}");
    assert!(a.epoch_losses.iter().all(|l| *l >= 0.0));
}

#[test]
fn batch_larger_than_graph_is_rejected() {
    let kg = toy_chain_kg();
    let (m, mut p, nb) = build(&kg, cfg(4, 4, 2, 1, SpaceMode::Same), 1);
    let c = TrainConfig {
        batch_entities: 5,
        ..train_cfg(1e-2, 1)
    };
    assert!(train_batchwise(&m, &mut p, &kg, &nb, &c, &mut Rng::new(1)).is_err());
}

#[test]
fn divergence_is_reported() {
    let kg = toy_chain_kg();
    let (m, mut p, nb) = build(&kg, cfg(4, 4, 2, 1, SpaceMode::Same), 1);
    p.get_mut("tripler.w_r").unwrap().data_mut()[0] = f64::NAN;
    let err = train_batchwise(&m, &mut p, &kg, &nb, &train_cfg(1e-2, 3), &mut Rng::new(1)).unwrap_err();
    assert!(matches!(err, Error::Diverged { epoch: 0, .. }));
}

#[test]
fn only_batch_entities_move() {
    let kg = toy_chain_kg();
    let (m, mut p, nb) = build(&kg, cfg(4, 4, 2, 2, SpaceMode::Separate), 1);
    let before = p.get("tripler.ent").unwrap().clone();
    let groups = vec![(kg.triples()[0], vec![TripleIdx { relation: 1, ..kg.triples()[0] }])];
    let mut grads = {
        let mut g = Graph::new(&p);
        let l = m.loss(&mut g, &nb, &groups).unwrap().unwrap();
        g.backward(l).unwrap()
    };
    grads.retain_rows(m.entity_param(), &BTreeSet::from([0]));
    crate::numkit::Adam::new(0.1).step(&mut p, &grads);
    let after = p.get("tripler.ent").unwrap();
    assert_ne!(after.row(0), before.row(0));
    for e in 1..4 {
        assert_eq!(after.row(e), before.row(e));
    }
}

#[test]
fn ranking_examples() {
    let kg = KnowledgeGraph::from_triples([Triple::new("a", "r", "b")]).unwrap();
    let (m, p, nb) = build(&kg, cfg(3, 4, 2, 1, SpaceMode::Separate), 2);
    let emb = m.forward_embeddings(&p, &nb).unwrap();
    assert_eq!(rank_relations(&m, &p, &emb, 0, 1, 0, None).unwrap().rank, 1);

    let kg = KnowledgeGraph::from_triples([
        Triple::new("a", "r0", "b"),
        Triple::new("a", "r1", "c"),
        Triple::new("a", "r2", "c"),
    ])
    .unwrap();
    let (m, p, _) = build(&kg, cfg(2, 2, 1, 1, SpaceMode::Same), 0);
    let emb = EmbeddingSet {
        entities: Tensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
        relations: Tensor::matrix(3, 2, vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0]),
    };
    let r = rank_relations(&m, &p, &emb, 0, 1, 1, None).unwrap();
    assert_eq!((r.rank, r.scores[1]), (1, 0.0));
    // r2 ties r1 exactly: lower index wins
    assert_eq!(rank_relations(&m, &p, &emb, 0, 1, 2, None).unwrap().rank, 2);
    assert_eq!(rank_relations(&m, &p, &emb, 0, 1, 2, Some(&kg)).unwrap().rank, 2);
    // for (a, c): r0 scores 0, r1 and r2 both 2; filtering drops r1
    assert_eq!(rank_relations(&m, &p, &emb, 0, 2, 2, None).unwrap().rank, 3);
    assert_eq!(rank_relations(&m, &p, &emb, 0, 2, 2, Some(&kg)).unwrap().rank, 2);
    assert!(rank_relations(&m, &p, &emb, 0, 2, 3, None).is_err());
}

#[test]
fn trained_ranks_match_sort_oracle() {
    let kg = toy_chain_kg();
    let (m, mut p, nb) = build(&kg, cfg(8, 8, 2, 2, SpaceMode::Separate), 1);
    train_batchwise(&m, &mut p, &kg, &nb, &train_cfg(1e-2, 300), &mut Rng::new(1)).unwrap();
    let emb = m.forward_embeddings(&p, &nb).unwrap();
    let ranks = rank_triples(&m, &p, &emb, &kg, false).unwrap();
    for (r, t) in ranks.iter().zip(kg.triples()) {
        let mut order: Vec<(f64, usize)> = (0..kg.num_relations())
            .map(|c| (m.triple_distance(&p, &emb, TripleIdx { relation: c, ..*t }).unwrap(), c))
            .collect();
        order.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = order.iter().position(|(_, c)| *c == t.relation).unwrap() + 1;
        assert_eq!(r.rank, pos);
    }
}

#[test]
fn margin_loss_gradients_on_four_entities() {
    let kg = KnowledgeGraph::from_triples([
        Triple::new("e0", "r0", "e1"),
        Triple::new("e1", "r1", "e2"),
        Triple::new("e2", "r0", "e3"),
        Triple::new("e3", "r1", "e0"),
    ])
    .unwrap();
    for mode in [SpaceMode::Same, SpaceMode::Separate] {
        let (m, p, nb) = build(&kg, cfg(3, 4, 2, 2, mode), 7);
        let groups: Vec<_> = kg
            .triples()
            .iter()
            .map(|&t| (t, crate::kgstore::negative_candidates(&kg, t, crate::kgstore::CorruptionMode::Relation)))
            .collect();
        let eval = |q: &ParamStore| {
            let mut g = Graph::new(q);
            let l = m.loss(&mut g, &nb, &groups).unwrap().unwrap();
            (g.scalar(l), g.backward(l).unwrap())
        };
        let (loss, grads) = eval(&p);
        assert!(loss > 0.0);
        let reports = finite_diff_check(&p, &grads, DEFAULT_FD_EPS, |q| Ok(eval(q).0)).unwrap();
        for r in &reports {
            assert!(r.passes(1e-4), "{mode:?} {r:?}");
        }
    }
}

#[test]
fn config_validation() {
    let bad = TriplerConfig {
        final_dim: 5,
        heads: 2,
        ..TriplerConfig::default()
    };
    assert!(bad.validate().is_err());
    assert!("same".parse::<SpaceMode>().is_ok() && "both".parse::<SpaceMode>().is_err());
}

#[test]
fn lemma_one_and_two_collapse_in_same_space() {
    let c = ProbeConfig::default();
    for lemma in [1, 2] {
        let same = expressiveness_probe(lemma, SpaceMode::Same, &c).unwrap();
        assert!(same.fit_loss < 1e-3, "{same:?}");
        assert!(same.collapse_metric < 0.05, "{same:?}");
        let sep = expressiveness_probe(lemma, SpaceMode::Separate, &c).unwrap();
        assert!(sep.final_loss < same.final_loss, "{sep:?} vs {same:?}");
    }
    // relations held one unit apart: only separate space can still fit
    let sep = expressiveness_probe(1, SpaceMode::Separate, &c).unwrap();
    assert!(sep.pinned_loss < 1e-3, "{sep:?}");
    let same = expressiveness_probe(1, SpaceMode::Same, &c).unwrap();
    assert!(same.pinned_loss > 0.5, "{same:?}");
    assert!(expressiveness_probe(5, SpaceMode::Same, &c).is_err());
}
