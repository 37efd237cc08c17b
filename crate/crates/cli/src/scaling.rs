//! Epoch time of triple-model training on growing entity subsets of one
//! generated graph.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use kgctx::numkit::{ParamStore, Rng};
use kgctx::synth::scaling_kg;
use kgctx::tripler::{train_batchwise, Neighborhoods, TrainConfig, TripleModel, TriplerConfig};
use serde::Serialize;

use crate::failure::{CmdResult, Context, Failure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConfig {
    pub entities: usize,
    pub relations: usize,
    /// Outgoing triples per entity in the full graph.
    pub degree: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub tripler: TriplerConfig,
    pub train: TrainConfig,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            entities: 200,
            relations: 8,
            degree: 3,
            repetitions: 3,
            seed: 1,
            tripler: TriplerConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub fraction: f64,
    /// Entities that made it into the subgraph (isolated ones drop out).
    pub entities: usize,
    pub triples: usize,
    /// Median wall time of one training epoch.
    pub epoch_seconds: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// One row per fraction, in the order given. The subgraph for fraction `f`
/// keeps the first `⌈f·n⌉` entities and the triples among them.
pub fn run_scaling(cfg: &ScalingConfig, fractions: &[f64]) -> CmdResult<Vec<ScalingRow>> {
    if fractions.is_empty() {
        return Err(Failure::usage("no fractions given"));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Failure::usage(format!("fraction {f} is outside (0, 1]")));
    }
    if cfg.repetitions == 0 || cfg.entities < 2 {
        return Err(Failure::usage("need at least one repetition and two entities"));
    }
    let full = scaling_kg(cfg.entities, cfg.relations, cfg.degree, cfg.seed);
    let train = TrainConfig { epochs: 1, ..cfg.train };
    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let keep_n = ((fraction * cfg.entities as f64).ceil() as usize).clamp(1, cfg.entities);
        let keep: HashSet<usize> = (0..keep_n).collect();
        let kg = full.subgraph(&keep);
        let mut times = Vec::with_capacity(cfg.repetitions);
        if !kg.is_empty() {
            let nb = Neighborhoods::build(&kg, cfg.tripler.two_hop).ctx("building neighborhoods")?;
            let train = TrainConfig {
                batch_entities: train.batch_entities.min(kg.num_entities()),
                ..train
            };
            for rep in 0..cfg.repetitions {
                let mut rng = Rng::new(cfg.seed.wrapping_add(rep as u64));
                let mut params = ParamStore::new();
                let model = TripleModel::init(&mut params, kg.num_entities(), kg.num_relations(), cfg.tripler, &mut rng)
                    .ctx("initializing the triple model")?;
                let start = Instant::now();
                train_batchwise(&model, &mut params, &kg, &nb, &train, &mut rng).ctx("timed epoch")?;
                times.push(start.elapsed().as_secs_f64());
            }
        } else {
            times.push(0.0);
        }
        let row = ScalingRow {
            fraction,
            entities: kg.num_entities(),
            triples: kg.len(),
            epoch_seconds: median(times),
        };
        log::info!("fraction {fraction}: {} entities, {:.4}s/epoch", row.entities, row.epoch_seconds);
        rows.push(row);
    }
    Ok(rows)
}

pub fn format_scaling_csv(rows: &[ScalingRow]) -> String {
    let mut s = String::from("fraction,entities,triples,epoch_seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6}", r.fraction, r.entities, r.triples, r.epoch_seconds);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn rejects_bad_fractions() {
        let cfg = ScalingConfig::default();
        assert!(run_scaling(&cfg, &[0.0]).is_err());
        assert!(run_scaling(&cfg, &[1.5]).is_err());
        assert!(run_scaling(&cfg, &[]).is_err());
    }

    #[test]
    fn small_run_has_one_row_per_fraction() {
        let cfg = ScalingConfig {
            entities: 20,
            repetitions: 1,
            tripler: TriplerConfig { init_dim: 4, final_dim: 4, ..TriplerConfig::default() },
            ..ScalingConfig::default()
        };
        let rows = run_scaling(&cfg, &[0.5, 1.0]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.epoch_seconds > 0.0));
        assert_eq!(rows[1].entities, 20);
        let csv = format_scaling_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("fraction,entities,triples,epoch_seconds\n0.5,"));
    }
}
