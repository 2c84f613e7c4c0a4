use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::labels::LabelSplit;
use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::graph_learning::NeighborhoodSets;
use crate::model::{forward, ModelConfig, ModelParams, BRANCHES};
use crate::segmentation::{hop_neighborhoods, RegionGraph};

/// How the returned parameters are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Parameters with the highest validation accuracy among checked
    /// iterations.
    #[default]
    BestValidation,
    /// Parameters after the last update.
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub per_class_labels: usize,
    pub fallback_labels: usize,
    pub val_fraction: f64,
    pub adam: AdamConfig,
    pub selection: Selection,
    /// Validation accuracy is measured every this many iterations.
    pub val_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-4,
            seed: 0,
            per_class_labels: 30,
            fallback_labels: 15,
            val_fraction: 0.1,
            adam: AdamConfig::default(),
            selection: Selection::BestValidation,
            val_interval: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.val_interval == 0 {
            return Err(Error::Config("val_interval must be >= 1".into()));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::Config(format!("invalid Adam constants {a:?}")));
        }
        Ok(())
    }
}

/// Node features and the two hop neighborhoods the network runs on.
#[derive(Clone, Debug)]
pub struct TrainGraph {
    pub features: Matrix,
    pub neighborhoods: [Arc<NeighborhoodSets>; BRANCHES],
}

impl TrainGraph {
    pub fn from_regions(regions: &RegionGraph, hops: [usize; BRANCHES]) -> Result<Self> {
        let near = hop_neighborhoods(&regions.adjacency, hops[0])?;
        let far = hop_neighborhoods(&regions.adjacency, hops[1])?;
        Ok(Self {
            features: regions.features.clone(),
            neighborhoods: [Arc::new(near), Arc::new(far)],
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Losses of the forward pass that produced this iteration's update.
    pub loss: f64,
    pub reconstruction: f64,
    pub classification: f64,
    pub zeta: f64,
    /// Validation accuracy of the parameters after this iteration's update,
    /// on checked iterations only.
    pub val_oa: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
    /// Iteration whose parameters were returned.
    pub selected_iteration: usize,
}

pub const HISTORY_HEADER: &str = "iteration,loss,reconstruction,classification,zeta,val_oa";

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Comma-separated log with a header line; unchecked iterations leave the
    /// last column blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let val = r.val_oa.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration, r.loss, r.reconstruction, r.classification, r.zeta, val
            );
        }
        out
    }
}

/// Row-wise argmax; ties go to the lowest column.
pub fn argmax_rows(scores: &Matrix) -> Vec<usize> {
    scores
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Predicted class (`1..=C`) of every node.
pub fn predict(params: &ModelParams, graph: &TrainGraph, cfg: &ModelConfig) -> Result<Vec<u16>> {
    let f = forward(&graph.features, &graph.neighborhoods, params, cfg, None)?;
    Ok(argmax_rows(f.scores())
        .into_iter()
        .map(|c| c as u16 + 1)
        .collect())
}

fn node_accuracy(scores: &Matrix, ids: &[usize], classes: &[u16]) -> f64 {
    let pred = argmax_rows(scores);
    let hits = ids
        .iter()
        .filter(|&&i| pred[i] + 1 == classes[i] as usize)
        .count();
    hits as f64 / ids.len() as f64
}

/// Full-batch Adam training from a seeded initialization.
///
/// Every iteration runs the forward pass on all nodes, takes the loss on the
/// training nodes and updates every parameter. Validation accuracy (on
/// nodes) is measured every `val_interval` iterations and after the last.
pub fn train(
    graph: &TrainGraph,
    split: &LabelSplit,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    let params = ModelParams::init(model_cfg, cfg.seed)?;
    train_from(params, graph, split, model_cfg, cfg)
}

/// [`train`] starting from given parameters.
pub fn train_from(
    mut params: ModelParams,
    graph: &TrainGraph,
    split: &LabelSplit,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    model_cfg.validate()?;
    if split.classes.len() != graph.n_nodes() {
        return Err(Error::Data(format!(
            "split covers {} nodes, graph has {}",
            split.classes.len(),
            graph.n_nodes()
        )));
    }
    if split.n_classes != model_cfg.n_classes {
        return Err(Error::Config(format!(
            "split has {} classes, model expects {}",
            split.n_classes, model_cfg.n_classes
        )));
    }
    let sup = split.train_supervision();
    if sup.ids.is_empty() {
        return Err(Error::Config("no training nodes".into()));
    }
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut state = AdamState::new(params.tensors().into_iter().map(|(_, m)| m));
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams, usize)> = None;
    let track_best = cfg.selection == Selection::BestValidation && !split.val_ids.is_empty();
    let is_check = |t: usize| t.is_multiple_of(cfg.val_interval) || t == cfg.iterations;

    let mut consider =
        |t: usize, scores: &Matrix, params: &ModelParams, history: &mut TrainHistory| {
            if split.val_ids.is_empty() {
                return;
            }
            let oa = node_accuracy(scores, &split.val_ids, &split.classes);
            history.records[t - 1].val_oa = Some(oa);
            if track_best && best.as_ref().is_none_or(|(b, _, _)| oa >= *b) {
                best = Some((oa, params.clone(), t));
            }
        };

    for t in 1..=cfg.iterations {
        let f = forward(
            &graph.features,
            &graph.neighborhoods,
            &params,
            model_cfg,
            Some(&sup),
        )?;
        // this pass scores the parameters left by the previous update
        if t > 1 && is_check(t - 1) {
            consider(t - 1, f.scores(), &params, &mut history);
        }
        let losses = f.out.losses.expect("supervision given");
        let loss = f.tape.scalar(losses.total);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(t));
        }
        history.records.push(IterationRecord {
            iteration: t,
            loss,
            reconstruction: f.tape.scalar(losses.reconstruction),
            classification: f.tape.scalar(losses.classification),
            zeta: f.tape.scalar(losses.zeta),
            val_oa: None,
        });
        let grads = f.tape.backward(losses.total)?;
        let grads: Vec<Matrix> = f
            .params
            .in_order()
            .into_iter()
            .map(|v| grads.get(v))
            .collect();
        drop(f);
        let mut slots = params.tensors_mut();
        adam_step(
            &mut slots,
            &grads,
            &names,
            &mut state,
            cfg.learning_rate,
            &cfg.adam,
        )?;
    }
    let last = cfg.iterations;
    let f = forward(
        &graph.features,
        &graph.neighborhoods,
        &params,
        model_cfg,
        None,
    )?;
    consider(last, f.scores(), &params, &mut history);

    match best {
        Some((_, p, t)) => {
            history.selected_iteration = t;
            Ok((p, history))
        }
        None => {
            history.selected_iteration = last;
            Ok((params, history))
        }
    }
}
