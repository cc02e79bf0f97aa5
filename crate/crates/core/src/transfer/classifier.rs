use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::pairs::{PairDataset, PairExample};
use crate::eval::{classification_metrics, ClassificationReport};
use crate::models::xavier_uniform_bound;
use crate::{Error, Result};

/// Where the entity embedding layer comes from and whether it trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    Scratch,
    Frozen,
    FineTuned,
}

impl EmbeddingMode {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingMode::Scratch => "scratch",
            EmbeddingMode::Frozen => "frozen",
            EmbeddingMode::FineTuned => "fine_tuned",
        }
    }

    pub fn pretrained(self) -> bool {
        self != EmbeddingMode::Scratch
    }
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbeddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "scratch" => Ok(EmbeddingMode::Scratch),
            "frozen" | "pretrained_frozen" => Ok(EmbeddingMode::Frozen),
            "fine_tuned" | "finetuned" | "pretrained_finetuned" | "pretrained_fine_tuned" => {
                Ok(EmbeddingMode::FineTuned)
            }
            _ => Err(Error::Config(format!(
                "unknown embedding mode '{s}'; expected scratch, frozen or fine_tuned"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub embedding_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mode: EmbeddingMode,
    /// Widths of the rectified hidden layers between the pair vector and the softmax.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    /// Std of freshly initialized embedding rows.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            embedding_dim: 512,
            batch_size: 512,
            learning_rate: 1e-4,
            mode: EmbeddingMode::Scratch,
            hidden: vec![512],
            epochs: 50,
            init_std: 0.1,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "embedding_dim, batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layers need a positive width".into()));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    w: Array2<f64>,
    b: Array1<f64>,
}

/// Pair classifier: `[e_a; e_b]` → rectified hidden layers → softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// One row per dataset entity, indexed through `rows`.
    embeddings: Array2<f64>,
    rows: HashMap<u32, usize>,
    layers: Vec<Dense>,
    pub classes: Vec<String>,
}

struct Forward {
    /// Input to each layer; `acts[0]` is the pair matrix.
    acts: Vec<Array2<f64>>,
    probs: Array2<f64>,
}

impl Classifier {
    /// The embedding row of a dataset entity.
    pub fn embedding(&self, entity: u32) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.rows.get(&entity).map(|&r| self.embeddings.row(r))
    }

    pub fn embedding_table(&self) -> &Array2<f64> {
        &self.embeddings
    }

    fn forward(&self, pairs: &[(usize, usize)]) -> Forward {
        let w = self.embeddings.ncols();
        let mut x = Array2::zeros((pairs.len(), 2 * w));
        for (i, &(a, b)) in pairs.iter().enumerate() {
            x.slice_mut(s![i, ..w]).assign(&self.embeddings.row(a));
            x.slice_mut(s![i, w..]).assign(&self.embeddings.row(b));
        }
        let mut acts = vec![x];
        let last = self.layers.len() - 1;
        let mut logits = Array2::zeros((0, 0));
        for (l, layer) in self.layers.iter().enumerate() {
            let z = acts[l].dot(&layer.w) + &layer.b;
            if l < last {
                acts.push(z.mapv(|v| v.max(0.0)));
            } else {
                logits = z;
            }
        }
        for mut row in logits.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let z = row.sum();
            row.mapv_inplace(|v| v / z);
        }
        Forward { acts, probs: logits }
    }

    fn pair_rows(&self, examples: &[PairExample]) -> Vec<(usize, usize)> {
        examples.iter().map(|e| (self.rows[&e.a], self.rows[&e.b])).collect()
    }

    /// Class probabilities for each example; entities must belong to the dataset.
    pub fn predict_proba(&self, examples: &[PairExample]) -> Vec<Vec<f64>> {
        if examples.is_empty() {
            return Vec::new();
        }
        let f = self.forward(&self.pair_rows(examples));
        f.probs.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

/// Adam moments for one tensor.
#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam(param: &mut [f64], grad: &[f64], mom: (&mut [f64], &mut [f64]), lr_t: f64) {
    let (m, v) = mom;
    for i in 0..param.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
        param[i] -= lr_t * m[i] / (v[i].sqrt() + ADAM_EPS);
    }
}

/// Outcome of training one classifier.
#[derive(Debug, Clone, Serialize)]
pub struct ClassifierReport {
    pub mode: EmbeddingMode,
    pub report: ClassificationReport,
    /// Dataset entities whose row came from the checkpoint.
    pub copied_rows: usize,
    /// Dataset entities initialized fresh (all of them in scratch mode).
    pub fresh_rows: usize,
    pub best_epoch: usize,
    pub epoch_losses: Vec<f64>,
    pub valid_auroc: Vec<Option<f64>>,
}

/// Trains the pair classifier on `dataset.train`, keeps the epoch with the best macro
/// AUROC on `dataset.valid` (the last epoch if it is never defined) and reports
/// classification metrics on `dataset.test`.
pub fn train_classifier(
    dataset: &PairDataset,
    source: Option<&Checkpoint>,
    config: &ClassifierConfig,
) -> Result<(Classifier, ClassifierReport)> {
    config.validate()?;
    let present: std::collections::BTreeSet<usize> = dataset.train.iter().map(|e| e.label).collect();
    if present.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "the training pairs hold {} class(es); at least two are needed",
            present.len()
        )));
    }
    if let Some(bad) = dataset.all().find(|e| e.label >= dataset.num_classes()) {
        return Err(Error::Lookup(format!(
            "label {} outside {} classes",
            bad.label,
            dataset.num_classes()
        )));
    }
    let ck = match (config.mode.pretrained(), source) {
        (true, None) => return Err(Error::Config(format!("{} mode needs a checkpoint", config.mode))),
        (true, Some(ck)) => {
            if ck.params.dim() != config.embedding_dim {
                return Err(Error::Config(format!(
                    "checkpoint d={} but embedding_dim={}",
                    ck.params.dim(),
                    config.embedding_dim
                )));
            }
            Some(ck)
        }
        (false, _) => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width = ck.map_or(config.embedding_dim, |c| c.params.spec.entity_width());

    let mut ids: Vec<u32> = dataset.all().flat_map(|e| [e.a, e.b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let normal = Normal::new(0.0, config.init_std).expect("std validated");
    let mut embeddings = Array2::zeros((ids.len(), width));
    let mut copied = 0;
    for (r, &e) in ids.iter().enumerate() {
        let src = ck.and_then(|c| c.entities.id(dataset.entities.name(e)).map(|i| (c, i)));
        match src {
            Some((c, i)) => {
                embeddings.row_mut(r).assign(&c.params.entities.row(i as usize));
                copied += 1;
            }
            None => embeddings.row_mut(r).mapv_inplace(|_| normal.sample(&mut rng)),
        }
    }
    let rows: HashMap<u32, usize> = ids.iter().enumerate().map(|(r, &e)| (e, r)).collect();
    let mut widths = vec![2 * width];
    widths.extend(&config.hidden);
    widths.push(dataset.num_classes());
    let layers = widths
        .windows(2)
        .map(|w| {
            let bound = xavier_uniform_bound(1.0, w[0], w[1]);
            Dense {
                w: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-bound..bound)),
                b: Array1::zeros(w[1]),
            }
        })
        .collect();
    let mut clf = Classifier {
        embeddings,
        rows,
        layers,
        classes: dataset.classes.clone(),
    };

    let train_rows = clf.pair_rows(&dataset.train);
    let train_labels: Vec<usize> = dataset.train.iter().map(|e| e.label).collect();
    let mut layer_moments: Vec<(Moments, Moments)> = clf
        .layers
        .iter()
        .map(|l| (Moments::new(l.w.len()), Moments::new(l.b.len())))
        .collect();
    let mut emb_moments = Moments::new(clf.embeddings.len());
    let update_embeddings = config.mode != EmbeddingMode::Frozen;
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut step = 0i32;
    let mut best: Option<(f64, usize, Classifier)> = None;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut valid_auroc = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let pairs: Vec<(usize, usize)> = batch.iter().map(|&i| train_rows[i]).collect();
            let f = clf.forward(&pairs);
            let n = batch.len() as f64;
            let mut delta = f.probs.clone();
            for (i, &ex) in batch.iter().enumerate() {
                let y = train_labels[ex];
                loss_sum -= f.probs[[i, y]].max(f64::MIN_POSITIVE).ln();
                delta[[i, y]] -= 1.0;
            }
            delta.mapv_inplace(|v| v / n);
            step += 1;
            let lr_t = config.learning_rate * (1.0 - BETA2.powi(step)).sqrt() / (1.0 - BETA1.powi(step));
            for l in (0..clf.layers.len()).rev() {
                let gw = f.acts[l].t().dot(&delta);
                let gb = delta.sum_axis(Axis(0));
                let mut back = delta.dot(&clf.layers[l].w.t());
                if l > 0 {
                    back.zip_mut_with(&f.acts[l], |d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                }
                let layer = &mut clf.layers[l];
                let (mw, mb) = &mut layer_moments[l];
                adam(
                    layer.w.as_slice_mut().unwrap(),
                    gw.as_slice().unwrap(),
                    (&mut mw.m, &mut mw.v),
                    lr_t,
                );
                adam(
                    layer.b.as_slice_mut().unwrap(),
                    gb.as_slice().unwrap(),
                    (&mut mb.m, &mut mb.v),
                    lr_t,
                );
                delta = back;
            }
            if update_embeddings {
                let mut grads: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
                for (i, &(a, b)) in pairs.iter().enumerate() {
                    for (r, part) in [(a, s![i, ..width]), (b, s![i, width..])] {
                        let g = delta.slice(part);
                        grads
                            .entry(r)
                            .and_modify(|acc| *acc += &g)
                            .or_insert_with(|| g.to_owned());
                    }
                }
                for (r, g) in grads {
                    let span = r * width..(r + 1) * width;
                    let row = clf.embeddings.as_slice_mut().unwrap();
                    adam(
                        &mut row[span.clone()],
                        g.as_slice().unwrap(),
                        (&mut emb_moments.m[span.clone()], &mut emb_moments.v[span]),
                        lr_t,
                    );
                }
            }
        }
        epoch_losses.push(loss_sum / train_rows.len() as f64);
        let auroc = macro_auroc(&clf, &dataset.valid);
        valid_auroc.push(auroc);
        let score = auroc.unwrap_or(f64::NEG_INFINITY);
        // undefined validation AUROC keeps moving to the latest epoch
        if best
            .as_ref()
            .is_none_or(|(b, _, _)| score > *b || score == f64::NEG_INFINITY)
        {
            best = Some((score, epoch, clf.clone()));
        }
    }
    let (_, best_epoch, clf) = best.expect("at least one epoch");
    let probs = clf.predict_proba(&dataset.test);
    let labels: Vec<usize> = dataset.test.iter().map(|e| e.label).collect();
    let report = classification_metrics(&probs, &labels)?;
    Ok((
        clf,
        ClassifierReport {
            mode: config.mode,
            report,
            copied_rows: copied,
            fresh_rows: ids.len() - copied,
            best_epoch,
            epoch_losses,
            valid_auroc,
        },
    ))
}

fn macro_auroc(clf: &Classifier, examples: &[PairExample]) -> Option<f64> {
    if examples.is_empty() {
        return None;
    }
    let probs = clf.predict_proba(examples);
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    classification_metrics(&probs, &labels).ok().map(|r| r.auroc)
}
