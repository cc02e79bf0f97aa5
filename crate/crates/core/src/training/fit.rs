use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, TrainingType, LR_DECAY};
use super::loss::{ce_with_grad, dropout_mask, reg_row_grad, sample_negatives, touched_rows, Frequencies, RegKind};
use super::optim::{Optimizer, Table};
use crate::error::{Error, Result};
use crate::eval::{evaluate_lp, DEFAULT_KS};
use crate::kg::{SplitSet, Triple};
use crate::models::{init_params, Candidates, Direction, GradSink, ModelParams, Query, QueryVectors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean CE loss per training triple (both directions summed).
    pub loss: f64,
    /// Mean regularization penalty per batch.
    pub penalty: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
    /// Filtered validation MRR when this epoch ended with a validation check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_mrr: Option<f64>,
}

/// How often each relation row served a tail-prediction term or a head-prediction term.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationUsage {
    pub tail: Vec<u64>,
    pub head: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_valid_mrr: Option<f64>,
    pub lr_decay: f64,
    pub valid_every: usize,
    pub workers: usize,
    pub relation_usage: RelationUsage,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

impl TrainReport {
    /// One JSON record per epoch.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// `(epoch, valid MRR)` for every validation check.
    pub fn valid_trace(&self) -> Vec<(usize, f64)> {
        self.epochs
            .iter()
            .filter_map(|e| e.valid_mrr.map(|m| (e.epoch, m)))
            .collect()
    }

    /// First epoch whose validation MRR reached `target`.
    pub fn epochs_to_reach(&self, target: f64) -> Option<usize> {
        self.valid_trace()
            .into_iter()
            .find(|&(_, m)| m >= target)
            .map(|(e, _)| e)
    }
}

/// Dense per-batch gradient accumulator with touched-row bookkeeping.
pub(crate) struct GradBuffer {
    ent: Array2<f64>,
    ent_touched: Vec<bool>,
    ent_list: Vec<u32>,
    rel: Array2<f64>,
    rel_touched: Vec<bool>,
    rel_list: Vec<u32>,
    normals: Option<Array2<f64>>,
    filters: Vec<f64>,
    projection: Vec<f64>,
    conv_touched: bool,
    kink: bool,
    usage: RelationUsage,
}

impl GradBuffer {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let n_rel = params.num_relations();
        GradBuffer {
            ent: Array2::zeros(params.entities.dim()),
            ent_touched: vec![false; params.num_entities()],
            ent_list: Vec::new(),
            rel: Array2::zeros(params.relations.dim()),
            rel_touched: vec![false; n_rel],
            rel_list: Vec::new(),
            normals: params.normals.as_ref().map(|n| Array2::zeros(n.dim())),
            filters: params
                .conv
                .as_ref()
                .map_or(Vec::new(), |c| vec![0.0; c.filter_bank.len()]),
            projection: params
                .conv
                .as_ref()
                .map_or(Vec::new(), |c| vec![0.0; c.projection.len()]),
            conv_touched: false,
            kink: false,
            usage: RelationUsage {
                tail: vec![0; n_rel],
                head: vec![0; n_rel],
            },
        }
    }

    fn touch_relation(&mut self, p: u32) {
        if !self.rel_touched[p as usize] {
            self.rel_touched[p as usize] = true;
            self.rel_list.push(p);
        }
    }

    pub(crate) fn relation_row(&mut self, p: u32) -> &mut [f64] {
        self.touch_relation(p);
        self.rel.row_mut(p as usize).into_slice().expect("standard layout")
    }

    fn normal_row(&mut self, p: u32) -> &mut [f64] {
        self.touch_relation(p);
        self.normals
            .as_mut()
            .expect("normals present")
            .row_mut(p as usize)
            .into_slice()
            .expect("standard layout")
    }

    /// Moves `other`'s gradients into `self`, leaving `other` empty.
    fn absorb(&mut self, other: &mut GradBuffer) {
        let ew = self.ent.ncols();
        for e in std::mem::take(&mut other.ent_list) {
            other.ent_touched[e as usize] = false;
            let src = other.ent.row(e as usize).to_vec();
            add_into(self.entity_row(e, ew), &src);
            other.ent.row_mut(e as usize).fill(0.0);
        }
        for p in std::mem::take(&mut other.rel_list) {
            other.rel_touched[p as usize] = false;
            let src = other.rel.row(p as usize).to_vec();
            add_into(self.relation_row(p), &src);
            other.rel.row_mut(p as usize).fill(0.0);
            if let Some(n) = other.normals.as_mut() {
                let src = n.row(p as usize).to_vec();
                add_into(self.normal_row(p), &src);
                n.row_mut(p as usize).fill(0.0);
            }
        }
        if other.conv_touched {
            add_into(&mut self.filters, &other.filters);
            add_into(&mut self.projection, &other.projection);
            other.filters.fill(0.0);
            other.projection.fill(0.0);
            other.conv_touched = false;
            self.conv_touched = true;
        }
        for (a, b) in self.usage.tail.iter_mut().zip(&mut other.usage.tail) {
            *a += std::mem::take(b);
        }
        for (a, b) in self.usage.head.iter_mut().zip(&mut other.usage.head) {
            *a += std::mem::take(b);
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

impl GradSink for GradBuffer {
    fn entity_row(&mut self, e: u32, _width: usize) -> &mut [f64] {
        if !self.ent_touched[e as usize] {
            self.ent_touched[e as usize] = true;
            self.ent_list.push(e);
        }
        self.ent.row_mut(e as usize).into_slice().expect("standard layout")
    }

    fn conv_filters(&mut self, _len: usize) -> &mut [f64] {
        self.conv_touched = true;
        &mut self.filters
    }

    fn conv_projection(&mut self, _len: usize) -> &mut [f64] {
        self.conv_touched = true;
        &mut self.projection
    }
}

/// A query whose embeddings may carry dropout masks.
struct DroppedQuery<'a> {
    query: Query<'a>,
    anchor: u32,
    relation: u32,
    /// Which slot of the training triple this query predicts.
    role: Direction,
    anchor_mask: Option<Vec<f64>>,
    relation_mask: Option<Vec<f64>>,
}

fn mask_in_place(v: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        v.iter_mut().zip(m).for_each(|(x, m)| *x *= m);
    }
}

impl<'a> DroppedQuery<'a> {
    fn new(
        params: &'a ModelParams,
        cfg: &TrainConfig,
        anchor: u32,
        relation: u32,
        dir: Direction,
        role: Direction,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut vecs = QueryVectors::lookup(params, anchor, relation);
        let anchor_mask = dropout_mask(vecs.anchor.len(), cfg.dropout_entity, rng);
        let relation_mask = dropout_mask(vecs.relation.len(), cfg.dropout_relation, rng);
        mask_in_place(&mut vecs.anchor, &anchor_mask);
        mask_in_place(&mut vecs.relation, &relation_mask);
        DroppedQuery {
            query: Query::new(params, dir, vecs),
            anchor,
            relation,
            role,
            anchor_mask,
            relation_mask,
        }
    }

    fn scores(&self, c: Candidates<'_>) -> Vec<f64> {
        self.query.scores(c)
    }

    fn backward(&self, c: Candidates<'_>, coeffs: &[f64], buf: &mut GradBuffer, ew: usize) {
        let mut g = self.query.backward(c, coeffs, buf);
        buf.kink |= g.kink;
        mask_in_place(&mut g.anchor, &self.anchor_mask);
        mask_in_place(&mut g.relation, &self.relation_mask);
        add_into(buf.entity_row(self.anchor, ew), &g.anchor);
        add_into(buf.relation_row(self.relation), &g.relation);
        if let Some(n) = &g.normal {
            add_into(buf.normal_row(self.relation), n);
        }
        match self.role {
            Direction::Tail => buf.usage.tail[self.relation as usize] += 1,
            Direction::Head => buf.usage.head[self.relation as usize] += 1,
        }
    }
}

/// The head-prediction query for `(·, p, o)`: a tail query on `p_inv` when available.
fn head_query<'a>(params: &'a ModelParams, cfg: &TrainConfig, t: Triple, rng: &mut ChaCha8Rng) -> DroppedQuery<'a> {
    match params.inverse_relation(t.p) {
        Some(inv) => DroppedQuery::new(params, cfg, t.o, inv, Direction::Tail, Direction::Head, rng),
        None => DroppedQuery::new(params, cfg, t.o, t.p, Direction::Head, Direction::Head, rng),
    }
}

fn scaled_ce(scores: &[f64], truth: usize, scale: f64) -> Result<(f64, Vec<f64>)> {
    let (l, mut g) = ce_with_grad(scores, truth)?;
    g.iter_mut().for_each(|x| *x *= scale);
    Ok((l, g))
}

/// CE loss of one training triple; gradients (times `scale`) go to `buf`.
pub(crate) fn triple_loss(
    params: &ModelParams,
    cfg: &TrainConfig,
    t: Triple,
    scale: f64,
    rng: &mut ChaCha8Rng,
    buf: &mut GradBuffer,
) -> Result<f64> {
    let ew = params.spec.entity_width();
    match cfg.training_type {
        TrainingType::OneVsAll => {
            let tail = DroppedQuery::new(params, cfg, t.s, t.p, Direction::Tail, Direction::Tail, rng);
            let (l1, g) = scaled_ce(&tail.scores(Candidates::All), t.o as usize, scale)?;
            tail.backward(Candidates::All, &g, buf, ew);
            let head = head_query(params, cfg, t, rng);
            let (l2, g) = scaled_ce(&head.scores(Candidates::All), t.s as usize, scale)?;
            head.backward(Candidates::All, &g, buf, ew);
            Ok(l1 + l2)
        }
        TrainingType::NegSamp => {
            let (ks, ko) = (cfg.neg_subjects, cfg.neg_objects);
            let negs = sample_negatives(t, ks, ko, params.num_entities(), rng)?;
            let mut objects = vec![t.o];
            objects.extend(negs[ks..].iter().map(|n| n.o));
            let subjects: Vec<u32> = negs[..ks].iter().map(|n| n.s).collect();

            let tail = DroppedQuery::new(params, cfg, t.s, t.p, Direction::Tail, Direction::Tail, rng);
            let tail_scores = tail.scores(Candidates::Subset(&objects));
            if params.reciprocal() {
                let (l1, g) = scaled_ce(&tail_scores, 0, scale)?;
                tail.backward(Candidates::Subset(&objects), &g, buf, ew);
                let mut with_truth = vec![t.s];
                with_truth.extend(&subjects);
                let head = head_query(params, cfg, t, rng);
                let scores = head.scores(Candidates::Subset(&with_truth));
                let (l2, g) = scaled_ce(&scores, 0, scale)?;
                head.backward(Candidates::Subset(&with_truth), &g, buf, ew);
                Ok(l1 + l2)
            } else {
                // one softmax over the true triple and both kinds of corruption
                let head = head_query(params, cfg, t, rng);
                let head_scores = head.scores(Candidates::Subset(&subjects));
                let mut all = tail_scores;
                all.extend(&head_scores);
                let (l, g) = scaled_ce(&all, 0, scale)?;
                let (gt, gh) = g.split_at(objects.len());
                tail.backward(Candidates::Subset(&objects), gt, buf, ew);
                head.backward(Candidates::Subset(&subjects), gh, buf, ew);
                Ok(l)
            }
        }
    }
}

/// CE loss of one triple (no regularization) with its full gradient.
#[derive(Debug, Clone)]
pub struct TripleObjective {
    pub loss: f64,
    /// Gradient laid out like the parameters it differentiates.
    pub grad: ModelParams,
    /// Some score in the loss sat within tolerance of a nondifferentiable point.
    pub nondifferentiable: bool,
}

/// Loss and gradient of one training triple exactly as the training step computes them;
/// `seed` fixes negatives and dropout masks.
pub fn triple_objective(params: &ModelParams, cfg: &TrainConfig, t: Triple, seed: u64) -> Result<TripleObjective> {
    params.check_entity(t.s)?;
    params.check_entity(t.o)?;
    params.check_relation(t.p)?;
    let mut buf = GradBuffer::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss = triple_loss(params, cfg, t, 1.0, &mut rng, &mut buf)?;
    let mut grad = params.clone();
    grad.entities = buf.ent;
    grad.relations = buf.rel;
    grad.normals = buf.normals;
    if let Some(conv) = grad.conv.as_mut() {
        conv.filter_bank = buf.filters;
        conv.projection =
            Array2::from_shape_vec(conv.projection.dim(), buf.projection).expect("projection gradient shape");
    }
    Ok(TripleObjective {
        loss,
        grad,
        nondifferentiable: buf.kink,
    })
}

/// splitmix64 finalizer, used to derive independent per-triple seeds.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn derived_rng(seed: u64, epoch: usize, position: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ epoch as u64) ^ position as u64))
}

/// Adds regularization gradients for the batch, then applies and clears the buffer.
fn apply_step(
    params: &mut ModelParams,
    opt: &mut Optimizer,
    cfg: &TrainConfig,
    batch: &[Triple],
    freqs: &Frequencies,
    buf: &mut GradBuffer,
) {
    let reg = &cfg.regularization;
    if reg.kind != RegKind::None {
        let touched = touched_rows(params, reg, batch, Some(freqs));
        let ew = params.spec.entity_width();
        for (e, f) in touched.entities {
            reg_row_grad(reg.kind, reg.entity_weight * f, params.entity(e), buf.entity_row(e, ew));
        }
        for (p, f) in touched.relations {
            reg_row_grad(
                reg.kind,
                reg.relation_weight * f,
                params.relation(p),
                buf.relation_row(p),
            );
        }
    }
    opt.begin_step();
    for e in std::mem::take(&mut buf.ent_list) {
        let r = e as usize;
        buf.ent_touched[r] = false;
        opt.update_row(
            Table::Entities,
            &mut params.entities,
            r,
            buf.ent.row(r).as_slice().unwrap(),
        );
        buf.ent.row_mut(r).fill(0.0);
    }
    for p in std::mem::take(&mut buf.rel_list) {
        let r = p as usize;
        buf.rel_touched[r] = false;
        opt.update_row(
            Table::Relations,
            &mut params.relations,
            r,
            buf.rel.row(r).as_slice().unwrap(),
        );
        buf.rel.row_mut(r).fill(0.0);
        if let (Some(g), Some(n)) = (buf.normals.as_mut(), params.normals.as_mut()) {
            opt.update_row(Table::Normals, n, r, g.row(r).as_slice().unwrap());
            g.row_mut(r).fill(0.0);
        }
    }
    if buf.conv_touched {
        let conv = params.conv.as_mut().expect("conv params");
        opt.update(Table::Filters, 0, &mut conv.filter_bank, &buf.filters);
        opt.update(
            Table::Projection,
            0,
            conv.projection.as_slice_mut().expect("standard layout"),
            &buf.projection,
        );
        buf.filters.fill(0.0);
        buf.projection.fill(0.0);
        buf.conv_touched = false;
    }
    params.renormalize();
}

/// Trains from a fresh initialization. See [`fit_from`].
pub fn fit(splits: &SplitSet, config: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    fit_from(splits, config, None)
}

/// Trains on `splits.train`, validating on `splits.valid` every `valid_every` epochs and
/// after the last one, and returns the parameters of the best-validation epoch.
///
/// `initial` replaces the random initialization (warm starts); its spec must match the
/// config. With an empty validation split, the final parameters are returned and a
/// warning is recorded.
pub fn fit_from(
    splits: &SplitSet,
    config: &TrainConfig,
    initial: Option<ModelParams>,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(Error::Degenerate("training split is empty".into()));
    }
    let spec = config.model_spec();
    let n_e = splits.num_entities();
    let n_r = splits.num_relations();
    let mut params = match initial {
        Some(p) => {
            if p.spec != spec || p.num_entities() != n_e || p.base_relations != n_r {
                return Err(Error::Config(format!(
                    "initial parameters ({:?}, {} entities, {} relations) do not match the config ({:?}, {n_e}, {n_r})",
                    p.spec,
                    p.num_entities(),
                    p.base_relations,
                    spec
                )));
            }
            p
        }
        None => init_params(&spec, n_e, n_r, &config.init, config.seed)?,
    };
    let started = Instant::now();
    let freqs = Frequencies::from_store(&splits.train);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &params);
    let workers = config.workers.max(1);
    let mut buffers: Vec<GradBuffer> = (0..workers).map(|_| GradBuffer::new(&params)).collect();
    let mut usage = RelationUsage {
        tail: vec![0; params.num_relations()],
        head: vec![0; params.num_relations()],
    };

    let mut warnings = Vec::new();
    let validate = !splits.valid.is_empty();
    if !validate {
        let msg = "validation split is empty; best-epoch selection and LR scheduling disabled";
        log::warn!("{msg}");
        warnings.push(msg.to_owned());
    }
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut bad_checks = 0usize;

    let train = splits.train.triples();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(config.seed ^ 0x7472_6169_6e00));
    let mut epochs = Vec::with_capacity(config.max_epochs);

    for epoch in 1..=config.max_epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let lr = opt.lr;
        let mut loss_sum = 0.0;
        let mut penalty_sum = 0.0;
        let mut n_batches = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Triple> = idx.iter().map(|&i| train[i]).collect();
            let scale = 1.0 / batch.len() as f64;
            let base_pos = b * config.batch_size;
            let chunk_len = batch.len().div_ceil(workers);
            let losses: Vec<Result<f64>> = {
                let p = &params;
                let run = |(c, buf): (usize, &mut GradBuffer)| -> Result<f64> {
                    let lo = (c * chunk_len).min(batch.len());
                    let hi = ((c + 1) * chunk_len).min(batch.len());
                    let mut sum = 0.0;
                    for (k, &t) in batch[lo..hi].iter().enumerate() {
                        let mut rng = derived_rng(config.seed, epoch, base_pos + lo + k);
                        sum += triple_loss(p, config, t, scale, &mut rng, buf)?;
                    }
                    Ok(sum)
                };
                if workers == 1 {
                    vec![run((0, &mut buffers[0]))]
                } else {
                    buffers.par_iter_mut().enumerate().map(run).collect()
                }
            };
            for l in losses {
                loss_sum += l.map_err(|e| Error::Diverged {
                    epoch,
                    message: e.to_string(),
                })?;
            }
            let (head, rest) = buffers.split_at_mut(1);
            for other in rest {
                head[0].absorb(other);
            }
            let penalty = super::loss::reg_penalty(&params, &config.regularization, &batch, Some(&freqs));
            penalty_sum += penalty;
            apply_step(&mut params, &mut opt, config, &batch, &freqs, &mut buffers[0]);
            n_batches += 1;
        }
        for (a, b) in usage.tail.iter_mut().zip(&mut buffers[0].usage.tail) {
            *a += std::mem::take(b);
        }
        for (a, b) in usage.head.iter_mut().zip(&mut buffers[0].usage.head) {
            *a += std::mem::take(b);
        }
        let loss = loss_sum / train.len() as f64;
        let penalty = penalty_sum / n_batches as f64;
        if !loss.is_finite() || !penalty.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("loss {loss}, penalty {penalty}"),
            });
        }

        let mut valid_mrr = None;
        if validate && (epoch % config.valid_every == 0 || epoch == config.max_epochs) {
            let report = evaluate_lp(&params, &splits.valid, splits, &DEFAULT_KS)?;
            let mrr = report.mrr;
            valid_mrr = Some(mrr);
            log::info!("epoch {epoch}: loss {loss:.6}, valid MRR {mrr:.4}, lr {lr:.3e}");
            if best.as_ref().is_none_or(|(b, _, _)| mrr > *b) {
                best = Some((mrr, epoch, params.clone()));
                bad_checks = 0;
            } else {
                bad_checks += 1;
                if bad_checks > config.scheduler_patience {
                    opt.lr *= LR_DECAY;
                    bad_checks = 0;
                }
            }
        } else {
            log::debug!("epoch {epoch}: loss {loss:.6}");
        }
        epochs.push(EpochRecord {
            epoch,
            loss,
            penalty,
            lr,
            seconds: epoch_start.elapsed().as_secs_f64(),
            valid_mrr,
        });
    }

    let (best_epoch, best_valid_mrr, params) = match best {
        Some((mrr, epoch, p)) => (epoch, Some(mrr), p),
        None => (config.max_epochs, None, params),
    };
    let report = TrainReport {
        epochs,
        best_epoch,
        best_valid_mrr,
        lr_decay: LR_DECAY,
        valid_every: config.valid_every,
        workers,
        relation_usage: usage,
        warnings,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}
