use std::collections::BTreeMap;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::conve::ConvForward;
use super::{ModelKind, ModelParams, Norm};
use crate::error::Result;

/// Distance from a nondifferentiable point (zero residual, L1 coordinate or ReLU input)
/// below which gradients are flagged.
pub const KINK_TOLERANCE: f64 = 1e-4;

/// Which slot of the triple is being ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(anchor, p, ?)`
    Tail,
    /// `(?, p, anchor)`
    Head,
}

#[derive(Debug, Clone, Copy)]
pub enum Candidates<'a> {
    All,
    Subset(&'a [u32]),
}

impl Candidates<'_> {
    fn for_each(&self, n: usize, mut f: impl FnMut(usize, u32)) {
        match self {
            Candidates::All => (0..n as u32).enumerate().for_each(|(i, e)| f(i, e)),
            Candidates::Subset(ids) => ids.iter().enumerate().for_each(|(i, &e)| f(i, e)),
        }
    }
}

/// Receives gradients for candidate entity rows and shared dense weights.
pub trait GradSink {
    fn entity_row(&mut self, e: u32, width: usize) -> &mut [f64];
    fn conv_filters(&mut self, len: usize) -> &mut [f64];
    fn conv_projection(&mut self, len: usize) -> &mut [f64];
}

/// Map-backed sink for small gradient computations.
#[derive(Debug, Clone, Default)]
pub struct SparseGrads {
    pub entities: BTreeMap<u32, Vec<f64>>,
    pub conv_filters: Vec<f64>,
    pub conv_projection: Vec<f64>,
}

impl GradSink for SparseGrads {
    fn entity_row(&mut self, e: u32, width: usize) -> &mut [f64] {
        self.entities.entry(e).or_insert_with(|| vec![0.0; width])
    }

    fn conv_filters(&mut self, len: usize) -> &mut [f64] {
        if self.conv_filters.len() != len {
            self.conv_filters = vec![0.0; len];
        }
        &mut self.conv_filters
    }

    fn conv_projection(&mut self, len: usize) -> &mut [f64] {
        if self.conv_projection.len() != len {
            self.conv_projection = vec![0.0; len];
        }
        &mut self.conv_projection
    }
}

/// The anchor entity, relation (and TransH normal) embeddings of one query.
///
/// Training applies dropout to copies of these before building the query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryVectors {
    pub anchor: Vec<f64>,
    pub relation: Vec<f64>,
    pub normal: Option<Vec<f64>>,
}

impl QueryVectors {
    pub fn lookup(params: &ModelParams, anchor: u32, relation: u32) -> Self {
        QueryVectors {
            anchor: params.entity(anchor).to_vec(),
            relation: params.relation(relation).to_vec(),
            normal: params.normal(relation).map(<[f64]>::to_vec),
        }
    }
}

/// Gradients of a weighted sum of candidate scores w.r.t. the query embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGrad {
    pub anchor: Vec<f64>,
    pub relation: Vec<f64>,
    pub normal: Option<Vec<f64>>,
    pub kink: bool,
}

enum Prepared {
    /// score(x) = q · x
    Dot(Vec<f64>),
    /// score(x) = -N(t - P(x))
    Distance(Vec<f64>),
    /// ConvE tail query: score(x) = hidden · x
    Conv(ConvForward),
    /// ConvE head query: every candidate subject runs its own forward pass.
    ConvHead,
}

/// A prepared one-directional query that scores candidate entities in one sweep.
pub struct Query<'a> {
    params: &'a ModelParams,
    dir: Direction,
    vecs: QueryVectors,
    prepared: Prepared,
}

impl<'a> Query<'a> {
    pub fn new(params: &'a ModelParams, dir: Direction, vecs: QueryVectors) -> Self {
        let a = &vecs.anchor;
        let r = &vecs.relation;
        let prepared = match (params.kind(), dir) {
            (ModelKind::TransE, Direction::Tail) => Prepared::Distance(add(a, r, 1.0)),
            (ModelKind::TransE, Direction::Head) => Prepared::Distance(add(a, r, -1.0)),
            (ModelKind::TransH, _) => {
                let w = vecs.normal.as_deref().expect("TransH query needs a normal");
                let sign = if dir == Direction::Tail { 1.0 } else { -1.0 };
                Prepared::Distance(add(&project(a, w), r, sign))
            }
            (ModelKind::RotatE, Direction::Tail) => Prepared::Distance(rotate(a, r, 1.0)),
            (ModelKind::RotatE, Direction::Head) => Prepared::Distance(rotate(a, r, -1.0)),
            (ModelKind::DistMult, _) => Prepared::Dot(a.iter().zip(r).map(|(x, y)| x * y).collect()),
            (ModelKind::ComplEx, Direction::Tail) => Prepared::Dot(complex_tail_query(a, r)),
            (ModelKind::ComplEx, Direction::Head) => Prepared::Dot(complex_head_query(a, r)),
            (ModelKind::ConvE, Direction::Tail) => Prepared::Conv(conv_of(params).forward(a, r)),
            (ModelKind::ConvE, Direction::Head) => Prepared::ConvHead,
        };
        Query {
            params,
            dir,
            vecs,
            prepared,
        }
    }

    pub fn direction(&self) -> Direction {
        self.dir
    }

    /// Scores for the candidates, in candidate order.
    pub fn scores(&self, candidates: Candidates<'_>) -> Vec<f64> {
        let params = self.params;
        match (&self.prepared, candidates) {
            (Prepared::Dot(q), Candidates::All) => params.entities.dot(&ArrayView1::from(q)).to_vec(),
            (Prepared::Conv(fwd), Candidates::All) => params.entities.dot(&ArrayView1::from(&fwd.hidden)).to_vec(),
            _ => {
                let n = match candidates {
                    Candidates::All => params.num_entities(),
                    Candidates::Subset(ids) => ids.len(),
                };
                let mut out = Vec::with_capacity(n);
                let mut scratch = Vec::new();
                candidates.for_each(params.num_entities(), |_, e| {
                    out.push(self.score_one(e, &mut scratch));
                });
                out
            }
        }
    }

    fn score_one(&self, e: u32, scratch: &mut Vec<f64>) -> f64 {
        let x = self.params.entity(e);
        match &self.prepared {
            Prepared::Dot(q) => dot(q, x),
            Prepared::Conv(fwd) => dot(&fwd.hidden, x),
            Prepared::Distance(t) => {
                residual(t, x, self.vecs.normal.as_deref(), self.kind(), scratch);
                -norm_value(scratch, self.params.spec.norm, self.params.kind().is_complex())
            }
            Prepared::ConvHead => {
                let fwd = conv_of(self.params).forward(x, &self.vecs.relation);
                dot(&fwd.hidden, &self.vecs.anchor)
            }
        }
    }

    fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    /// Backpropagates `Σ_i coeffs[i] · score(candidate_i)`.
    ///
    /// Candidate entity gradients and ConvE weight gradients go to `sink`; gradients of
    /// the query's own embeddings are returned.
    pub fn backward<S: GradSink + ?Sized>(
        &self,
        candidates: Candidates<'_>,
        coeffs: &[f64],
        sink: &mut S,
    ) -> QueryGrad {
        let params = self.params;
        let kind = params.kind();
        let a = &self.vecs.anchor;
        let r = &self.vecs.relation;
        let ew = params.spec.entity_width();
        let mut da = vec![0.0; a.len()];
        let mut dr = vec![0.0; r.len()];
        let mut dw = self.vecs.normal.as_ref().map(|w| vec![0.0; w.len()]);
        let mut kink = false;

        match &self.prepared {
            Prepared::Dot(q) | Prepared::Conv(ConvForward { hidden: q, .. }) => {
                let mut dq = vec![0.0; q.len()];
                candidates.for_each(params.num_entities(), |i, e| {
                    let c = coeffs[i];
                    if c == 0.0 {
                        return;
                    }
                    axpy(c, params.entity(e), &mut dq);
                    axpy(c, q, sink.entity_row(e, ew));
                });
                match (&self.prepared, kind, self.dir) {
                    (Prepared::Conv(fwd), _, _) => {
                        let (ga, gr) = conv_of(params).backward(fwd, &dq, sink);
                        da = ga;
                        dr = gr;
                        kink = fwd.kink;
                    }
                    (_, ModelKind::DistMult, _) => {
                        for k in 0..dq.len() {
                            da[k] = dq[k] * r[k];
                            dr[k] = dq[k] * a[k];
                        }
                    }
                    (_, ModelKind::ComplEx, Direction::Tail) => complex_tail_backward(a, r, &dq, &mut da, &mut dr),
                    (_, ModelKind::ComplEx, Direction::Head) => complex_head_backward(a, r, &dq, &mut da, &mut dr),
                    _ => unreachable!("dot query for a distance model"),
                }
            }
            Prepared::Distance(t) => {
                let w = self.vecs.normal.as_deref();
                let norm = params.spec.norm;
                let complex = kind.is_complex();
                let mut dt = vec![0.0; t.len()];
                let mut z = Vec::new();
                let mut gz = vec![0.0; t.len()];
                candidates.for_each(params.num_entities(), |i, e| {
                    let c = coeffs[i];
                    if c == 0.0 {
                        return;
                    }
                    let x = params.entity(e);
                    residual(t, x, w, kind, &mut z);
                    kink |= norm_grad(&z, norm, complex, &mut gz);
                    // dL/dz = -c ∇N(z); dL/dt += dL/dz; dL/dP(x) = -dL/dz
                    for k in 0..gz.len() {
                        gz[k] *= -c;
                        dt[k] += gz[k];
                    }
                    let row = sink.entity_row(e, ew);
                    match (w, dw.as_mut()) {
                        (Some(w), Some(dw)) => {
                            // P(x) = x - (w·x) w with upstream u = -gz
                            let wu = -dot(w, &gz);
                            let wx = dot(w, x);
                            for k in 0..gz.len() {
                                let u = -gz[k];
                                row[k] += u - wu * w[k];
                                dw[k] -= wu * x[k] + wx * u;
                            }
                        }
                        _ => axpy(-1.0, &gz, row),
                    }
                });
                let sign = if self.dir == Direction::Tail { 1.0 } else { -1.0 };
                match kind {
                    ModelKind::TransE => {
                        da.copy_from_slice(&dt);
                        for k in 0..dt.len() {
                            dr[k] = sign * dt[k];
                        }
                    }
                    ModelKind::TransH => {
                        let w = w.expect("TransH query needs a normal");
                        let dw = dw.as_mut().expect("TransH query needs a normal");
                        let wd = dot(w, &dt);
                        let wa = dot(w, a);
                        for k in 0..dt.len() {
                            dr[k] = sign * dt[k];
                            da[k] = dt[k] - wd * w[k];
                            dw[k] -= wd * a[k] + wa * dt[k];
                        }
                    }
                    ModelKind::RotatE => rotate_backward(r, t, &dt, sign, &mut da, &mut dr),
                    _ => unreachable!("distance query for a dot model"),
                }
            }
            Prepared::ConvHead => {
                let conv = conv_of(params);
                candidates.for_each(params.num_entities(), |i, e| {
                    let c = coeffs[i];
                    if c == 0.0 {
                        return;
                    }
                    let fwd = conv.forward(params.entity(e), r);
                    kink |= fwd.kink;
                    axpy(c, &fwd.hidden, &mut da);
                    let dh: Vec<f64> = a.iter().map(|x| c * x).collect();
                    let (gx, gr) = conv.backward(&fwd, &dh, sink);
                    axpy(1.0, &gx, sink.entity_row(e, ew));
                    axpy(1.0, &gr, &mut dr);
                });
            }
        }
        QueryGrad {
            anchor: da,
            relation: dr,
            normal: dw,
            kink,
        }
    }
}

fn conv_of(params: &ModelParams) -> &super::ConvParams {
    params.conv.as_ref().expect("ConvE parameters present")
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn add(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + sign * y).collect()
}

fn project(x: &[f64], w: &[f64]) -> Vec<f64> {
    let wx = dot(w, x);
    x.iter().zip(w).map(|(xi, wi)| xi - wx * wi).collect()
}

/// `z = t - P(x)` where `P` is the TransH projection or the identity.
fn residual(t: &[f64], x: &[f64], w: Option<&[f64]>, kind: ModelKind, z: &mut Vec<f64>) {
    z.clear();
    match (kind, w) {
        (ModelKind::TransH, Some(w)) => {
            let wx = dot(w, x);
            z.extend(t.iter().zip(x).zip(w).map(|((ti, xi), wi)| ti - (xi - wx * wi)));
        }
        _ => z.extend(t.iter().zip(x).map(|(ti, xi)| ti - xi)),
    }
}

fn norm_value(z: &[f64], norm: Norm, complex: bool) -> f64 {
    match (norm, complex) {
        (Norm::L2, _) => z.iter().map(|v| v * v).sum::<f64>().sqrt(),
        (Norm::L1, false) => z.iter().map(|v| v.abs()).sum(),
        (Norm::L1, true) => z.chunks_exact(2).map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt()).sum(),
    }
}

/// Writes ∇N(z) into `g`; returns whether z is within tolerance of a kink.
/// Exactly nondifferentiable coordinates get a zero subgradient.
fn norm_grad(z: &[f64], norm: Norm, complex: bool, g: &mut Vec<f64>) -> bool {
    g.clear();
    g.resize(z.len(), 0.0);
    match (norm, complex) {
        (Norm::L2, _) => {
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                for (gi, zi) in g.iter_mut().zip(z) {
                    *gi = zi / n;
                }
            }
            n < KINK_TOLERANCE
        }
        (Norm::L1, false) => {
            let mut kink = false;
            for (gi, &zi) in g.iter_mut().zip(z) {
                kink |= zi.abs() < KINK_TOLERANCE;
                *gi = if zi > 0.0 {
                    1.0
                } else if zi < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
            kink
        }
        (Norm::L1, true) => {
            let mut kink = false;
            for (gc, zc) in g.chunks_exact_mut(2).zip(z.chunks_exact(2)) {
                let m = (zc[0] * zc[0] + zc[1] * zc[1]).sqrt();
                kink |= m < KINK_TOLERANCE;
                if m > 0.0 {
                    gc[0] = zc[0] / m;
                    gc[1] = zc[1] / m;
                }
            }
            kink
        }
    }
}

/// `a ∘ exp(i·sign·θ)` on interleaved complex `a`.
fn rotate(a: &[f64], phases: &[f64], sign: f64) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for (k, &theta) in phases.iter().enumerate() {
        let (s, c) = (sign * theta).sin_cos();
        let (re, im) = (a[2 * k], a[2 * k + 1]);
        out[2 * k] = re * c - im * s;
        out[2 * k + 1] = re * s + im * c;
    }
    out
}

fn rotate_backward(phases: &[f64], t: &[f64], dt: &[f64], sign: f64, da: &mut [f64], dtheta: &mut [f64]) {
    for (k, &theta) in phases.iter().enumerate() {
        let (s, c) = (sign * theta).sin_cos();
        let (g_re, g_im) = (dt[2 * k], dt[2 * k + 1]);
        da[2 * k] = g_re * c + g_im * s;
        da[2 * k + 1] = -g_re * s + g_im * c;
        // dt_re/dθ = -sign·t_im, dt_im/dθ = sign·t_re
        dtheta[k] = sign * (-g_re * t[2 * k + 1] + g_im * t[2 * k]);
    }
}

/// Interleaved `a · r`; tail score is the real dot of this with `e_o`.
fn complex_tail_query(a: &[f64], r: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; a.len()];
    for k in 0..a.len() / 2 {
        let (ar, ai, rr, ri) = (a[2 * k], a[2 * k + 1], r[2 * k], r[2 * k + 1]);
        q[2 * k] = ar * rr - ai * ri;
        q[2 * k + 1] = ar * ri + ai * rr;
    }
    q
}

fn complex_tail_backward(a: &[f64], r: &[f64], dq: &[f64], da: &mut [f64], dr: &mut [f64]) {
    for k in 0..a.len() / 2 {
        let (ar, ai, rr, ri) = (a[2 * k], a[2 * k + 1], r[2 * k], r[2 * k + 1]);
        let (gr, gi) = (dq[2 * k], dq[2 * k + 1]);
        da[2 * k] = gr * rr + gi * ri;
        da[2 * k + 1] = -gr * ri + gi * rr;
        dr[2 * k] = gr * ar + gi * ai;
        dr[2 * k + 1] = -gr * ai + gi * ar;
    }
}

/// For head queries `Re(x · r · conj(a)) = x · q` with `q = (Re u, -Im u)`, `u = r · conj(a)`.
fn complex_head_query(a: &[f64], r: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; a.len()];
    for k in 0..a.len() / 2 {
        let (ar, ai, rr, ri) = (a[2 * k], a[2 * k + 1], r[2 * k], r[2 * k + 1]);
        q[2 * k] = rr * ar + ri * ai;
        q[2 * k + 1] = rr * ai - ri * ar;
    }
    q
}

fn complex_head_backward(a: &[f64], r: &[f64], dq: &[f64], da: &mut [f64], dr: &mut [f64]) {
    for k in 0..a.len() / 2 {
        let (ar, ai, rr, ri) = (a[2 * k], a[2 * k + 1], r[2 * k], r[2 * k + 1]);
        let (gr, gi) = (dq[2 * k], dq[2 * k + 1]);
        da[2 * k] = gr * rr - gi * ri;
        da[2 * k + 1] = gr * ri + gi * rr;
        dr[2 * k] = gr * ar + gi * ai;
        dr[2 * k + 1] = gr * ai - gi * ar;
    }
}

/// Scores every entity in `dir` for `(anchor, relation)` using the given relation row as is.
pub fn score_all(params: &ModelParams, anchor: u32, relation: u32, dir: Direction) -> Result<Vec<f64>> {
    params.check_entity(anchor)?;
    params.check_relation(relation)?;
    let query = Query::new(params, dir, QueryVectors::lookup(params, anchor, relation));
    Ok(query.scores(Candidates::All))
}

pub fn score(params: &ModelParams, s: u32, p: u32, o: u32) -> Result<f64> {
    params.check_entity(s)?;
    params.check_entity(o)?;
    params.check_relation(p)?;
    let query = Query::new(params, Direction::Tail, QueryVectors::lookup(params, s, p));
    Ok(query.scores(Candidates::Subset(&[o]))[0])
}

/// Scores of `(s, p, x)` for every entity `x`.
pub fn score_all_objects(params: &ModelParams, s: u32, p: u32) -> Result<Vec<f64>> {
    score_all(params, s, p, Direction::Tail)
}

/// Scores of `(x, p, o)` for every entity `x`; models with reciprocal relations
/// answer this as the tail query `(o, p_inv, ·)`.
pub fn score_all_subjects(params: &ModelParams, p: u32, o: u32) -> Result<Vec<f64>> {
    params.check_relation(p)?;
    match params.inverse_relation(p) {
        Some(inv) => score_all(params, o, inv, Direction::Tail),
        None => score_all(params, o, p, Direction::Head),
    }
}

/// Gradient of `score(s, p, o)` w.r.t. every parameter it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub subject: Vec<f64>,
    pub relation: Vec<f64>,
    pub object: Vec<f64>,
    pub normal: Option<Vec<f64>>,
    pub conv_filters: Option<Vec<f64>>,
    pub conv_projection: Option<Vec<f64>>,
    /// Set when the point is within [`KINK_TOLERANCE`] of a nondifferentiable point;
    /// exact kinks carry a zero subgradient.
    pub nondifferentiable: bool,
}

pub fn score_gradients(params: &ModelParams, s: u32, p: u32, o: u32) -> Result<ScoreGradients> {
    params.check_entity(s)?;
    params.check_entity(o)?;
    params.check_relation(p)?;
    let query = Query::new(params, Direction::Tail, QueryVectors::lookup(params, s, p));
    let mut sink = SparseGrads::default();
    let grad = query.backward(Candidates::Subset(&[o]), &[1.0], &mut sink);
    let object = sink
        .entities
        .remove(&o)
        .unwrap_or_else(|| vec![0.0; params.spec.entity_width()]);
    let is_conv = params.kind() == ModelKind::ConvE;
    Ok(ScoreGradients {
        subject: grad.anchor,
        relation: grad.relation,
        object,
        normal: grad.normal,
        conv_filters: is_conv.then_some(sink.conv_filters),
        conv_projection: is_conv.then_some(sink.conv_projection),
        nondifferentiable: grad.kink,
    })
}
