//! Embedding models: parameter tables, initialization and the six scoring functions.
//!
//! | Kind     | Domain | Score                                        |
//! |----------|--------|----------------------------------------------|
//! | TransE   | R^d    | -‖e_s + r_p − e_o‖                            |
//! | TransH   | R^d    | -‖P_p(e_s) + r_p − P_p(e_o)‖, P_p(x) = x − (w_pᵀx) w_p |
//! | RotatE   | C^d    | -‖e_s ∘ r_p − e_o‖, r_p = exp(iθ_p)          |
//! | DistMult | R^d    | ⟨e_s, r_p, e_o⟩                              |
//! | ComplEx  | C^d    | Re⟨e_s, r_p, conj(e_o)⟩                      |
//! | ConvE    | R^d    | g(vec(g([e_s; r_p] ∗ w)) W) · e_o            |
//!
//! Complex embeddings of dimension `d` are stored as `2d` interleaved reals
//! `(re_0, im_0, re_1, im_1, ...)`. RotatE relations are stored as `d` phase angles.

mod conve;
mod init;
mod scoring;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use conve::{conve_shape, ConvParams};
pub use init::{init_params, xavier_normal_std, xavier_uniform_bound, InitFamily, InitSpec};
pub use scoring::{
    score, score_all, score_all_objects, score_all_subjects, score_gradients, Candidates, Direction, GradSink, Query,
    QueryGrad, QueryVectors, ScoreGradients, SparseGrads, KINK_TOLERANCE,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    TransE,
    TransH,
    RotatE,
    DistMult,
    ComplEx,
    ConvE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::TransE,
        ModelKind::TransH,
        ModelKind::RotatE,
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::ConvE,
    ];

    /// Complex-domain models store two reals per embedding dimension.
    pub fn is_complex(self) -> bool {
        matches!(self, ModelKind::RotatE | ModelKind::ComplEx)
    }

    pub fn uses_norm(self) -> bool {
        matches!(self, ModelKind::TransE | ModelKind::TransH | ModelKind::RotatE)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::TransH => "transh",
            ModelKind::RotatE => "rotate",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::ConvE => "conve",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            ModelKind::TransE => 1,
            ModelKind::TransH => 2,
            ModelKind::RotatE => 3,
            ModelKind::DistMult => 4,
            ModelKind::ComplEx => 5,
            ModelKind::ConvE => 6,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Norm {
    L1,
    #[default]
    L2,
}

/// Shape-determining model choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dim: usize,
    pub norm: Norm,
    /// Relation table holds `2 × base` rows, the second half being inverse relations.
    pub reciprocal: bool,
    pub conv_filters: usize,
    pub conv_kernel: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, dim: usize) -> Self {
        ModelSpec {
            kind,
            dim,
            norm: Norm::L2,
            reciprocal: false,
            conv_filters: 32,
            conv_kernel: 3,
        }
    }

    pub fn with_reciprocal(mut self, reciprocal: bool) -> Self {
        self.reciprocal = reciprocal;
        self
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn entity_width(&self) -> usize {
        if self.kind.is_complex() {
            2 * self.dim
        } else {
            self.dim
        }
    }

    pub fn relation_width(&self) -> usize {
        if self.kind == ModelKind::ComplEx {
            2 * self.dim
        } else {
            self.dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if self.kind.is_complex() && self.dim % 2 == 1 {
            return Err(Error::Config(format!(
                "{} needs an even embedding size, got {}",
                self.kind, self.dim
            )));
        }
        if self.kind == ModelKind::ConvE
            && (self.conv_filters == 0 || self.conv_kernel == 0 || self.conv_kernel.is_multiple_of(2))
        {
            return Err(Error::Config(
                "ConvE needs at least one filter and an odd kernel size".into(),
            ));
        }
        Ok(())
    }
}

/// Parameter bundle for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    /// Relation count without inverse relations.
    pub base_relations: usize,
    pub entities: Array2<f64>,
    pub relations: Array2<f64>,
    /// TransH hyperplane normals, one unit vector per relation row.
    pub normals: Option<Array2<f64>>,
    pub conv: Option<ConvParams>,
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn num_entities(&self) -> usize {
        self.entities.nrows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.nrows()
    }

    pub fn reciprocal(&self) -> bool {
        self.spec.reciprocal
    }

    /// Relation row used for head prediction of `p` when reciprocal relations exist.
    pub fn inverse_relation(&self, p: u32) -> Option<u32> {
        self.spec.reciprocal.then(|| p + self.base_relations as u32)
    }

    pub fn entity(&self, e: u32) -> &[f64] {
        self.entities
            .row(e as usize)
            .to_slice()
            .expect("entity table is contiguous")
    }

    pub fn relation(&self, p: u32) -> &[f64] {
        self.relations
            .row(p as usize)
            .to_slice()
            .expect("relation table is contiguous")
    }

    pub fn normal(&self, p: u32) -> Option<&[f64]> {
        self.normals
            .as_ref()
            .map(|n| n.row(p as usize).to_slice().expect("normal table is contiguous"))
    }

    pub fn check_entity(&self, e: u32) -> Result<()> {
        if (e as usize) < self.num_entities() {
            Ok(())
        } else {
            Err(Error::Lookup(format!(
                "entity id {e} out of range ({} entities)",
                self.num_entities()
            )))
        }
    }

    pub fn check_relation(&self, p: u32) -> Result<()> {
        if (p as usize) < self.num_relations() {
            Ok(())
        } else {
            Err(Error::Lookup(format!(
                "relation id {p} out of range ({} relations)",
                self.num_relations()
            )))
        }
    }

    /// Rescales every TransH normal to unit length.
    pub fn renormalize(&mut self) {
        if let Some(normals) = self.normals.as_mut() {
            for mut row in normals.rows_mut() {
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row.mapv_inplace(|x| x / norm);
                } else {
                    row[0] = 1.0;
                }
            }
        }
    }
}
