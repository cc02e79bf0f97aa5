use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::models::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adagrad,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
        }
    }
}

const ADAGRAD_EPS: f64 = 1e-10;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Per-parameter state of one table: Adagrad's squared-gradient sum, or Adam's moments.
#[derive(Debug, Clone)]
struct Slots {
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Slots {
    fn new(len: usize, kind: OptimizerKind) -> Self {
        Slots {
            first: match kind {
                OptimizerKind::Adagrad => Vec::new(),
                OptimizerKind::Adam => vec![0.0; len],
            },
            second: vec![0.0; len],
        }
    }
}

/// Sparse-row optimizer: only rows with gradients are updated, and only their state
/// advances (lazy Adam with a global step count for bias correction).
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    step: u64,
    entities: Slots,
    relations: Slots,
    normals: Option<Slots>,
    filters: Option<Slots>,
    projection: Option<Slots>,
}

/// Selects one parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Table {
    Entities,
    Relations,
    Normals,
    Filters,
    Projection,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ModelParams) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            entities: Slots::new(params.entities.len(), kind),
            relations: Slots::new(params.relations.len(), kind),
            normals: params.normals.as_ref().map(|n| Slots::new(n.len(), kind)),
            filters: params.conv.as_ref().map(|c| Slots::new(c.filter_bank.len(), kind)),
            projection: params.conv.as_ref().map(|c| Slots::new(c.projection.len(), kind)),
        }
    }

    /// Starts a new step; call once per batch before [`Optimizer::update`].
    pub(crate) fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies `grad` to `values`, where both are the flat slice starting at `offset`
    /// within `table`.
    pub(crate) fn update(&mut self, table: Table, offset: usize, values: &mut [f64], grad: &[f64]) {
        let (kind, lr, step) = (self.kind, self.lr, self.step);
        let slots = match table {
            Table::Entities => &mut self.entities,
            Table::Relations => &mut self.relations,
            Table::Normals => self.normals.as_mut().expect("normals state"),
            Table::Filters => self.filters.as_mut().expect("filter state"),
            Table::Projection => self.projection.as_mut().expect("projection state"),
        };
        let range = offset..offset + values.len();
        match kind {
            OptimizerKind::Adagrad => {
                for ((x, &g), acc) in values.iter_mut().zip(grad).zip(&mut slots.second[range]) {
                    *acc += g * g;
                    *x -= lr * g / (acc.sqrt() + ADAGRAD_EPS);
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(step as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(step as i32);
                let m = &mut slots.first[range.clone()];
                let v = &mut slots.second[range];
                for (((x, &g), m), v) in values.iter_mut().zip(grad).zip(m).zip(v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *x -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }

    /// Row `r` of a row-major table with `width` columns.
    pub(crate) fn update_row(&mut self, table: Table, array: &mut Array2<f64>, r: usize, grad: &[f64]) {
        let width = array.ncols();
        let mut row = array.row_mut(r);
        let values = row.as_slice_mut().expect("standard layout");
        self.update(table, r * width, values, grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, InitSpec, ModelKind, ModelSpec};

    fn params() -> ModelParams {
        init_params(&ModelSpec::new(ModelKind::DistMult, 2), 3, 1, &InitSpec::default(), 0).unwrap()
    }

    #[test]
    fn adagrad_first_step_moves_by_lr() {
        let mut p = params();
        let mut opt = Optimizer::new(OptimizerKind::Adagrad, 0.1, &p);
        opt.begin_step();
        let before = p.entities.row(1).to_vec();
        opt.update_row(Table::Entities, &mut p.entities, 1, &[2.0, -0.5]);
        assert!((p.entities[[1, 0]] - (before[0] - 0.1)).abs() < 1e-9);
        assert!((p.entities[[1, 1]] - (before[1] + 0.1)).abs() < 1e-9);
        // second step with the same gradient moves by lr / sqrt(2)
        opt.begin_step();
        opt.update_row(Table::Entities, &mut p.entities, 1, &[2.0, -0.5]);
        let moved = before[0] - 0.1 - p.entities[[1, 0]];
        assert!((moved - 0.1 / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = params();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, &p);
        opt.begin_step();
        let before = p.entities[[0, 0]];
        opt.update_row(Table::Entities, &mut p.entities, 0, &[5.0, 0.0]);
        assert!((before - p.entities[[0, 0]] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn untouched_rows_stay_put() {
        let mut p = params();
        let before = p.clone();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, &p);
        opt.begin_step();
        opt.update_row(Table::Entities, &mut p.entities, 2, &[1.0, 1.0]);
        assert_eq!(p.entities.row(0), before.entities.row(0));
        assert_eq!(p.entities.row(1), before.entities.row(1));
    }
}
