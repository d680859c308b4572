use std::collections::HashMap;

use crate::model::ModelParams;

/// Which embedding table a gradient row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamTable {
    User,
    Item,
    Word,
    SlotPos,
    SlotNeg,
    Value,
}

/// Gradient over the rows an example (or batch) touched, plus the dense
/// query projection when a query was involved.
#[derive(Debug, Clone)]
pub struct SparseGrads {
    dim: usize,
    index: HashMap<(ParamTable, u32), usize>,
    keys: Vec<(ParamTable, u32)>,
    data: Vec<f64>,
    proj_weight: Vec<f64>,
    proj_bias: Vec<f64>,
    proj_touched: bool,
}

impl SparseGrads {
    pub fn new(dim: usize) -> Self {
        SparseGrads {
            dim,
            index: HashMap::new(),
            keys: Vec::new(),
            data: Vec::new(),
            proj_weight: vec![0.0; dim * dim],
            proj_bias: vec![0.0; dim],
            proj_touched: false,
        }
    }

    pub fn clear(&mut self) {
        self.index.clear();
        self.keys.clear();
        self.data.clear();
        if self.proj_touched {
            self.proj_weight.iter_mut().for_each(|x| *x = 0.0);
            self.proj_bias.iter_mut().for_each(|x| *x = 0.0);
            self.proj_touched = false;
        }
    }

    pub fn row_mut(&mut self, table: ParamTable, row: u32) -> &mut [f64] {
        let dim = self.dim;
        let slot = match self.index.get(&(table, row)) {
            Some(&s) => s,
            None => {
                let s = self.keys.len();
                self.index.insert((table, row), s);
                self.keys.push((table, row));
                self.data.resize(self.data.len() + dim, 0.0);
                s
            }
        };
        &mut self.data[slot * dim..(slot + 1) * dim]
    }

    pub(crate) fn add_row(&mut self, table: ParamTable, row: u32, scale: f64, v: &[f64]) {
        for (g, x) in self.row_mut(table, row).iter_mut().zip(v) {
            *g += scale * x;
        }
    }

    pub fn row(&self, table: ParamTable, row: u32) -> Option<&[f64]> {
        self.index
            .get(&(table, row))
            .map(|&s| &self.data[s * self.dim..(s + 1) * self.dim])
    }

    /// Touched rows in first-touch order.
    pub fn rows(&self) -> impl Iterator<Item = ((ParamTable, u32), &[f64])> {
        self.keys
            .iter()
            .enumerate()
            .map(|(s, &k)| (k, &self.data[s * self.dim..(s + 1) * self.dim]))
    }

    pub fn num_rows(&self) -> usize {
        self.keys.len()
    }

    pub(crate) fn proj_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        self.proj_touched = true;
        (&mut self.proj_weight, &mut self.proj_bias)
    }

    /// `(W, b)` gradients if a query was involved.
    pub fn proj(&self) -> Option<(&[f64], &[f64])> {
        self.proj_touched
            .then_some((self.proj_weight.as_slice(), self.proj_bias.as_slice()))
    }

    /// Global L2 norm over every touched entry.
    pub fn norm(&self) -> f64 {
        let mut sq: f64 = self.data.iter().map(|x| x * x).sum();
        if self.proj_touched {
            sq += self.proj_weight.iter().map(|x| x * x).sum::<f64>();
            sq += self.proj_bias.iter().map(|x| x * x).sum::<f64>();
        }
        sq.sqrt()
    }

    pub fn scale(&mut self, f: f64) {
        self.data.iter_mut().for_each(|x| *x *= f);
        if self.proj_touched {
            self.proj_weight.iter_mut().for_each(|x| *x *= f);
            self.proj_bias.iter_mut().for_each(|x| *x *= f);
        }
    }
}

/// Rescales `grads` to norm `clip_norm` if its global norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_global(grads: &mut SparseGrads, clip_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    norm
}

pub(crate) fn table_mut(params: &mut ModelParams, t: ParamTable) -> &mut crate::model::Embedding {
    match t {
        ParamTable::User => &mut params.user_emb,
        ParamTable::Item => &mut params.item_emb,
        ParamTable::Word => &mut params.word_emb,
        ParamTable::SlotPos => &mut params.slot_pos_emb,
        ParamTable::SlotNeg => &mut params.slot_neg_emb,
        ParamTable::Value => &mut params.value_emb,
    }
}

/// One descent step: every touched embedding row moves by
/// `-lr (g + 2 γ row)`; the projection moves by `-lr g` (not regularized).
pub fn apply_step(params: &mut ModelParams, grads: &SparseGrads, lr: f64, l2_gamma: f64) {
    for ((table, row), g) in grads.rows() {
        let r = table_mut(params, table).row_mut(row as usize);
        for (x, gi) in r.iter_mut().zip(g) {
            *x -= lr * (gi + 2.0 * l2_gamma * *x);
        }
    }
    if let Some((gw, gb)) = grads.proj() {
        for (x, g) in params.proj_weight.iter_mut().zip(gw) {
            *x -= lr * g;
        }
        for (x, g) in params.proj_bias.iter_mut().zip(gb) {
            *x -= lr * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_leaves_norm_five_alone() {
        let mut g = SparseGrads::new(2);
        g.row_mut(ParamTable::User, 0).copy_from_slice(&[3.0, 4.0]);
        assert_eq!(clip_global(&mut g, 5.0), 5.0);
        assert_eq!(g.row(ParamTable::User, 0).unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn clip_scales_down() {
        let mut g = SparseGrads::new(2);
        g.row_mut(ParamTable::Item, 3).copy_from_slice(&[6.0, 8.0]);
        clip_global(&mut g, 5.0);
        let r = g.row(ParamTable::Item, 3).unwrap();
        assert!((r[0] - 3.0).abs() < 1e-12 && (r[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn clip_zero_gradient() {
        let mut g = SparseGrads::new(3);
        g.row_mut(ParamTable::Word, 1);
        clip_global(&mut g, 5.0);
        assert_eq!(g.row(ParamTable::Word, 1).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn clip_is_global_across_rows_and_projection() {
        let mut g = SparseGrads::new(1);
        g.row_mut(ParamTable::User, 0)[0] = 3.0;
        let (_, b) = g.proj_mut();
        b[0] = 4.0;
        assert_eq!(g.norm(), 5.0);
        clip_global(&mut g, 1.0);
        assert!((g.norm() - 1.0).abs() < 1e-12);
        assert!((g.row(ParamTable::User, 0).unwrap()[0] - 0.6).abs() < 1e-12);
    }
}
