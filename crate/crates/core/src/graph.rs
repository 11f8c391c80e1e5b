//! Symmetric-normalized user-item adjacency and single-layer propagation.
//!
//! The stacked operator over users ∪ items is
//!
//! ```text
//! Ã = [ 0   R ]      R[u, i] = 1 / sqrt(|N_u| · |N_i|)  for each train edge
//!     [ Rᵀ  0 ]
//! ```
//!
//! which is symmetric, so the same `propagate` serves as its own adjoint
//! during encoder backpropagation.

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::table::{axpy, Table};

/// Compressed rows of one side of the bipartite graph.
#[derive(Debug, Clone, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Csr {
    fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.targets[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// `out[r] = Σ_t w(r, t) · input[t]` for every row.
    fn apply(&self, input: &Table, out: &mut Table) {
        for r in 0..self.offsets.len() - 1 {
            let dst = out.row_mut(r);
            dst.fill(0.0);
            for (t, w) in self.row(r) {
                axpy(w, input.row(t), dst);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBipartiteGraph {
    user_degrees: Vec<usize>,
    item_degrees: Vec<usize>,
    user_to_item: Csr,
    item_to_user: Csr,
}

impl NormalizedBipartiteGraph {
    /// Builds the normalized adjacency from the train split. Zero-degree
    /// nodes get no edges.
    pub fn build(dataset: &InteractionDataset) -> Self {
        let (nu, ni) = (dataset.num_users(), dataset.num_items());
        let user_degrees: Vec<usize> = (0..nu).map(|u| dataset.train_positives(u).len()).collect();
        let mut item_degrees = vec![0usize; ni];
        for u in 0..nu {
            for &i in dataset.train_positives(u) {
                item_degrees[i] += 1;
            }
        }
        let weight = |u: usize, i: usize| 1.0 / ((user_degrees[u] as f64) * (item_degrees[i] as f64)).sqrt();

        let mut offsets = Vec::with_capacity(nu + 1);
        let mut targets = Vec::with_capacity(dataset.num_train_interactions());
        let mut weights = Vec::with_capacity(dataset.num_train_interactions());
        offsets.push(0);
        for u in 0..nu {
            for &i in dataset.train_positives(u) {
                targets.push(i);
                weights.push(weight(u, i));
            }
            offsets.push(targets.len());
        }
        let user_to_item = Csr {
            offsets,
            targets,
            weights,
        };

        // transpose by counting sort on item id; users stay ascending per row
        let mut offsets = vec![0usize; ni + 1];
        for i in 0..ni {
            offsets[i + 1] = offsets[i] + item_degrees[i];
        }
        let mut cursor = offsets.clone();
        let nnz = user_to_item.targets.len();
        let mut targets = vec![0usize; nnz];
        let mut weights = vec![0.0; nnz];
        for u in 0..nu {
            for (i, w) in user_to_item.row(u) {
                targets[cursor[i]] = u;
                weights[cursor[i]] = w;
                cursor[i] += 1;
            }
        }
        let item_to_user = Csr {
            offsets,
            targets,
            weights,
        };

        Self {
            user_degrees,
            item_degrees,
            user_to_item,
            item_to_user,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_degrees.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_degrees.len()
    }

    pub fn num_edges(&self) -> usize {
        self.user_to_item.targets.len()
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_degrees[u]
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.item_degrees[i]
    }

    /// Weighted neighbours of user `u`.
    pub fn user_edges(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.user_to_item.row(u)
    }

    /// Weighted neighbours of item `i`.
    pub fn item_edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.item_to_user.row(i)
    }

    /// One aggregation layer:
    /// `user'[u] = Σ_{i∈N_u} w(u,i)·item[i]`, `item'[i] = Σ_{u∈N_i} w(u,i)·user[u]`.
    pub fn propagate(&self, user_vecs: &Table, item_vecs: &Table) -> Result<(Table, Table)> {
        self.check_shapes(user_vecs, item_vecs)?;
        let mut users = Table::zeros(self.num_users(), user_vecs.dim());
        let mut items = Table::zeros(self.num_items(), item_vecs.dim());
        self.user_to_item.apply(item_vecs, &mut users);
        self.item_to_user.apply(user_vecs, &mut items);
        Ok((users, items))
    }

    fn check_shapes(&self, user_vecs: &Table, item_vecs: &Table) -> Result<()> {
        if user_vecs.rows() != self.num_users() || item_vecs.rows() != self.num_items() {
            return Err(Error::Shape(format!(
                "graph has {} users / {} items, got {} / {} rows",
                self.num_users(),
                self.num_items(),
                user_vecs.rows(),
                item_vecs.rows()
            )));
        }
        if user_vecs.dim() != item_vecs.dim() {
            return Err(Error::Shape(format!(
                "user dim {} != item dim {}",
                user_vecs.dim(),
                item_vecs.dim()
            )));
        }
        Ok(())
    }
}
