use std::collections::{BTreeMap, BTreeSet};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, insertion-ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.tensors[i] = tensor;
            return ParamId(i);
        }
        let i = self.tensors.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(i)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[derive(Debug, Clone, Default)]
enum Slot {
    #[default]
    Empty,
    Dense(Tensor),
    Sparse(Tensor, BTreeSet<usize>),
}

impl Slot {
    fn tensor(&self) -> Option<&Tensor> {
        match self {
            Slot::Empty => None,
            Slot::Dense(t) | Slot::Sparse(t, _) => Some(t),
        }
    }

    fn tensor_mut(&mut self) -> Option<&mut Tensor> {
        match self {
            Slot::Empty => None,
            Slot::Dense(t) | Slot::Sparse(t, _) => Some(t),
        }
    }

    fn merge(&mut self, other: &Slot) {
        let taken = std::mem::take(self);
        *self = match (taken, other) {
            (s, Slot::Empty) => s,
            (Slot::Empty, o) => o.clone(),
            (Slot::Sparse(mut t, mut rows), Slot::Sparse(o, orows)) => {
                t.add_assign(o);
                rows.extend(orows.iter().copied());
                Slot::Sparse(t, rows)
            }
            (Slot::Dense(mut t) | Slot::Sparse(mut t, _), Slot::Dense(o) | Slot::Sparse(o, _)) => {
                t.add_assign(o);
                Slot::Dense(t)
            }
        };
    }
}

/// Gradients keyed by [`ParamId`]. Embedding tables touched only through
/// row lookups remember which rows received gradient so the optimizer can
/// leave the others alone.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    slots: Vec<Slot>,
}

impl Gradients {
    pub fn new(n_params: usize) -> Self {
        Self {
            slots: vec![Slot::Empty; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(Slot::tensor)
    }

    /// Rows that received gradient, or `None` if the whole tensor did (or
    /// nothing did).
    pub fn touched_rows(&self, id: ParamId) -> Option<&BTreeSet<usize>> {
        match self.slots.get(id.0) {
            Some(Slot::Sparse(_, rows)) => Some(rows),
            _ => None,
        }
    }

    fn ensure(&mut self, id: ParamId) {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, Slot::Empty);
        }
    }

    pub(crate) fn add_dense(&mut self, id: ParamId, g: Tensor) {
        self.ensure(id);
        self.slots[id.0].merge(&Slot::Dense(g));
    }

    pub(crate) fn add_rows(
        &mut self,
        id: ParamId,
        shape: &[usize],
        rows: &[usize],
        row_grad: &[f64],
        weight: f64,
    ) {
        self.ensure(id);
        let slot = &mut self.slots[id.0];
        if matches!(slot, Slot::Empty) {
            *slot = Slot::Sparse(Tensor::zeros(shape), BTreeSet::new());
        }
        if let Slot::Sparse(_, set) = slot {
            set.extend(rows.iter().copied());
        }
        let t = slot.tensor_mut().expect("slot initialized");
        for &r in rows {
            for (a, b) in t.row_mut(r).iter_mut().zip(row_grad) {
                *a += weight * b;
            }
        }
    }

    /// Sums another gradient set into this one (minibatch accumulation).
    pub fn accumulate(&mut self, other: &Gradients) {
        for (i, slot) in other.slots.iter().enumerate() {
            self.ensure(ParamId(i));
            self.slots[i].merge(slot);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.slots.iter_mut().filter_map(Slot::tensor_mut) {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().filter_map(Slot::tensor).all(Tensor::is_finite)
    }

    /// Drops the gradient of `id` entirely (frozen parameter).
    pub fn clear(&mut self, id: ParamId) {
        if let Some(slot) = self.slots.get_mut(id.0) {
            *slot = Slot::Empty;
        }
    }

    /// Keeps only the listed rows of `id`'s gradient; the rest are zeroed
    /// and will not be touched by the optimizer.
    pub fn retain_rows(&mut self, id: ParamId, keep: &BTreeSet<usize>) {
        let Some(slot) = self.slots.get_mut(id.0) else {
            return;
        };
        let taken = std::mem::take(slot);
        *slot = match taken {
            Slot::Empty => Slot::Empty,
            Slot::Dense(mut t) => {
                let rows = t.rows();
                for r in (0..rows).filter(|r| !keep.contains(r)) {
                    t.row_mut(r).fill(0.0);
                }
                Slot::Sparse(t, keep.iter().copied().filter(|&r| r < rows).collect())
            }
            Slot::Sparse(mut t, touched) => {
                for &r in touched.difference(keep) {
                    t.row_mut(r).fill(0.0);
                }
                Slot::Sparse(t, touched.intersection(keep).copied().collect())
            }
        };
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.tensor().map(|t| (ParamId(i), t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_replaces_by_name() {
        let mut p = ParamStore::new();
        let a = p.insert("a", Tensor::scalar(1.0));
        let b = p.insert("b", Tensor::scalar(2.0));
        assert_eq!(p.insert("a", Tensor::scalar(3.0)), a);
        assert_ne!(a, b);
        assert_eq!(p.get("a").unwrap().data(), &[3.0]);
        assert_eq!(p.iter().map(|(_, n, _)| n).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn sparse_and_dense_merge() {
        let id = ParamId(0);
        let mut g = Gradients::new(1);
        g.add_rows(id, &[3, 2], &[1], &[1.0, 2.0], 1.0);
        let mut h = Gradients::new(1);
        h.add_rows(id, &[3, 2], &[2], &[1.0, 1.0], 0.5);
        g.accumulate(&h);
        assert_eq!(g.touched_rows(id).unwrap().iter().copied().collect::<Vec<_>>(), [1, 2]);
        assert_eq!(g.get(id).unwrap().data(), &[0.0, 0.0, 1.0, 2.0, 0.5, 0.5]);
        g.add_dense(id, Tensor::zeros(&[3, 2]));
        assert!(g.touched_rows(id).is_none());
    }
}
