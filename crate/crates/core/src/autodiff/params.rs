use indexmap::IndexMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors in registration order. The flat view concatenates
/// them in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    index: IndexMap<String, ParamId>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self { index: IndexMap::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        let id = ParamId(self.tensors.len());
        self.index.insert(name, id);
        self.tensors.push(value);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let id = self.id(name)?;
        Some(self.get_mut(id))
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.index.get_index(id.0).map(|(n, _)| n.as_str()).unwrap_or("")
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.index.iter().map(|(n, &id)| (id, n.as_str(), &self.tensors[id.0]))
    }

    pub fn shapes(&self) -> Vec<[usize; 2]> {
        self.tensors.iter().map(Tensor::shape).collect()
    }

    /// Same names and shapes with every value converted to `U`.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { index: self.index.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }

    pub fn flat_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::Shape { op: "set_flat", lhs: [self.flat_len(), 1], rhs: [flat.len(), 1] });
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Flat offset range of each parameter.
    pub fn offsets(&self) -> Vec<std::ops::Range<usize>> {
        let mut offset = 0;
        self.tensors
            .iter()
            .map(|t| {
                let r = offset..offset + t.len();
                offset = r.end;
                r
            })
            .collect()
    }
}

/// Gradients aligned with a [`ParamStore`]; unreached parameters hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub(crate) tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self { tensors: store.shapes().into_iter().map(|[r, c]| Tensor::zeros(r, c)).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn global_norm(&self) -> T {
        sum(self.tensors.iter().flat_map(|t| t.data().iter()).map(|&g| g * g)).sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for g in t.data_mut() {
                *g *= factor;
            }
        }
    }

    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_view_round_trip() {
        let mut store = ParamStore::<f64>::new();
        store.add("a", Tensor::from_fn(2, 2, |r, c| (r * 2 + c) as f64)).unwrap();
        store.add("b", Tensor::scalar(9.0)).unwrap();
        assert_eq!(store.flat_len(), 5);
        assert_eq!(store.to_flat(), vec![0.0, 1.0, 2.0, 3.0, 9.0]);
        store.set_flat(&[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(store.by_name("b").unwrap().item().unwrap(), 1.0);
        assert!(store.set_flat(&[1.0]).is_err());
        assert_eq!(store.offsets(), vec![0..4, 4..5]);
    }

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::<f64>::new();
        store.add("a", Tensor::scalar(1.0)).unwrap();
        assert!(store.add("a", Tensor::scalar(2.0)).is_err());
    }
}
