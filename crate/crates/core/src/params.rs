//! Named parameter storage with gradients.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// What a stored tensor is for. Governs weight decay, clamping and export.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    ConvKernel,
    DenseWeight,
    DenseBias,
    BnScale,
    BnShift,
    BnRunningMean,
    BnRunningVar,
    /// Number of running-statistic updates applied so far.
    BnUpdates,
    MappingAlpha,
    MappingBeta,
    /// Free tensor used by tests and custom graphs.
    Other,
}

impl ParamRole {
    pub fn is_trainable(self) -> bool {
        !matches!(self, ParamRole::BnRunningMean | ParamRole::BnRunningVar | ParamRole::BnUpdates)
    }

    /// Only convolution and dense weights are L2-regularized.
    pub fn is_decayed(self) -> bool {
        matches!(self, ParamRole::ConvKernel | ParamRole::DenseWeight)
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        use ParamRole::*;
        [
            ConvKernel, DenseWeight, DenseBias, BnScale, BnShift, BnRunningMean, BnRunningVar, BnUpdates,
            MappingAlpha, MappingBeta, Other,
        ]
        .into_iter()
        .find(|r| r.tag() == tag)
    }
}

#[derive(Clone, Debug)]
pub struct ParamEntry<T: Real> {
    pub name: String,
    pub role: ParamRole,
    pub trainable: bool,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Real = f32> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
    grads_ready: bool,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: HashMap::new(), grads_ready: false }
    }

    pub fn insert(&mut self, name: impl Into<String>, role: ParamRole, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Graph(format!("parameter `{name}` registered twice")));
        }
        let grad = Tensor::zeros(value.shape().to_vec());
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry { name, role, trainable: role.is_trainable(), value, grad });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn entry(&self, name: &str) -> Result<&ParamEntry<T>> {
        self.index.get(name).map(|&i| &self.entries[i]).ok_or_else(|| Error::UnknownParam(name.into()))
    }

    pub fn entry_mut(&mut self, name: &str) -> Result<&mut ParamEntry<T>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i]),
            None => Err(Error::UnknownParam(name.into())),
        }
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.entry(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        Ok(&mut self.entry_mut(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.entry(name)?.grad)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        self.entry_mut(name)?.trainable = trainable;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry<T>> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of scalars in entries whose role is trainable (frozen entries
    /// included, running statistics excluded).
    pub fn trainable_scalars(&self) -> usize {
        self.entries.iter().filter(|e| e.role.is_trainable()).map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::zero());
        }
        self.grads_ready = false;
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, g: &Tensor<T>) -> Result<()> {
        let e = self.entry_mut(name)?;
        if e.grad.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} for `{name}` does not match value {:?}",
                g.shape(),
                e.value.shape()
            )));
        }
        e.grad.add_assign(g);
        Ok(())
    }

    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    pub(crate) fn mark_grads_ready(&mut self, ready: bool) {
        self.grads_ready = ready;
    }

    /// Same entries converted to another element type; gradients reset.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            out.insert(e.name.clone(), e.role, e.value.cast()).expect("unique names");
            out.entries.last_mut().expect("just inserted").trainable = e.trainable;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::<f32>::new();
        s.insert("w", ParamRole::Other, Tensor::zeros([2])).unwrap();
        assert!(s.insert("w", ParamRole::Other, Tensor::zeros([2])).is_err());
        assert!(matches!(s.value("nope"), Err(Error::UnknownParam(_))));
    }

    #[test]
    fn running_stats_are_not_trainable() {
        let mut s = ParamStore::<f32>::new();
        s.insert("bn/mean", ParamRole::BnRunningMean, Tensor::zeros([3])).unwrap();
        s.insert("bn/gamma", ParamRole::BnScale, Tensor::ones([3])).unwrap();
        assert!(!s.entry("bn/mean").unwrap().trainable);
        assert_eq!(s.trainable_scalars(), 3);
    }

    #[test]
    fn role_tags_round_trip() {
        for tag in 0..11u8 {
            assert_eq!(ParamRole::from_tag(tag).unwrap().tag(), tag);
        }
        assert!(ParamRole::from_tag(200).is_none());
    }
}
