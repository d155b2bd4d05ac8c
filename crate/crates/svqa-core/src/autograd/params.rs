use crate::autograd::tape::{Tape, TensorId};
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Stable handle into a [`ParamSet`]; ids are assigned in registration order
/// and never reused, which keeps optimizer state aligned across steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Named parameter store. The order of insertion defines the traversal order
/// everywhere (tape registration, optimizer updates, checkpoints), so a given
/// model build produces identical artifacts run to run.
#[derive(Default)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.entries.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        tensor.set_requires_grad(trainable);
        self.entries.push(Param { name, tensor });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.entries[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Flip trainability per parameter from a name predicate. Returns how
    /// many parameters ended up trainable.
    pub fn set_trainable(&mut self, pred: impl Fn(&str) -> bool) -> usize {
        let mut n = 0;
        for p in &mut self.entries {
            let on = pred(&p.name);
            p.tensor.set_requires_grad(on);
            if on {
                n += 1;
            }
        }
        n
    }

    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|p| p.tensor.requires_grad())
            .count()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Put every parameter on a tape for a training step. The returned map is
    /// indexed by `ParamId`.
    pub fn register(&self, tape: &mut Tape) -> Vec<TensorId> {
        self.entries.iter().map(|p| tape.leaf(&p.tensor)).collect()
    }

    /// Like [`ParamSet::register`] but with gradient tracking off everywhere;
    /// used for generation and evaluation passes.
    pub fn register_frozen(&self, tape: &mut Tape) -> Vec<TensorId> {
        self.entries
            .iter()
            .map(|p| tape.constant(&p.tensor))
            .collect()
    }

    /// Overwrite a parameter's values in place (shape must match).
    pub fn load_values(&mut self, name: &str, values: &[f32]) -> Result<()> {
        let id = self
            .by_name(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let t = &mut self.entries[id.0].tensor;
        if t.numel() != values.len() {
            return Err(Error::Checkpoint(format!(
                "parameter {name} has {} values, file carries {}",
                t.numel(),
                values.len()
            )));
        }
        t.data_mut().copy_from_slice(values);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_stable() {
        let mut ps = ParamSet::new();
        let a = ps.add("w1", Tensor::zeros(vec![2, 2]), true);
        let b = ps.add("w2", Tensor::zeros(vec![3]), false);
        assert_eq!(a, ParamId(0));
        assert_eq!(b, ParamId(1));
        assert_eq!(ps.name(a), "w1");
        assert!(ps.tensor(a).requires_grad());
        assert!(!ps.tensor(b).requires_grad());
    }

    #[test]
    fn set_trainable_by_prefix() {
        let mut ps = ParamSet::new();
        ps.add("enc.w", Tensor::zeros(vec![2]), true);
        ps.add("dec.w", Tensor::zeros(vec![2]), true);
        let n = ps.set_trainable(|name| name.starts_with("enc."));
        assert_eq!(n, 1);
        assert_eq!(ps.trainable_count(), 1);
    }

    #[test]
    fn load_values_checks_shape() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::zeros(vec![2, 2]), true);
        assert!(ps.load_values("w", &[1.0, 2.0, 3.0, 4.0]).is_ok());
        assert_eq!(ps.tensor(ParamId(0)).data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(ps.load_values("w", &[1.0]).is_err());
        assert!(ps.load_values("missing", &[1.0]).is_err());
    }
}
