//! Named parameter storage: every learned weight lives here, addressed by a
//! stable integer id, with a gradient accumulator alongside each value.

use super::tensor::Tensor;

/// Stable handle to one named parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

/// The parameter collection. Registration order is deterministic given the
/// model configuration, which is what makes checkpoints reloadable by name.
#[derive(Debug, Clone, Default)]
pub struct Params {
    entries: Vec<ParamEntry>,
}

impl Params {
    pub fn new() -> Self {
        Params { entries: Vec::new() }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        self.insert(name, value, true)
    }

    /// Register a parameter excluded from optimizer updates (fixed
    /// embeddings loaded from a file).
    pub fn add_frozen(&mut self, name: &str, value: Tensor) -> ParamId {
        self.insert(name, value, false)
    }

    fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> ParamId {
        assert!(
            self.id_of(name).is_none(),
            "duplicate parameter name '{}'",
            name
        );
        let grad = Tensor::zeros(value.shape());
        self.entries.push(ParamEntry { name: name.to_string(), value, grad, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].grad
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Global L2 norm over trainable gradients.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .flat_map(|e| e.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Total scalar count across all parameters.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Overwrite values from another collection with the same names; shapes
    /// must agree. Used when loading checkpoints into a freshly built model.
    pub fn load_values_from(&mut self, other: &Params) -> Result<(), String> {
        if self.entries.len() != other.entries.len() {
            return Err(format!(
                "parameter count mismatch: {} here, {} in checkpoint",
                self.entries.len(),
                other.entries.len()
            ));
        }
        for entry in &mut self.entries {
            let theirs = other
                .entries
                .iter()
                .find(|e| e.name == entry.name)
                .ok_or_else(|| format!("checkpoint missing parameter '{}'", entry.name))?;
            if theirs.value.shape() != entry.value.shape() {
                return Err(format!(
                    "parameter '{}' shape mismatch: {:?} vs {:?}",
                    entry.name,
                    entry.value.shape(),
                    theirs.value.shape()
                ));
            }
            entry.value = theirs.value.clone();
            entry.trainable = theirs.trainable;
        }
        Ok(())
    }
}
