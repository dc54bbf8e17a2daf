//! Named parameter bundles, initialization and checkpoints.

use std::ops::Index;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered, named set of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Weight matrix drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn add_weight<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        self.add(name, Tensor::new(vec![fan_in, fan_out], data).expect("weight shape"))
    }

    /// Embedding table drawn from `U(-1, 1)`.
    pub fn add_embedding<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        width: usize,
        rng: &mut R,
    ) -> ParamId {
        let data = (0..rows * width).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        self.add(name, Tensor::new(vec![rows, width], data).expect("embedding shape"))
    }

    pub fn add_bias(&mut self, name: impl Into<String>, width: usize) -> ParamId {
        self.add(name, Tensor::zeros(&[width]))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Sets every parameter to zero; used by tests of degenerate agents.
    pub fn zero_all(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().fill(0.0);
        }
    }

    /// Copies every parameter into `graph` as a trainable leaf.
    pub fn bind(&self, graph: &mut Graph) -> Result<Bound> {
        let nodes = self
            .tensors
            .iter()
            .map(|t| graph.param(t.clone()))
            .collect::<Result<_>>()?;
        Ok(Bound { nodes })
    }

    /// Copies every parameter into `graph` as a constant (no gradient).
    pub fn bind_frozen(&self, graph: &mut Graph) -> Result<Bound> {
        let nodes = self
            .tensors
            .iter()
            .map(|t| graph.input(t.clone()))
            .collect::<Result<_>>()?;
        Ok(Bound { nodes })
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let doc = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params: self
                .iter()
                .map(|(name, t)| CheckpointEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let doc: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.format != CHECKPOINT_FORMAT || doc.version != CHECKPOINT_VERSION {
            return Err(Error::Refused(format!(
                "unsupported checkpoint {} v{}",
                doc.format, doc.version
            )));
        }
        let mut store = ParamStore::new();
        for e in doc.params {
            store.add(e.name, Tensor::new(e.shape, e.data)?);
        }
        Ok(store)
    }

    /// Overwrites values from `other`, which must have identical names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        contract!(
            self.names == other.names,
            "checkpoint parameter names do not match"
        );
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            contract!(
                dst.shape() == src.shape(),
                "checkpoint shape {:?} vs {:?}",
                src.shape(),
                dst.shape()
            );
            *dst = src.clone();
        }
        Ok(())
    }
}

const CHECKPOINT_FORMAT: &str = "numgame-params";
const CHECKPOINT_VERSION: u32 = 1;

// serde_json writes f64 with shortest round-trip digits, so the text form is exact.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    params: Vec<CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Graph nodes for one [`ParamStore`], in store order.
#[derive(Debug, Clone)]
pub struct Bound {
    nodes: Vec<NodeId>,
}

impl Bound {
    /// Gradients in store order; parameters the loss never reached get zeros.
    pub fn collect(&self, grads: &Gradients, store: &ParamStore) -> Vec<Tensor> {
        self.nodes
            .iter()
            .zip(store.tensors())
            .map(|(n, t)| {
                grads
                    .get(*n)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }
}

impl Index<ParamId> for Bound {
    type Output = NodeId;

    fn index(&self, id: ParamId) -> &NodeId {
        &self.nodes[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RunRng;

    #[test]
    fn weight_init_respects_fan_in_bound() {
        let mut rng = RunRng::new(3).stream("init");
        let mut s = ParamStore::new();
        let w = s.add_weight("w", 16, 8, &mut rng);
        let b = s.add_bias("b", 8);
        assert!(s.get(w).data().iter().all(|v| v.abs() <= 0.25));
        assert!(s.get(b).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = RunRng::new(9).stream("init");
        let mut s = ParamStore::new();
        s.add_weight("enc.w", 5, 7, &mut rng);
        s.add("odd", Tensor::vector(vec![0.1 + 0.2, 1e-300, -3.0e307, f64::MIN_POSITIVE]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        s.write_checkpoint(&path).unwrap();
        let back = ParamStore::read_checkpoint(&path).unwrap();
        assert_eq!(s, back);
    }
}
