//! Flat parameter storage shared by the trainable models.
//!
//! Every model keeps its tensors in one contiguous `Vec<f64>` described by an
//! ordered list of named blocks. Gradients use the same layout, which keeps
//! the optimiser, the gradient checks and the model files uniform.

use crate::error::{ensure, Result};
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl BlockSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamLayout {
    blocks: Vec<BlockSpec>,
    offsets: Vec<usize>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its index.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let spec = BlockSpec {
            name: name.into(),
            shape: shape.to_vec(),
        };
        self.offsets.push(self.total);
        self.total += spec.len();
        self.blocks.push(spec);
        self.blocks.len() - 1
    }

    pub fn from_specs(specs: &[BlockSpec]) -> Self {
        let mut layout = Self::new();
        for s in specs {
            layout.push(s.name.clone(), &s.shape);
        }
        layout
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn range(&self, block: usize) -> Range<usize> {
        let start = self.offsets[block];
        start..start + self.blocks[block].len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }
}

/// Parameter values laid out by a [`ParamLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl Params {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == layout.len(),
            Dimension,
            "{} parameter values for a layout of {}",
            values.len(),
            layout.len()
        );
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn block(&self, idx: usize) -> &[f64] {
        &self.values[self.layout.range(idx)]
    }

    #[inline]
    pub fn block_mut(&mut self, idx: usize) -> &mut [f64] {
        let r = self.layout.range(idx);
        &mut self.values[r]
    }

    pub fn zeros_like(&self) -> Params {
        Params::zeros(self.layout.clone())
    }

    /// Named blocks, in layout order, for serialization.
    pub fn named_blocks(&self) -> impl Iterator<Item = (&BlockSpec, &[f64])> {
        self.layout
            .blocks()
            .iter()
            .enumerate()
            .map(move |(i, spec)| (spec, self.block(i)))
    }

    pub fn add_assign(&mut self, other: &Params) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.values.iter_mut().for_each(|v| *v *= k);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets() {
        let mut l = ParamLayout::new();
        let a = l.push("a", &[2, 3]);
        let b = l.push("b", &[4]);
        assert_eq!(l.len(), 10);
        assert_eq!(l.range(a), 0..6);
        assert_eq!(l.range(b), 6..10);
        assert_eq!(l.index_of("b"), Some(1));
        let mut p = Params::zeros(l);
        p.block_mut(b).copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&p.values()[6..], &[1.0, 2.0, 3.0, 4.0]);
        assert!(Params::from_values(p.layout().clone(), vec![0.0; 3]).is_err());
    }
}
