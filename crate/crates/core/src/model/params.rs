use std::fmt;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Scalar, Tensor, Var};

/// Which forward passes a parameter takes part in.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Partition {
    /// Shared by every factor.
    Trunk,
    /// Upsampling head used only at this factor.
    Head(u32),
}

impl Partition {
    pub fn active_at(self, factor: u32) -> bool {
        match self {
            Partition::Trunk => true,
            Partition::Head(f) => f == factor,
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partition::Trunk => f.write_str("trunk"),
            Partition::Head(r) => write!(f, "head:{r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    /// Logical dimensions: `[out, in, k, k]` for weights, `[out]` for biases.
    pub dims: Vec<usize>,
    pub partition: Partition,
    /// Accumulated gradient; `None` until a backward pass reaches the parameter.
    pub grad: Option<Tensor<T>>,
}

/// Ordered, uniquely named trainable tensors with gradient slots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T> {
    entries: IndexMap<String, Param<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        value: Tensor<T>,
        dims: Vec<usize>,
        partition: Partition,
    ) -> Result<()> {
        let name = name.into();
        if dims.iter().product::<usize>() != value.numel() {
            return Err(Error::contract(
                "parameter_store",
                format!("dims {dims:?} do not match {} values for {name}", value.numel()),
            ));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::contract(
                "parameter_store",
                format!("duplicate parameter {name}"),
            ));
        }
        self.entries.insert(
            name,
            Param {
                value,
                dims,
                partition,
                grad: None,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.entries.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::contract("parameter_store", format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Names of the parameters a forward pass at `factor` uses.
    pub fn active_names(&self, factor: u32) -> Vec<String> {
        self.iter()
            .filter(|(_, p)| p.partition.active_at(factor))
            .map(|(n, _)| n.to_string())
            .collect()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    pub fn numel_in(&self, partition: Partition) -> usize {
        self.entries
            .values()
            .filter(|p| p.partition == partition)
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        self.entries.values_mut().for_each(|p| p.grad = None);
    }

    /// Adds the gradients of bound leaves into their slots.
    pub fn accumulate_grads(&mut self, bound: &[(String, Var)], grads: &Gradients<T>) -> Result<()> {
        for (name, var) in bound {
            let Some(g) = grads.get(*var) else { continue };
            let param = self
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::contract("accumulate_grads", format!("unknown parameter {name}")))?;
            match &mut param.grad {
                Some(acc) => acc.add_assign(g)?,
                slot => *slot = Some(g.clone()),
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            dims: p.dims.clone(),
                            partition: p.partition,
                            grad: p.grad.as_ref().map(Tensor::cast),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Same names, same values; gradients are ignored.
    pub fn values_equal(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((a, pa), (b, pb))| a == b && pa.value == pb.value && pa.dims == pb.dims)
    }
}
