use super::conv;
use super::ops;
use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, weight: Var, bias: Var },
    Activation { x: Var, kind: Activation },
    Add(Var, Var),
    Concat(Vec<Var>),
    GlobalAvgPool(Var),
    ScaleChannels { x: Var, s: Var },
    PixelShuffle { x: Var, r: usize },
    L1 { pred: Var, target: Var },
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order; node ids are therefore a
/// topological order of the computation graph.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a loss with respect to the leaves of a tape.
#[derive(Debug, Clone, Default)]
pub struct Gradients<T> {
    leaves: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn new() -> Self {
        Gradients { leaves: Vec::new() }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaves.get(v.0).and_then(Option::as_ref)
    }

    pub fn clear(&mut self) {
        self.leaves.clear();
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        if self.leaves.len() <= v.0 {
            self.leaves.resize(v.0 + 1, None);
        }
        match &mut self.leaves[v.0] {
            Some(acc) => acc.add_assign(&g).expect("leaf gradient keeps its shape"),
            slot => *slot = Some(g),
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = conv::forward(self.value(x), self.value(weight), self.value(bias))?;
        let rg = self.needs(&[x, weight, bias]);
        Ok(self.push(out, Op::Conv2d { x, weight, bias }, rg))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = match kind {
            Activation::Relu => ops::relu(self.value(x)),
            Activation::Sigmoid => ops::sigmoid(self.value(x)),
        };
        let rg = self.needs(&[x]);
        self.push(out, Op::Activation { x, kind }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn add(&mut self, x: Var, y: Var) -> Result<Var> {
        let out = ops::add(self.value(x), self.value(y))?;
        let rg = self.needs(&[x, y]);
        Ok(self.push(out, Op::Add(x, y), rg))
    }

    /// Sum of several equally shaped values.
    pub fn sum_all(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs
            .split_first()
            .ok_or_else(|| Error::contract("sum_all", "empty input list"))?;
        rest.iter().try_fold(first, |acc, &x| self.add(acc, x))
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = xs.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_channels(&values)?;
        let rg = self.needs(xs);
        Ok(self.push(out, Op::Concat(xs.to_vec()), rg))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let out = ops::global_avg_pool(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::GlobalAvgPool(x), rg))
    }

    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let out = ops::scale_channels(self.value(x), self.value(s))?;
        let rg = self.needs(&[x, s]);
        Ok(self.push(out, Op::ScaleChannels { x, s }, rg))
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = ops::pixel_shuffle(self.value(x), r)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::PixelShuffle { x, r }, rg))
    }

    /// Mean absolute error; `target` must not require gradients.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.requires_grad(target) {
            return Err(Error::contract("l1_loss", "target must not require gradients"));
        }
        let out = ops::l1_loss(self.value(pred), self.value(target))?;
        let rg = self.needs(&[pred]);
        Ok(self.push(out, Op::L1 { pred, target }, rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let out = ops::mean(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Mean(x), rg))
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let mut grads = Gradients::new();
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Adds d(loss)/d(leaf) into `grads` for every gradient-requiring leaf.
    /// Leaves the loss does not reach receive zeros.
    pub fn backward_into(&self, loss: Var, grads: &mut Gradients<T>) -> Result<()> {
        let shape = self.shape(loss);
        if shape != Shape::scalar() {
            return Err(Error::contract(
                "backward",
                format!("loss must be a scalar, got shape {shape}"),
            ));
        }
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::scalar(T::one()));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                adj[id] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[id].take() else { continue };
            self.propagate(node, &g, &mut adj);
        }

        for (id, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let g = adj[id].take().unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                grads.accumulate(Var(id), g);
            }
        }
        // Leaves recorded after the loss cannot influence it.
        for (id, node) in self.nodes.iter().enumerate().skip(loss.0 + 1) {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                grads.accumulate(Var(id), Tensor::zeros(node.value.shape()));
            }
        }
        Ok(())
    }

    fn send(&self, adj: &mut [Option<Tensor<T>>], to: Var, g: Tensor<T>) {
        if !self.nodes[to.0].requires_grad {
            return;
        }
        match &mut adj[to.0] {
            Some(acc) => acc.add_assign(&g).expect("gradient matches node shape"),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, adj: &mut [Option<Tensor<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, weight, bias } => {
                let need = [x, weight, bias].map(|v| self.nodes[v.0].requires_grad);
                let grads = conv::backward(self.value(*x), self.value(*weight), g, need);
                if let Some(gx) = grads.x {
                    self.send(adj, *x, gx);
                }
                if let Some(gw) = grads.weight {
                    self.send(adj, *weight, gw);
                }
                if let Some(gb) = grads.bias {
                    self.send(adj, *bias, gb);
                }
            }
            Op::Activation { x, kind } => {
                let gx = match kind {
                    Activation::Relu => ops::relu_backward(self.value(*x), g),
                    Activation::Sigmoid => ops::sigmoid_backward(&node.value, g),
                };
                self.send(adj, *x, gx);
            }
            Op::Add(x, y) => {
                self.send(adj, *x, g.clone());
                self.send(adj, *y, g.clone());
            }
            Op::Concat(xs) => {
                let channels: Vec<usize> = xs.iter().map(|v| self.shape(*v).c).collect();
                for (v, part) in xs.iter().zip(ops::split_channels(g, &channels)) {
                    self.send(adj, *v, part);
                }
            }
            Op::GlobalAvgPool(x) => {
                let gx = ops::global_avg_pool_backward(self.shape(*x), g);
                self.send(adj, *x, gx);
            }
            Op::ScaleChannels { x, s } => {
                let (gx, gs) = ops::scale_channels_backward(self.value(*x), self.value(*s), g);
                self.send(adj, *x, gx);
                self.send(adj, *s, gs);
            }
            Op::PixelShuffle { x, r } => {
                let gx = ops::space_to_depth(g, *r).expect("inverse of a valid shuffle");
                self.send(adj, *x, gx);
            }
            Op::L1 { pred, target } => {
                let gp = ops::l1_backward(self.value(*pred), self.value(*target), g.data()[0]);
                self.send(adj, *pred, gp);
            }
            Op::Mean(x) => {
                let s = self.shape(*x);
                let k = g.data()[0] / T::from_usize(s.numel()).expect("numel");
                self.send(adj, *x, Tensor::full(s, k));
            }
        }
    }
}
