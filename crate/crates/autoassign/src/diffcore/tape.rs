//! Dynamic computation record: operations append nodes as they run, and the
//! backward pass replays them in reverse, accumulating gradients by node id.
//!
//! A record is confined to one thread. Constants never touch the record;
//! their values are captured inline by the consuming node, so inference-style
//! evaluation over constants records nothing at all.

use std::cell::RefCell;
use std::rc::Rc;

use super::conv;
use super::data::{strides_of, ArrayData, BroadcastMap};
use super::error::{DiffError, DiffResult};

/// Operation tag stored on each node, with whatever payload backward needs
/// beyond the operand values themselves.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Log,
    Sigmoid,
    Relu,
    Negate,
    Power(f64),
    Clamp { lo: f64, hi: f64 },
    Sum { axis: Option<usize> },
    Mean { axis: Option<usize> },
    Max { axis: Option<usize> },
    StopGradient,
    Conv2d { stride: usize, padding: usize },
    GatherRows { rows: Vec<usize> },
    SelectColumn { col: usize },
    ChannelsLast,
    ConcatRows,
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sigmoid => "sigmoid",
            Op::Relu => "relu",
            Op::Negate => "negate",
            Op::Power(_) => "power",
            Op::Clamp { .. } => "clamp",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::Max { .. } => "max",
            Op::StopGradient => "stop_gradient",
            Op::Conv2d { .. } => "conv2d",
            Op::GatherRows { .. } => "gather_rows",
            Op::SelectColumn { .. } => "select_column",
            Op::ChannelsLast => "channels_last",
            Op::ConcatRows => "concat_rows",
        }
    }
}

/// A node operand: either an earlier node or a constant captured inline.
#[derive(Debug, Clone)]
pub(crate) enum Input {
    Node(usize),
    Const(ArrayData),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) inputs: Vec<Input>,
    pub(crate) data: ArrayData,
}

#[derive(Debug, Default)]
pub(crate) struct TapeInner {
    pub(crate) nodes: Vec<Node>,
}

/// Handle to a computation record. Cloning shares the record.
#[derive(Clone, Default)]
pub struct Tape {
    pub(crate) inner: Rc<RefCell<TapeInner>>,
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tape({} nodes)", self.inner.borrow().nodes.len())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_record(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn push(&self, node: Node) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(node);
        inner.nodes.len() - 1
    }

    /// Runs reverse-mode accumulation from a scalar output node.
    /// Visits every node exactly once, in reverse creation order.
    pub fn backward(&self, output: &super::array::DiffArray) -> DiffResult<Gradients> {
        let node_id = match output.node_id() {
            Some((tape, id)) => {
                if !self.same_record(&tape) {
                    return Err(DiffError::TapeMismatch { op: "backward" });
                }
                id
            }
            None => return Err(DiffError::UntrackedBackward),
        };
        if output.len() != 1 {
            return Err(DiffError::NonScalarLoss {
                shape: output.shape().to_vec(),
            });
        }

        let inner = self.inner.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; inner.nodes.len()];
        grads[node_id] = Some(vec![1.0]);

        for id in (0..=node_id).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &inner.nodes[id];
            backpropagate(node, &g, &inner, &mut grads);
            grads[id] = Some(g);
        }

        Ok(Gradients { grads })
    }
}

/// Per-node gradient buffers produced by one backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a tracked array, or `None` if the
    /// array is a constant or received no gradient flow.
    pub fn wrt(&self, array: &super::array::DiffArray) -> Option<&[f64]> {
        let (_, id) = array.node_id()?;
        self.grads.get(id)?.as_deref()
    }
}

fn input_values<'a>(input: &'a Input, inner: &'a TapeInner) -> &'a ArrayData {
    match input {
        Input::Node(id) => &inner.nodes[*id].data,
        Input::Const(data) => data,
    }
}

fn accumulate(
    input: &Input,
    grads: &mut [Option<Vec<f64>>],
    inner: &TapeInner,
    f: impl FnOnce(&mut [f64]),
) {
    if let Input::Node(id) = input {
        let buf = grads[*id].get_or_insert_with(|| vec![0.0; inner.nodes[*id].data.len()]);
        f(buf);
    }
}

/// One elementwise binary rule: accumulate d(out)/d(side) * g into both
/// operands, honoring broadcasting by summing over expanded dims.
fn binary_backward(
    node: &Node,
    g: &[f64],
    inner: &TapeInner,
    grads: &mut [Option<Vec<f64>>],
    local: impl Fn(f64, f64) -> (f64, f64),
) {
    let a = input_values(&node.inputs[0], inner);
    let b = input_values(&node.inputs[1], inner);
    let map_a = BroadcastMap::new(&node.data.shape, &a.shape);
    let map_b = BroadcastMap::new(&node.data.shape, &b.shape);

    accumulate(&node.inputs[0], grads, inner, |ga| {
        for (o, &go) in g.iter().enumerate() {
            let ia = map_a.src_index(o);
            let (da, _) = local(a.values[ia], b.values[map_b.src_index(o)]);
            ga[ia] += da * go;
        }
    });
    accumulate(&node.inputs[1], grads, inner, |gb| {
        for (o, &go) in g.iter().enumerate() {
            let ib = map_b.src_index(o);
            let (_, db) = local(a.values[map_a.src_index(o)], b.values[ib]);
            gb[ib] += db * go;
        }
    });
}

fn unary_backward(
    node: &Node,
    g: &[f64],
    inner: &TapeInner,
    grads: &mut [Option<Vec<f64>>],
    local: impl Fn(f64, f64) -> f64, // (input value, output value) -> d out / d in
) {
    let a = input_values(&node.inputs[0], inner);
    accumulate(&node.inputs[0], grads, inner, |ga| {
        for (o, &go) in g.iter().enumerate() {
            ga[o] += local(a.values[o], node.data.values[o]) * go;
        }
    });
}

/// Iterate (input flat index -> output flat index) pairs for an axis
/// reduction over `shape`.
fn reduced_index(shape: &[usize], axis: usize) -> impl Fn(usize) -> usize + '_ {
    let in_strides = strides_of(shape);
    let axis_stride = in_strides[axis];
    let axis_len = shape[axis];
    move |in_flat: usize| {
        let before = in_flat / (axis_stride * axis_len);
        let after = in_flat % axis_stride;
        before * axis_stride + after
    }
}

fn backpropagate(node: &Node, g: &[f64], inner: &TapeInner, grads: &mut [Option<Vec<f64>>]) {
    match &node.op {
        Op::Leaf => {}
        Op::StopGradient => {}

        Op::Add => binary_backward(node, g, inner, grads, |_, _| (1.0, 1.0)),
        Op::Sub => binary_backward(node, g, inner, grads, |_, _| (1.0, -1.0)),
        Op::Mul => binary_backward(node, g, inner, grads, |a, b| (b, a)),
        // -(a/b)/b rather than -a/(b*b): b*b can underflow for tiny
        // denominators even when the quotient itself is well-scaled
        Op::Div => binary_backward(node, g, inner, grads, |a, b| (1.0 / b, -(a / b) / b)),

        Op::Exp => unary_backward(node, g, inner, grads, |_, y| y),
        Op::Log => unary_backward(node, g, inner, grads, |a, _| 1.0 / a),
        Op::Sigmoid => unary_backward(node, g, inner, grads, |_, y| y * (1.0 - y)),
        Op::Relu => unary_backward(
            node,
            g,
            inner,
            grads,
            |a, _| if a > 0.0 { 1.0 } else { 0.0 },
        ),
        Op::Negate => unary_backward(node, g, inner, grads, |_, _| -1.0),
        Op::Power(p) => {
            let p = *p;
            unary_backward(node, g, inner, grads, move |a, _| {
                if p == 0.0 {
                    0.0
                } else if a == 0.0 {
                    // p >= 1 guaranteed by the forward domain check
                    if p == 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    p * a.powf(p - 1.0)
                }
            })
        }
        Op::Clamp { lo, hi } => {
            let (lo, hi) = (*lo, *hi);
            unary_backward(node, g, inner, grads, move |a, _| {
                if a >= lo && a <= hi {
                    1.0
                } else {
                    0.0
                }
            })
        }

        Op::Sum { axis } => {
            let a = input_values(&node.inputs[0], inner);
            match axis {
                None => accumulate(&node.inputs[0], grads, inner, |ga| {
                    for v in ga.iter_mut() {
                        *v += g[0];
                    }
                }),
                Some(axis) => {
                    let map = reduced_index(&a.shape, *axis);
                    accumulate(&node.inputs[0], grads, inner, |ga| {
                        for (i, v) in ga.iter_mut().enumerate() {
                            *v += g[map(i)];
                        }
                    })
                }
            }
        }
        Op::Mean { axis } => {
            let a = input_values(&node.inputs[0], inner);
            match axis {
                None => {
                    let scale = 1.0 / a.len() as f64;
                    accumulate(&node.inputs[0], grads, inner, |ga| {
                        for v in ga.iter_mut() {
                            *v += g[0] * scale;
                        }
                    })
                }
                Some(axis) => {
                    let scale = 1.0 / a.shape[*axis] as f64;
                    let map = reduced_index(&a.shape, *axis);
                    accumulate(&node.inputs[0], grads, inner, |ga| {
                        for (i, v) in ga.iter_mut().enumerate() {
                            *v += g[map(i)] * scale;
                        }
                    })
                }
            }
        }
        Op::Max { axis } => {
            // Gradient routes to the first argmax of each reduced group.
            let a = input_values(&node.inputs[0], inner);
            let mut argmax = vec![usize::MAX; node.data.len()];
            match axis {
                None => {
                    let mut best = f64::NEG_INFINITY;
                    for (i, &v) in a.values.iter().enumerate() {
                        if v > best {
                            best = v;
                            argmax[0] = i;
                        }
                    }
                }
                Some(axis) => {
                    let map = reduced_index(&a.shape, *axis);
                    let mut best = vec![f64::NEG_INFINITY; node.data.len()];
                    for (i, &v) in a.values.iter().enumerate() {
                        let o = map(i);
                        if v > best[o] {
                            best[o] = v;
                            argmax[o] = i;
                        }
                    }
                }
            }
            accumulate(&node.inputs[0], grads, inner, |ga| {
                for (o, &src) in argmax.iter().enumerate() {
                    ga[src] += g[o];
                }
            })
        }

        Op::Conv2d { stride, padding } => {
            let input = input_values(&node.inputs[0], inner);
            let kernel = input_values(&node.inputs[1], inner);
            accumulate(&node.inputs[0], grads, inner, |ginp| {
                conv::conv2d_backward_input(
                    ginp,
                    kernel,
                    g,
                    &node.data.shape,
                    &input.shape,
                    *stride,
                    *padding,
                );
            });
            accumulate(&node.inputs[1], grads, inner, |gker| {
                conv::conv2d_backward_kernel(
                    gker,
                    input,
                    g,
                    &node.data.shape,
                    &kernel.shape,
                    *stride,
                    *padding,
                );
            });
        }

        Op::GatherRows { rows } => {
            let a = input_values(&node.inputs[0], inner);
            let width = a.len() / a.shape[0];
            accumulate(&node.inputs[0], grads, inner, |ga| {
                for (j, &row) in rows.iter().enumerate() {
                    for c in 0..width {
                        ga[row * width + c] += g[j * width + c];
                    }
                }
            })
        }
        Op::SelectColumn { col } => {
            let a = input_values(&node.inputs[0], inner);
            let width = a.shape[1];
            let col = *col;
            accumulate(&node.inputs[0], grads, inner, |ga| {
                for (i, &go) in g.iter().enumerate() {
                    ga[i * width + col] += go;
                }
            })
        }
        Op::ChannelsLast => {
            // forward: [C,H,W] -> [H*W, C]
            let a = input_values(&node.inputs[0], inner);
            let (c_dim, h, w) = (a.shape[0], a.shape[1], a.shape[2]);
            accumulate(&node.inputs[0], grads, inner, |ga| {
                for c in 0..c_dim {
                    for p in 0..h * w {
                        ga[c * h * w + p] += g[p * c_dim + c];
                    }
                }
            })
        }
        Op::ConcatRows => {
            let mut offset = 0usize;
            for input in &node.inputs {
                let part_len = input_values(input, inner).len();
                accumulate(input, grads, inner, |gp| {
                    gp.iter_mut()
                        .zip(&g[offset..offset + part_len])
                        .for_each(|(dst, src)| *dst += src);
                });
                offset += part_len;
            }
        }
    }
}
