//! `DiffArray`: a dense f64 array that optionally participates in a
//! computation record. Operations between constants stay constant, so the
//! same forward code serves training (tracked leaves) and inference.

use super::conv;
use super::data::{broadcast_shape, ArrayData, BroadcastMap};
use super::error::{DiffError, DiffResult};
use super::tape::{Input, Node, Op, Tape};

/// Dense multi-dimensional array of f64, row-major. Tracked arrays carry a
/// handle to the record node that produced them; constants carry none.
#[derive(Clone)]
pub struct DiffArray {
    data: ArrayData,
    node: Option<(Tape, usize)>,
}

impl std::fmt::Debug for DiffArray {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffArray")
            .field("shape", &self.data.shape)
            .field("tracked", &self.node.is_some())
            .field("values", &self.data.values)
            .finish()
    }
}

impl DiffArray {
    pub fn constant(shape: Vec<usize>, values: Vec<f64>) -> DiffResult<Self> {
        let data = ArrayData::new(shape, values)?;
        if data.is_empty() {
            return Err(DiffError::InvalidShape {
                op: "constant",
                detail: "arrays must hold at least one element".into(),
            });
        }
        Ok(DiffArray { data, node: None })
    }

    pub fn scalar(v: f64) -> Self {
        DiffArray {
            data: ArrayData::scalar(v),
            node: None,
        }
    }

    pub fn vector(values: Vec<f64>) -> DiffResult<Self> {
        let n = values.len();
        DiffArray::constant(vec![n], values)
    }

    pub fn ones(shape: Vec<usize>) -> DiffResult<Self> {
        let n = shape.iter().product();
        DiffArray::constant(shape, vec![1.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.data.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.data.values
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Single value of a scalar-shaped array.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1, "item() on non-scalar array");
        self.data.values[0]
    }

    pub(crate) fn node_id(&self) -> Option<(Tape, usize)> {
        self.node.clone()
    }

    fn as_input(&self) -> Input {
        match &self.node {
            Some((_, id)) => Input::Node(*id),
            None => Input::Const(self.data.clone()),
        }
    }

    /// The record shared by the tracked operands, if any. Errors when two
    /// operands belong to different records.
    fn join_tape(op: &'static str, parts: &[&DiffArray]) -> DiffResult<Option<Tape>> {
        let mut found: Option<Tape> = None;
        for p in parts {
            if let Some((tape, _)) = &p.node {
                match &found {
                    None => found = Some(tape.clone()),
                    Some(t) if t.same_record(tape) => {}
                    Some(_) => return Err(DiffError::TapeMismatch { op }),
                }
            }
        }
        Ok(found)
    }

    fn emit(op: Op, parts: &[&DiffArray], data: ArrayData) -> DiffResult<DiffArray> {
        let tape = DiffArray::join_tape(op.name(), parts)?;
        match tape {
            None => Ok(DiffArray { data, node: None }),
            Some(tape) => {
                let node = Node {
                    op,
                    inputs: parts.iter().map(|p| p.as_input()).collect(),
                    data: data.clone(),
                };
                let id = tape.push(node);
                Ok(DiffArray {
                    data,
                    node: Some((tape, id)),
                })
            }
        }
    }

    // ── leaves ──────────────────────────────────────────────────────────

    /// Registers a tracked leaf on `tape`.
    pub fn leaf(tape: &Tape, shape: Vec<usize>, values: Vec<f64>) -> DiffResult<Self> {
        let data = ArrayData::new(shape, values)?;
        if data.is_empty() {
            return Err(DiffError::InvalidShape {
                op: "leaf",
                detail: "arrays must hold at least one element".into(),
            });
        }
        let id = tape.push(Node {
            op: Op::Leaf,
            inputs: vec![],
            data: data.clone(),
        });
        Ok(DiffArray {
            data,
            node: Some((tape.clone(), id)),
        })
    }

    // ── elementwise binary ──────────────────────────────────────────────

    fn binary(
        &self,
        other: &DiffArray,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> DiffResult<DiffArray> {
        let out_shape = broadcast_shape(self.shape(), other.shape()).ok_or_else(|| {
            DiffError::ShapeMismatch {
                op: op.name(),
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            }
        })?;
        let map_a = BroadcastMap::new(&out_shape, self.shape());
        let map_b = BroadcastMap::new(&out_shape, other.shape());
        let n: usize = out_shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for o in 0..n {
            values.push(f(
                self.data.values[map_a.src_index(o)],
                other.data.values[map_b.src_index(o)],
            ));
        }
        DiffArray::emit(
            op,
            &[self, other],
            ArrayData {
                shape: out_shape,
                values,
            },
        )
    }

    pub fn add(&self, other: &DiffArray) -> DiffResult<DiffArray> {
        self.binary(other, Op::Add, |a, b| a + b)
    }

    pub fn sub(&self, other: &DiffArray) -> DiffResult<DiffArray> {
        self.binary(other, Op::Sub, |a, b| a - b)
    }

    pub fn mul(&self, other: &DiffArray) -> DiffResult<DiffArray> {
        self.binary(other, Op::Mul, |a, b| a * b)
    }

    /// Elementwise division. Rejects exact-zero denominators; callers keep
    /// denominators away from zero (clamped floors) per the documented domain.
    pub fn div(&self, other: &DiffArray) -> DiffResult<DiffArray> {
        if other.values().contains(&0.0) {
            return Err(DiffError::Domain {
                op: "div",
                detail: "denominator contains zero".into(),
            });
        }
        self.binary(other, Op::Div, |a, b| a / b)
    }

    // ── elementwise unary ───────────────────────────────────────────────

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> DiffResult<DiffArray> {
        let values = self.data.values.iter().map(|&a| f(a)).collect();
        DiffArray::emit(
            op,
            &[self],
            ArrayData {
                shape: self.data.shape.clone(),
                values,
            },
        )
    }

    pub fn exp(&self) -> DiffArray {
        self.unary(Op::Exp, f64::exp).expect("unary op cannot fail")
    }

    /// Natural logarithm. Rejects non-positive inputs; callers clamp to
    /// `[1e-12, inf)` first where zeros are reachable.
    pub fn log(&self) -> DiffResult<DiffArray> {
        if self.values().iter().any(|&a| a <= 0.0) {
            return Err(DiffError::Domain {
                op: "log",
                detail: "input contains a non-positive value".into(),
            });
        }
        self.unary(Op::Log, f64::ln)
    }

    pub fn sigmoid(&self) -> DiffArray {
        self.unary(Op::Sigmoid, |a| {
            // numerically stable on both tails
            if a >= 0.0 {
                1.0 / (1.0 + (-a).exp())
            } else {
                let e = a.exp();
                e / (1.0 + e)
            }
        })
        .expect("unary op cannot fail")
    }

    pub fn relu(&self) -> DiffArray {
        self.unary(Op::Relu, |a| a.max(0.0))
            .expect("unary op cannot fail")
    }

    pub fn neg(&self) -> DiffArray {
        self.unary(Op::Negate, |a| -a)
            .expect("unary op cannot fail")
    }

    /// Elementwise `a^p` for a constant exponent. Negative bases require an
    /// integer exponent; zero bases require `p == 0` or `p >= 1` so the
    /// gradient stays finite.
    pub fn powf(&self, p: f64) -> DiffResult<DiffArray> {
        let fractional = p.fract() != 0.0;
        for &a in self.values() {
            if a < 0.0 && fractional {
                return Err(DiffError::Domain {
                    op: "power",
                    detail: format!("negative base {a} with fractional exponent {p}"),
                });
            }
            if a == 0.0 && p != 0.0 && p < 1.0 {
                return Err(DiffError::Domain {
                    op: "power",
                    detail: format!("zero base with exponent {p} < 1"),
                });
            }
        }
        self.unary(Op::Power(p), |a| if p == 0.0 { 1.0 } else { a.powf(p) })
    }

    /// Elementwise clamp to `[lo, hi]`. Gradient passes through inside the
    /// closed interval and is zero outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> DiffResult<DiffArray> {
        if lo > hi {
            return Err(DiffError::Domain {
                op: "clamp",
                detail: format!("lo {lo} > hi {hi}"),
            });
        }
        self.unary(Op::Clamp { lo, hi }, |a| a.clamp(lo, hi))
    }

    pub fn add_scalar(&self, s: f64) -> DiffArray {
        self.add(&DiffArray::scalar(s))
            .expect("scalar broadcast cannot fail")
    }

    pub fn mul_scalar(&self, s: f64) -> DiffArray {
        self.mul(&DiffArray::scalar(s))
            .expect("scalar broadcast cannot fail")
    }

    // ── reductions ──────────────────────────────────────────────────────

    fn check_axis(&self, op: &'static str, axis: Option<usize>) -> DiffResult<()> {
        if let Some(a) = axis {
            if a >= self.data.shape.len() {
                return Err(DiffError::AxisOutOfRange {
                    axis: a,
                    rank: self.data.shape.len(),
                });
            }
        }
        let _ = op;
        Ok(())
    }

    fn reduced_shape(&self, axis: Option<usize>) -> Vec<usize> {
        match axis {
            None => vec![1],
            Some(a) => {
                let mut s = self.data.shape.clone();
                s.remove(a);
                if s.is_empty() {
                    s.push(1);
                }
                s
            }
        }
    }

    fn reduce(
        &self,
        op: Op,
        axis: Option<usize>,
        init: f64,
        combine: impl Fn(f64, f64) -> f64,
        finish: impl Fn(f64, usize) -> f64,
    ) -> DiffResult<DiffArray> {
        self.check_axis(op.name(), axis)?;
        let out_shape = self.reduced_shape(axis);
        let out_len: usize = out_shape.iter().product();
        let mut out = vec![init; out_len];
        match axis {
            None => {
                for &v in &self.data.values {
                    out[0] = combine(out[0], v);
                }
                out[0] = finish(out[0], self.len());
            }
            Some(a) => {
                let group = self.data.shape[a];
                let map = axis_drop_map(&self.data.shape, a);
                for (i, &v) in self.data.values.iter().enumerate() {
                    let o = map(i);
                    out[o] = combine(out[o], v);
                }
                for v in out.iter_mut() {
                    *v = finish(*v, group);
                }
            }
        }
        DiffArray::emit(
            op,
            &[self],
            ArrayData {
                shape: out_shape,
                values: out,
            },
        )
    }

    pub fn sum(&self) -> DiffArray {
        self.reduce(Op::Sum { axis: None }, None, 0.0, |a, v| a + v, |a, _| a)
            .expect("full reduction cannot fail")
    }

    pub fn sum_axis(&self, axis: usize) -> DiffResult<DiffArray> {
        self.reduce(
            Op::Sum { axis: Some(axis) },
            Some(axis),
            0.0,
            |a, v| a + v,
            |a, _| a,
        )
    }

    pub fn mean(&self) -> DiffArray {
        self.reduce(
            Op::Mean { axis: None },
            None,
            0.0,
            |a, v| a + v,
            |a, n| a / n as f64,
        )
        .expect("full reduction cannot fail")
    }

    pub fn mean_axis(&self, axis: usize) -> DiffResult<DiffArray> {
        self.reduce(
            Op::Mean { axis: Some(axis) },
            Some(axis),
            0.0,
            |a, v| a + v,
            |a, n| a / n as f64,
        )
    }

    /// Max reduction. Backward routes the gradient to the first index that
    /// attains the maximum, so tie handling is deterministic.
    pub fn max(&self) -> DiffArray {
        self.reduce(
            Op::Max { axis: None },
            None,
            f64::NEG_INFINITY,
            f64::max,
            |a, _| a,
        )
        .expect("full reduction cannot fail")
    }

    pub fn max_axis(&self, axis: usize) -> DiffResult<DiffArray> {
        self.reduce(
            Op::Max { axis: Some(axis) },
            Some(axis),
            f64::NEG_INFINITY,
            f64::max,
            |a, _| a,
        )
    }

    // ── gradient control ────────────────────────────────────────────────

    /// Identity forward; contributes zero gradient to every ancestor.
    pub fn stop_gradient(&self) -> DiffArray {
        DiffArray::emit(Op::StopGradient, &[self], self.data.clone())
            .expect("identity op cannot fail")
    }

    // ── structure ───────────────────────────────────────────────────────

    /// Gathers rows of a 2-D array by index; duplicate indices accumulate
    /// gradient additively.
    pub fn gather_rows(&self, rows: &[usize]) -> DiffResult<DiffArray> {
        if self.data.shape.len() != 2 {
            return Err(DiffError::InvalidShape {
                op: "gather_rows",
                detail: format!("expected rank 2, got {:?}", self.data.shape),
            });
        }
        if rows.is_empty() {
            return Err(DiffError::InvalidShape {
                op: "gather_rows",
                detail: "empty row index list".into(),
            });
        }
        let (n, width) = (self.data.shape[0], self.data.shape[1]);
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(DiffError::InvalidShape {
                op: "gather_rows",
                detail: format!("row {bad} out of range for {n} rows"),
            });
        }
        let mut values = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            values.extend_from_slice(&self.data.values[r * width..(r + 1) * width]);
        }
        DiffArray::emit(
            Op::GatherRows {
                rows: rows.to_vec(),
            },
            &[self],
            ArrayData {
                shape: vec![rows.len(), width],
                values,
            },
        )
    }

    /// Extracts one column of a 2-D array as a 1-D array.
    pub fn select_column(&self, col: usize) -> DiffResult<DiffArray> {
        if self.data.shape.len() != 2 {
            return Err(DiffError::InvalidShape {
                op: "select_column",
                detail: format!("expected rank 2, got {:?}", self.data.shape),
            });
        }
        let (n, width) = (self.data.shape[0], self.data.shape[1]);
        if col >= width {
            return Err(DiffError::InvalidShape {
                op: "select_column",
                detail: format!("column {col} out of range for width {width}"),
            });
        }
        let values = (0..n).map(|i| self.data.values[i * width + col]).collect();
        DiffArray::emit(
            Op::SelectColumn { col },
            &[self],
            ArrayData {
                shape: vec![n],
                values,
            },
        )
    }

    /// Rearranges a `[C, H, W]` map into `[H*W, C]` rows in row-major spatial
    /// order, the layout used for per-location predictions.
    pub fn channels_last(&self) -> DiffResult<DiffArray> {
        if self.data.shape.len() != 3 {
            return Err(DiffError::InvalidShape {
                op: "channels_last",
                detail: format!("expected rank 3, got {:?}", self.data.shape),
            });
        }
        let (c, h, w) = (self.data.shape[0], self.data.shape[1], self.data.shape[2]);
        let mut values = vec![0.0; self.len()];
        for ch in 0..c {
            for p in 0..h * w {
                values[p * c + ch] = self.data.values[ch * h * w + p];
            }
        }
        DiffArray::emit(
            Op::ChannelsLast,
            &[self],
            ArrayData {
                shape: vec![h * w, c],
                values,
            },
        )
    }

    /// Stacks arrays along axis 0. Trailing dimensions must match.
    pub fn concat_rows(parts: &[&DiffArray]) -> DiffResult<DiffArray> {
        if parts.is_empty() {
            return Err(DiffError::InvalidShape {
                op: "concat_rows",
                detail: "no parts".into(),
            });
        }
        let tail = &parts[0].shape()[1..];
        for p in parts {
            if &p.shape()[1..] != tail {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let rows: usize = parts.iter().map(|p| p.shape()[0]).sum();
        let mut shape = vec![rows];
        shape.extend_from_slice(tail);
        let mut values = Vec::with_capacity(shape.iter().product());
        for p in parts {
            values.extend_from_slice(p.values());
        }
        DiffArray::emit(Op::ConcatRows, parts, ArrayData { shape, values })
    }

    /// 2-D cross-correlation: input `[C,H,W]`, kernel `[F,C,k,k]` with odd
    /// `k`, producing `[F,H',W']`.
    pub fn conv2d(
        &self,
        kernel: &DiffArray,
        stride: usize,
        padding: usize,
    ) -> DiffResult<DiffArray> {
        if self.data.shape.len() != 3 || kernel.data.shape.len() != 4 {
            return Err(DiffError::InvalidShape {
                op: "conv2d",
                detail: format!(
                    "input {:?} / kernel {:?}",
                    self.data.shape, kernel.data.shape
                ),
            });
        }
        let k = kernel.data.shape[2];
        if k.is_multiple_of(2) || kernel.data.shape[3] != k {
            return Err(DiffError::InvalidShape {
                op: "conv2d",
                detail: format!(
                    "kernel window must be square and odd, got {:?}",
                    kernel.data.shape
                ),
            });
        }
        if kernel.data.shape[1] != self.data.shape[0] {
            return Err(DiffError::ShapeMismatch {
                op: "conv2d",
                lhs: self.data.shape.clone(),
                rhs: kernel.data.shape.clone(),
            });
        }
        if stride == 0 {
            return Err(DiffError::Domain {
                op: "conv2d",
                detail: "stride must be positive".into(),
            });
        }
        let oh = conv::out_dim(self.data.shape[1], k, stride, padding);
        let ow = conv::out_dim(self.data.shape[2], k, stride, padding);
        match (oh, ow) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => {}
            _ => {
                return Err(DiffError::InvalidShape {
                    op: "conv2d",
                    detail: format!(
                    "non-positive output for input {:?}, k {k}, stride {stride}, padding {padding}",
                    self.data.shape
                ),
                })
            }
        }
        let data = conv::conv2d_forward(&self.data, &kernel.data, stride, padding);
        DiffArray::emit(Op::Conv2d { stride, padding }, &[self, kernel], data)
    }
}

/// Flat-index map that drops one axis (shared by reductions).
fn axis_drop_map(shape: &[usize], axis: usize) -> impl Fn(usize) -> usize {
    let strides = super::data::strides_of(shape);
    let axis_stride = strides[axis];
    let axis_len = shape[axis];
    move |in_flat: usize| {
        let before = in_flat / (axis_stride * axis_len);
        let after = in_flat % axis_stride;
        before * axis_stride + after
    }
}
