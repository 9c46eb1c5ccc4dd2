//! Flat dense storage and shape/broadcast index arithmetic shared by the
//! forward ops and the backward pass.

use super::error::{DiffError, DiffResult};

/// Shape plus row-major flat values. The unit of storage for tape nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayData {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ArrayData {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> DiffResult<Self> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(DiffError::InvalidShape {
                op: "array",
                detail: format!(
                    "shape {:?} implies {} elements, got {}",
                    shape,
                    numel,
                    values.len()
                ),
            });
        }
        Ok(ArrayData { shape, values })
    }

    pub fn scalar(v: f64) -> Self {
        ArrayData {
            shape: vec![1],
            values: vec![v],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row-major strides for a shape.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Result shape of broadcasting `a` against `b` with right-aligned dims.
/// Each pair of dims must be equal or one of them must be 1.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() {
            1
        } else {
            a[i - (rank - a.len())]
        };
        let db = if i < rank - b.len() {
            1
        } else {
            b[i - (rank - b.len())]
        };
        if da == db {
            out[i] = da;
        } else if da == 1 {
            out[i] = db;
        } else if db == 1 {
            out[i] = da;
        } else {
            return None;
        }
    }
    Some(out)
}

/// Maps flat indices in a broadcast output back to flat indices of one
/// operand. Broadcast dims get stride 0 so they collapse to index 0.
pub struct BroadcastMap {
    out_shape: Vec<usize>,
    out_strides: Vec<usize>,
    src_strides: Vec<usize>,
    identity: bool,
}

impl BroadcastMap {
    pub fn new(out_shape: &[usize], src_shape: &[usize]) -> Self {
        let rank = out_shape.len();
        let pad = rank - src_shape.len();
        let src_natural = strides_of(src_shape);
        let mut src_strides = vec![0usize; rank];
        for i in 0..src_shape.len() {
            src_strides[pad + i] = if src_shape[i] == 1 { 0 } else { src_natural[i] };
        }
        let identity = out_shape == src_shape;
        BroadcastMap {
            out_shape: out_shape.to_vec(),
            out_strides: strides_of(out_shape),
            src_strides,
            identity,
        }
    }

    #[inline]
    pub fn src_index(&self, out_flat: usize) -> usize {
        if self.identity {
            return out_flat;
        }
        let mut idx = 0usize;
        for d in 0..self.out_shape.len() {
            let coord = (out_flat / self.out_strides[d]) % self.out_shape[d];
            idx += coord * self.src_strides[d];
        }
        idx
    }
}
