//! Flat parameter storage with named tensor slices.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: &'static str,
    pub shape: (usize, usize),
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    len: usize,
}

impl Layout {
    /// Register a matrix (or a vector as `(1, len)`).
    pub fn add(&mut self, name: &'static str, rows: usize, cols: usize) -> TensorId {
        self.tensors.push(TensorSpec { name, shape: (rows, cols), offset: self.len });
        self.len += rows * cols;
        TensorId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn spec(&self, id: TensorId) -> &TensorSpec {
        &self.tensors[id.0]
    }

    pub fn range(&self, id: TensorId) -> std::ops::Range<usize> {
        let s = &self.tensors[id.0];
        s.offset..s.offset + s.len()
    }
}

/// Read access to a flat buffer through a layout.
pub struct View<'a> {
    pub layout: &'a Layout,
    pub data: &'a [f64],
}

impl<'a> View<'a> {
    pub fn mat(&self, id: TensorId) -> ArrayView2<'a, f64> {
        let s = self.layout.spec(id);
        ArrayView2::from_shape(s.shape, &self.data[self.layout.range(id)]).expect("layout shape")
    }

    pub fn vec(&self, id: TensorId) -> ArrayView1<'a, f64> {
        ArrayView1::from(&self.data[self.layout.range(id)])
    }
}

/// Write access to a flat gradient buffer through a layout.
pub struct ViewMut<'a> {
    pub layout: &'a Layout,
    pub data: &'a mut [f64],
}

impl ViewMut<'_> {
    pub fn mat(&mut self, id: TensorId) -> ArrayViewMut2<'_, f64> {
        let s = self.layout.spec(id);
        let r = self.layout.range(id);
        ArrayViewMut2::from_shape(s.shape, &mut self.data[r]).expect("layout shape")
    }

    pub fn vec(&mut self, id: TensorId) -> ArrayViewMut1<'_, f64> {
        let r = self.layout.range(id);
        ArrayViewMut1::from(&mut self.data[r])
    }
}
