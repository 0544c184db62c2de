//! Minimal 4-D tensor: (count, channels, height, width) over f64.

/// Dense NCHW tensor. All layer math runs at 64-bit precision so analytic
/// gradients can be validated against central finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length mismatch");
        Tensor { n, c, h, w, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Samples per item, i.e. the flattened feature count.
    pub fn features(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(n, c, y, x)]
    }

    /// Contiguous view of one item's features.
    pub fn item(&self, n: usize) -> &[f64] {
        let f = self.features();
        &self.data[n * f..(n + 1) * f]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f64] {
        let f = self.features();
        &mut self.data[n * f..(n + 1) * f]
    }

    /// Copy selected items into a new tensor, in the order given.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let f = self.features();
        let mut data = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            data.extend_from_slice(self.item(i));
        }
        Tensor::from_vec(indices.len(), self.c, self.h, self.w, data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
