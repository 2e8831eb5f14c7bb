//! Minimal dense 4-D tensor (batch, channel, height, width), row-major.

use super::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    pub shape: [usize; 4],
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::ZERO; n],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<S>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape/data mismatch"
        );
        Tensor { shape, data }
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Plane size (height * width).
    #[inline]
    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> S {
        let [_, ch, h, w] = self.shape;
        self.data[((b * ch + c) * h + y) * w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, y: usize, x: usize) -> &mut S {
        let [_, ch, h, w] = self.shape;
        &mut self.data[((b * ch + c) * h + y) * w + x]
    }

    /// Concatenate along the channel axis; shapes must otherwise agree.
    pub fn concat_channels(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
        assert_eq!(a.shape[0], b.shape[0]);
        assert_eq!(a.shape[2], b.shape[2]);
        assert_eq!(a.shape[3], b.shape[3]);
        let [n, ca, h, w] = a.shape;
        let cb = b.shape[1];
        let mut out = Tensor::zeros([n, ca + cb, h, w]);
        let plane = h * w;
        for i in 0..n {
            let dst = &mut out.data[i * (ca + cb) * plane..(i + 1) * (ca + cb) * plane];
            dst[..ca * plane].copy_from_slice(&a.data[i * ca * plane..(i + 1) * ca * plane]);
            dst[ca * plane..].copy_from_slice(&b.data[i * cb * plane..(i + 1) * cb * plane]);
        }
        out
    }

    /// Split a channel-concatenated gradient back into two parts of `ca` and
    /// the remaining channels.
    pub fn split_channels(&self, ca: usize) -> (Tensor<S>, Tensor<S>) {
        let [n, c, h, w] = self.shape;
        assert!(ca < c);
        let cb = c - ca;
        let plane = h * w;
        let mut a = Tensor::zeros([n, ca, h, w]);
        let mut b = Tensor::zeros([n, cb, h, w]);
        for i in 0..n {
            let src = &self.data[i * c * plane..(i + 1) * c * plane];
            a.data[i * ca * plane..(i + 1) * ca * plane].copy_from_slice(&src[..ca * plane]);
            b.data[i * cb * plane..(i + 1) * cb * plane].copy_from_slice(&src[ca * plane..]);
        }
        (a, b)
    }
}
