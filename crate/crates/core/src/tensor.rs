//! Dense tensor storage and GEMM-based 3D convolution.
//!
//! Weights and activations live in 5-D tensors laid out so that flattening
//! one filter yields exactly the im2col row ordering: a kernel's 2-D plane
//! is unrolled first (height outer, width inner), planes are concatenated
//! along depth, and channels are concatenated last. Convolution runs either
//! as a naive nested loop ([`conv3d_direct`], the reference oracle) or as
//! [`im2col3d`] + [`matmul`].

use num_traits::Float;

use crate::error::{Error, Result};

/// Scalar type for tensor math. Training paths use `f32`; verification
/// paths (gradient checks, decomposition oracles) use `f64`.
pub trait Real:
    Float
    + num_traits::NumAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense 5-D tensor with dimensions (filters/batch, channels, width, height, depth).
///
/// Storage is row-major in (n, c, d, h, w) order: width varies fastest, then
/// height, then depth, then channel, with the filter/batch index outermost.
/// One filter's flat slice is therefore already in im2col row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5<T> {
    n: usize,
    c: usize,
    w: usize,
    h: usize,
    d: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor5<T> {
    /// Zero-filled tensor of the given dimensions.
    pub fn zeros(n: usize, c: usize, w: usize, h: usize, d: usize) -> Self {
        Self {
            n,
            c,
            w,
            h,
            d,
            data: vec![T::zero(); n * c * w * h * d],
        }
    }

    /// Builds a tensor from flat data in storage order.
    ///
    /// Fails if the length does not match the dimensions or any entry is
    /// non-finite.
    pub fn from_vec(n: usize, c: usize, w: usize, h: usize, d: usize, data: Vec<T>) -> Result<Self> {
        let expected = n * c * w * h * d;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match dims {}x{}x{}x{}x{} = {}",
                data.len(),
                n,
                c,
                w,
                h,
                d,
                expected
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("tensor contains non-finite entries".into()));
        }
        Ok(Self { n, c, w, h, d, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn c(&self) -> usize {
        self.c
    }
    pub fn w(&self) -> usize {
        self.w
    }
    pub fn h(&self) -> usize {
        self.h
    }
    pub fn d(&self) -> usize {
        self.d
    }

    /// (n, c, w, h, d)
    pub fn dims(&self) -> (usize, usize, usize, usize, usize) {
        (self.n, self.c, self.w, self.h, self.d)
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elements per outermost (filter/batch) slot.
    pub fn slot_len(&self) -> usize {
        self.c * self.w * self.h * self.d
    }

    /// Flat index of (n, c, d, h, w) coordinates.
    #[inline]
    pub fn idx(&self, ni: usize, ci: usize, di: usize, hi: usize, wi: usize) -> usize {
        (((ni * self.c + ci) * self.d + di) * self.h + hi) * self.w + wi
    }

    #[inline]
    pub fn get(&self, ni: usize, ci: usize, di: usize, hi: usize, wi: usize) -> T {
        self.data[self.idx(ni, ci, di, hi, wi)]
    }

    #[inline]
    pub fn set(&mut self, ni: usize, ci: usize, di: usize, hi: usize, wi: usize, v: T) {
        let i = self.idx(ni, ci, di, hi, wi);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Flat slice of one outermost slot (one sample or one filter).
    pub fn slot(&self, ni: usize) -> &[T] {
        let len = self.slot_len();
        &self.data[ni * len..(ni + 1) * len]
    }

    /// Copies one sample out of a batch into its own tensor with n = 1.
    pub fn sample(&self, ni: usize) -> Self {
        Self {
            n: 1,
            c: self.c,
            w: self.w,
            h: self.h,
            d: self.d,
            data: self.slot(ni).to_vec(),
        }
    }

    /// Gathers the given outermost slots into a new tensor, in order.
    pub fn gather_slots(&self, ids: &[usize]) -> Self {
        let len = self.slot_len();
        let mut data = Vec::with_capacity(ids.len() * len);
        for &i in ids {
            data.extend_from_slice(self.slot(i));
        }
        Self {
            n: ids.len(),
            c: self.c,
            w: self.w,
            h: self.h,
            d: self.d,
            data,
        }
    }

    /// Reinterprets the tensor as an (n) x (c*w*h*d) matrix without copying
    /// semantics beyond the clone of the data vector.
    pub fn as_filter_matrix(&self) -> Matrix<T> {
        Matrix {
            rows: self.n,
            cols: self.slot_len(),
            data: self.data.clone(),
        }
    }

    pub fn converted<U: Real>(&self) -> Tensor5<U> {
        Tensor5 {
            n: self.n,
            c: self.c,
            w: self.w,
            h: self.h,
            d: self.d,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn transposed(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, keep.len());
        for r in 0..self.rows {
            let src = self.row(r);
            let dst = out.row_mut(r);
            for (j, &c) in keep.iter().enumerate() {
                dst[j] = src[c];
            }
        }
        out
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        let mut data = Vec::with_capacity(keep.len() * self.cols);
        for &r in keep {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: keep.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn converted<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Geometry of one 3D convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_filters: usize,
    /// (kw, kh, kd)
    pub kernel: (usize, usize, usize),
    /// (sw, sh, sd)
    pub stride: (usize, usize, usize),
    /// (pw, ph, pd), zero-fill
    pub padding: (usize, usize, usize),
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_filters: usize,
        kernel: (usize, usize, usize),
        stride: (usize, usize, usize),
        padding: (usize, usize, usize),
    ) -> Result<Self> {
        let spec = Self {
            in_channels,
            out_filters,
            kernel,
            stride,
            padding,
        };
        if kernel.0 == 0 || kernel.1 == 0 || kernel.2 == 0 {
            return Err(Error::Shape("kernel dims must be >= 1".into()));
        }
        if stride.0 == 0 || stride.1 == 0 || stride.2 == 0 {
            return Err(Error::Shape("stride dims must be >= 1".into()));
        }
        if in_channels == 0 || out_filters == 0 {
            return Err(Error::Shape("channel and filter counts must be >= 1".into()));
        }
        Ok(spec)
    }

    /// Elements of one im2col column: channels x kernel volume.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1 * self.kernel.2
    }

    /// Output (w, h, d) for the given input spatial dims.
    pub fn output_dims(&self, w: usize, h: usize, d: usize) -> Result<(usize, usize, usize)> {
        let out = |size: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            let padded = size + 2 * p;
            if padded < k {
                return Err(Error::Shape(format!(
                    "input extent {size} with padding {p} is smaller than kernel {k}"
                )));
            }
            Ok((padded - k) / s + 1)
        };
        Ok((
            out(w, self.kernel.0, self.stride.0, self.padding.0)?,
            out(h, self.kernel.1, self.stride.1, self.padding.1)?,
            out(d, self.kernel.2, self.stride.2, self.padding.2)?,
        ))
    }

    fn check_input<T: Real>(&self, input: &Tensor5<T>) -> Result<()> {
        if input.c() != self.in_channels {
            return Err(Error::Shape(format!(
                "input has {} channels, spec expects {}",
                input.c(),
                self.in_channels
            )));
        }
        Ok(())
    }

    fn check_weights<T: Real>(&self, weights: &Tensor5<T>) -> Result<()> {
        let (n, c, w, h, d) = weights.dims();
        if n != self.out_filters
            || c != self.in_channels
            || (w, h, d) != (self.kernel.0, self.kernel.1, self.kernel.2)
        {
            return Err(Error::Shape(format!(
                "weight dims ({n},{c},{w},{h},{d}) do not match spec \
                 ({},{},{},{},{})",
                self.out_filters, self.in_channels, self.kernel.0, self.kernel.1, self.kernel.2
            )));
        }
        Ok(())
    }
}

/// Expands one sample into the im2col matrix for 3D convolution.
///
/// Rows unroll the kernel plane first (height outer, width inner), then
/// depth, then channel: row = ((ci*kd + di)*kh + hi)*kw + wi. Columns walk
/// output positions with width fastest, then height, then depth.
pub fn im2col3d<T: Real>(input: &Tensor5<T>, spec: &ConvSpec) -> Result<Matrix<T>> {
    if input.n() != 1 {
        return Err(Error::Shape(format!(
            "im2col3d expects a single sample, got batch of {}",
            input.n()
        )));
    }
    spec.check_input(input)?;
    let (ow, oh, od) = spec.output_dims(input.w(), input.h(), input.d())?;
    let mut out = Matrix::zeros(spec.patch_len(), ow * oh * od);
    im2col3d_into(input, 0, spec, (ow, oh, od), &mut out);
    Ok(out)
}

/// Fills a preallocated im2col matrix from one sample of a batch.
pub(crate) fn im2col3d_into<T: Real>(
    input: &Tensor5<T>,
    sample: usize,
    spec: &ConvSpec,
    out_dims: (usize, usize, usize),
    out: &mut Matrix<T>,
) {
    let (kw, kh, kd) = spec.kernel;
    let (sw, sh, sd) = spec.stride;
    let (pw, ph, pd) = spec.padding;
    let (ow, oh, od) = out_dims;
    let (iw, ih, id) = (input.w() as isize, input.h() as isize, input.d() as isize);
    let cols = ow * oh * od;

    let mut row = 0;
    for ci in 0..spec.in_channels {
        for di in 0..kd {
            for hi in 0..kh {
                for wi in 0..kw {
                    let dst = out.row_mut(row);
                    let mut col = 0;
                    for odi in 0..od {
                        let src_d = (odi * sd + di) as isize - pd as isize;
                        let d_ok = src_d >= 0 && src_d < id;
                        for ohi in 0..oh {
                            let src_h = (ohi * sh + hi) as isize - ph as isize;
                            let h_ok = src_h >= 0 && src_h < ih;
                            for owi in 0..ow {
                                let src_w = (owi * sw + wi) as isize - pw as isize;
                                dst[col] = if d_ok && h_ok && src_w >= 0 && src_w < iw {
                                    input.get(
                                        sample,
                                        ci,
                                        src_d as usize,
                                        src_h as usize,
                                        src_w as usize,
                                    )
                                } else {
                                    T::zero()
                                };
                                col += 1;
                            }
                        }
                    }
                    debug_assert_eq!(col, cols);
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col3d`]: scatter-adds column-matrix gradients back onto
/// the input gradient of one sample.
pub(crate) fn col2im3d_into<T: Real>(
    cols: &Matrix<T>,
    sample: usize,
    spec: &ConvSpec,
    out_dims: (usize, usize, usize),
    grad_input: &mut Tensor5<T>,
) {
    let (kw, kh, kd) = spec.kernel;
    let (sw, sh, sd) = spec.stride;
    let (pw, ph, pd) = spec.padding;
    let (ow, oh, od) = out_dims;
    let (iw, ih, id) = (
        grad_input.w() as isize,
        grad_input.h() as isize,
        grad_input.d() as isize,
    );

    let mut row = 0;
    for ci in 0..spec.in_channels {
        for di in 0..kd {
            for hi in 0..kh {
                for wi in 0..kw {
                    let src = cols.row(row);
                    let mut col = 0;
                    for odi in 0..od {
                        let src_d = (odi * sd + di) as isize - pd as isize;
                        let d_ok = src_d >= 0 && src_d < id;
                        for ohi in 0..oh {
                            let src_h = (ohi * sh + hi) as isize - ph as isize;
                            let h_ok = src_h >= 0 && src_h < ih;
                            for owi in 0..ow {
                                let src_w = (owi * sw + wi) as isize - pw as isize;
                                if d_ok && h_ok && src_w >= 0 && src_w < iw {
                                    let i = grad_input.idx(
                                        sample,
                                        ci,
                                        src_d as usize,
                                        src_h as usize,
                                        src_w as usize,
                                    );
                                    grad_input.data_mut()[i] += src[col];
                                }
                                col += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Row-major matrix product with a fixed accumulation order (k inner,
/// ascending), so results do not depend on blocking or threading.
pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul inner dims differ: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out);
    Ok(out)
}

pub(crate) fn matmul_into<T: Real>(a: &Matrix<T>, b: &Matrix<T>, out: &mut Matrix<T>) {
    let n = b.cols;
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        orow.iter_mut().for_each(|v| *v = T::zero());
        for (k, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// a^T * b without materializing the transpose.
pub(crate) fn matmul_at_b<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows != b.rows {
        return Err(Error::Shape(format!(
            "matmul_at_b row counts differ: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let arow = a.row(k);
        let brow = b.row(k);
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = out.row_mut(i);
            for j in 0..b.cols {
                orow[j] += av * brow[j];
            }
        }
    }
    Ok(out)
}

/// a * b^T without materializing the transpose.
pub(crate) fn matmul_a_bt<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.cols {
        return Err(Error::Shape(format!(
            "matmul_a_bt col counts differ: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for j in 0..b.rows {
            let brow = b.row(j);
            let mut acc = T::zero();
            for k in 0..a.cols {
                acc += arow[k] * brow[k];
            }
            orow[j] = acc;
        }
    }
    Ok(out)
}

/// Reference 3D convolution: a naive nested loop with zero padding.
///
/// Serves as the correctness oracle for the im2col + matmul path.
pub fn conv3d_direct<T: Real>(
    input: &Tensor5<T>,
    weights: &Tensor5<T>,
    spec: &ConvSpec,
) -> Result<Tensor5<T>> {
    spec.check_input(input)?;
    spec.check_weights(weights)?;
    let (ow, oh, od) = spec.output_dims(input.w(), input.h(), input.d())?;
    let (kw, kh, kd) = spec.kernel;
    let (sw, sh, sd) = spec.stride;
    let (pw, ph, pd) = spec.padding;
    let (iw, ih, id) = (input.w() as isize, input.h() as isize, input.d() as isize);

    let mut out = Tensor5::zeros(input.n(), spec.out_filters, ow, oh, od);
    for ni in 0..input.n() {
        for fi in 0..spec.out_filters {
            for odi in 0..od {
                for ohi in 0..oh {
                    for owi in 0..ow {
                        let mut acc = T::zero();
                        for ci in 0..spec.in_channels {
                            for di in 0..kd {
                                let src_d = (odi * sd + di) as isize - pd as isize;
                                if src_d < 0 || src_d >= id {
                                    continue;
                                }
                                for hi in 0..kh {
                                    let src_h = (ohi * sh + hi) as isize - ph as isize;
                                    if src_h < 0 || src_h >= ih {
                                        continue;
                                    }
                                    for wi in 0..kw {
                                        let src_w = (owi * sw + wi) as isize - pw as isize;
                                        if src_w < 0 || src_w >= iw {
                                            continue;
                                        }
                                        acc += weights.get(fi, ci, di, hi, wi)
                                            * input.get(
                                                ni,
                                                ci,
                                                src_d as usize,
                                                src_h as usize,
                                                src_w as usize,
                                            );
                                    }
                                }
                            }
                        }
                        out.set(ni, fi, odi, ohi, owi, acc);
                    }
                }
            }
        }
    }
    Ok(out)
}
