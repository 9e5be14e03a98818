//! Dense row-major tensors of `f64` and the shape primitives built on them.
//!
//! Axis convention for a batch of 4D samples is
//! `[batch, time, depth, height, width, channel]`; single volumes drop the
//! time axis.

use std::io::{Read, Write};

use crate::error::{invalid, shape_err, Error, Result};

/// Largest supported rank: batch + time + three spatial axes + channel.
pub const MAX_RANK: usize = 6;

/// Magic bytes opening a binary tensor record.
pub const RECORD_MAGIC: &[u8; 4] = b"V4DT";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(shape_err!("rank {} outside 1..={MAX_RANK}", shape.len()));
    }
    if let Some(axis) = shape.iter().position(|&e| e == 0) {
        return Err(shape_err!("zero extent on axis {axis} of {shape:?}"));
    }
    Ok(shape.iter().product())
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![1; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        out[axis] = out[axis + 1] * shape[axis + 1];
    }
    out
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(shape_err!(
                "length mismatch: shape {shape:?} needs {len} values, got {}",
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Copies `data` into a new tensor.
    pub fn from_slice(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.to_vec())
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    // Internal constructor for shapes already validated by the caller.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat copy of the values in row-major order.
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.rank() {
            return Err(shape_err!(
                "index {index:?} has rank {}, tensor has rank {}",
                index.len(),
                self.rank()
            ));
        }
        let mut flat = 0;
        for (axis, (&i, &extent)) in index.iter().zip(&self.shape).enumerate() {
            if i >= extent {
                return Err(shape_err!("index {i} out of range on axis {axis} (extent {extent})"));
            }
            flat = flat * extent + i;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.flat_index(index)?])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(shape_err!("shape {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Writes the `V4DT` binary record.
    pub fn write_record<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(RECORD_MAGIC)?;
        w.write_all(&[self.rank() as u8])?;
        for &extent in &self.shape {
            let extent = u32::try_from(extent)
                .map_err(|_| invalid!("extent {extent} does not fit in u32"))?;
            w.write_all(&extent.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_record<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RECORD_MAGIC {
            return Err(Error::Format(format!("bad tensor magic {magic:?}")));
        }
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let rank = rank[0] as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::Format(format!("tensor record rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            shape.push(u32::from_le_bytes(b) as usize);
        }
        let len = check_shape(&shape).map_err(|e| Error::Format(e.to_string()))?;
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { shape, data })
    }
}

/// Per-axis `(before, after)` padding amounts plus the fill value.
#[derive(Debug, Clone, PartialEq)]
pub struct PadSpec {
    pub amounts: Vec<(usize, usize)>,
    pub fill: f64,
}

impl PadSpec {
    pub fn zeros(amounts: Vec<(usize, usize)>) -> Self {
        Self { amounts, fill: 0.0 }
    }

    pub fn none(rank: usize) -> Self {
        Self::zeros(vec![(0, 0); rank])
    }

    /// Pads only `axis`, leaving the rest untouched.
    pub fn on_axis(rank: usize, axis: usize, before: usize, after: usize) -> Self {
        let mut amounts = vec![(0, 0); rank];
        amounts[axis] = (before, after);
        Self::zeros(amounts)
    }
}

pub fn pad(t: &Tensor, p: &PadSpec) -> Result<Tensor> {
    if p.amounts.len() != t.rank() {
        return Err(shape_err!(
            "pad spec rank {} does not match tensor rank {}",
            p.amounts.len(),
            t.rank()
        ));
    }
    let out_shape: Vec<usize> = t
        .shape
        .iter()
        .zip(&p.amounts)
        .map(|(&e, &(b, a))| e + b + a)
        .collect();
    check_shape(&out_shape)?;
    let out_len = out_shape.iter().product();
    let mut out = vec![p.fill; out_len];
    let out_strides = strides(&out_shape);
    let offset: usize = p
        .amounts
        .iter()
        .zip(&out_strides)
        .map(|(&(b, _), &s)| b * s)
        .sum();

    // Copy rows along the innermost axis.
    let inner = *t.shape.last().unwrap();
    let rows = t.len() / inner;
    let outer = &t.shape[..t.rank() - 1];
    let mut idx = vec![0usize; outer.len()];
    for row in 0..rows {
        let dst: usize = offset
            + idx
                .iter()
                .zip(&out_strides)
                .map(|(&i, &s)| i * s)
                .sum::<usize>();
        out[dst..dst + inner].copy_from_slice(&t.data[row * inner..(row + 1) * inner]);
        increment(&mut idx, outer);
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Contiguous sub-range `[start, start + len)` of one axis.
pub fn slice_axis(t: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= t.rank() {
        return Err(shape_err!("axis {axis} out of range for rank {}", t.rank()));
    }
    let extent = t.shape[axis];
    if len == 0 || start + len > extent {
        return Err(shape_err!(
            "slice [{start}, {}) out of range on axis {axis} (extent {extent})",
            start + len
        ));
    }
    let outer: usize = t.shape[..axis].iter().product();
    let inner: usize = t.shape[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * extent + start) * inner;
        data.extend_from_slice(&t.data[base..base + len * inner]);
    }
    let mut shape = t.shape.clone();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, data))
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| invalid!("concat of zero tensors"))?;
    if axis >= first.rank() {
        return Err(shape_err!("axis {axis} out of range for rank {}", first.rank()));
    }
    for p in parts {
        let same = p.rank() == first.rank()
            && p.shape
                .iter()
                .zip(&first.shape)
                .enumerate()
                .all(|(a, (x, y))| a == axis || x == y);
        if !same {
            return Err(shape_err!("cannot concat {:?} with {:?} on axis {axis}", p.shape, first.shape));
        }
    }
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis + 1..].iter().product();
    let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape[axis] * inner;
            data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape.clone();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, data))
}

/// Gathers rows `indices` of the leading axis into a new tensor.
pub fn gather_rows(t: &Tensor, indices: &[usize]) -> Result<Tensor> {
    if indices.is_empty() {
        return Err(invalid!("gather of zero rows"));
    }
    let rows = t.shape[0];
    let row_len = t.len() / rows;
    let mut data = Vec::with_capacity(indices.len() * row_len);
    for &i in indices {
        if i >= rows {
            return Err(shape_err!("row {i} out of range ({rows} rows)"));
        }
        data.extend_from_slice(&t.data[i * row_len..(i + 1) * row_len]);
    }
    let mut shape = t.shape.clone();
    shape[0] = indices.len();
    Ok(Tensor::from_parts(shape, data))
}

/// Odometer increment of a row-major multi-index; returns false on wrap.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) -> bool {
    for axis in (0..idx.len()).rev() {
        idx[axis] += 1;
        if idx[axis] < shape[axis] {
            return true;
        }
        idx[axis] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iota(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn row_major_element() {
        let t = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(&[1, 0]).unwrap(), 3.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let err = Tensor::new(&[3], vec![0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("length mismatch"), "{err}");
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
        assert!(Tensor::new(&[1; 7], vec![0.0]).is_err());
    }

    #[test]
    fn rank3_index_matches_stride_arithmetic() {
        let t = Tensor::new(&[2, 3, 4], iota(24)).unwrap();
        for i0 in 0..2 {
            for i1 in 0..3 {
                for i2 in 0..4 {
                    let expect = (i0 * 12 + i1 * 4 + i2) as f64;
                    assert_eq!(t.get(&[i0, i1, i2]).unwrap(), expect);
                }
            }
        }
        assert_eq!(t.get(&[1, 2, 3]).unwrap(), 23.0);
        assert_eq!(strides(&[2, 3, 4]), vec![12, 4, 1]);
    }

    #[test]
    fn pad_one_dimensional() {
        let t = Tensor::new(&[1], vec![1.0]).unwrap();
        let p = pad(&t, &PadSpec::zeros(vec![(1, 1)])).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn pad_zero_amounts_is_identity() {
        let t = Tensor::new(&[2, 3, 4], iota(24)).unwrap();
        assert_eq!(pad(&t, &PadSpec::none(3)).unwrap(), t);
    }

    #[test]
    fn pad_leading_row() {
        let t = Tensor::full(&[2, 2], 1.0).unwrap();
        let p = pad(&t, &PadSpec::on_axis(2, 0, 1, 0)).unwrap();
        assert_eq!(p.shape(), &[3, 2]);
        assert_eq!(p.data(), &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn pad_fill_value_and_rank_check() {
        let t = Tensor::full(&[2], 1.0).unwrap();
        let p = pad(&t, &PadSpec { amounts: vec![(0, 2)], fill: -3.0 }).unwrap();
        assert_eq!(p.data(), &[1.0, 1.0, -3.0, -3.0]);
        assert!(pad(&t, &PadSpec::none(2)).is_err());
    }

    #[test]
    fn slice_rows() {
        let t = Tensor::new(&[5, 2], iota(10)).unwrap();
        let s = slice_axis(&t, 0, 1, 3).unwrap();
        assert_eq!(s.data(), &[2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(slice_axis(&t, 0, 0, 5).unwrap(), t);
        assert!(slice_axis(&t, 0, 3, 3).is_err());
        assert!(slice_axis(&t, 2, 0, 1).is_err());
    }

    #[test]
    fn slice_then_pad_matches_masked_original() {
        let t = Tensor::new(&[4, 3, 2], iota(24).iter().map(|v| v + 1.0).collect()).unwrap();
        let s = slice_axis(&t, 1, 1, 1).unwrap();
        let back = pad(&s, &PadSpec::on_axis(3, 1, 1, 1)).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                for k in 0..2 {
                    let expect = if j == 1 { t.get(&[i, j, k]).unwrap() } else { 0.0 };
                    assert_eq!(back.get(&[i, j, k]).unwrap(), expect);
                }
            }
        }
    }

    #[test]
    fn concat_inner_axis() {
        let a = Tensor::new(&[2, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert!(concat(&[&a, &b], 0).is_err());
    }

    #[test]
    fn record_rejects_bad_magic() {
        let bytes = b"XXXX\x01\x01\x00\x00\x00".to_vec();
        assert!(matches!(Tensor::read_record(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn record_layout_is_bit_exact() {
        let t = Tensor::new(&[2], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        t.write_record(&mut buf).unwrap();
        let mut expect = b"V4DT".to_vec();
        expect.push(1);
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1.0f64.to_le_bytes());
        expect.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(buf, expect);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn shape_and_data() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
            prop::collection::vec(1usize..4, 1..=4).prop_flat_map(|shape| {
                let n: usize = shape.iter().product();
                (Just(shape), prop::collection::vec(-1e3..1e3f64, n))
            })
        }

        proptest! {
            #[test]
            fn create_flatten_round_trip((shape, data) in shape_and_data()) {
                let t = Tensor::new(&shape, data.clone()).unwrap();
                prop_assert_eq!(t.flatten(), data);
            }

            #[test]
            fn pad_then_slice_recovers_interior(
                (shape, data) in shape_and_data(),
                pads in prop::collection::vec((0usize..3, 0usize..3), 4),
            ) {
                let t = Tensor::new(&shape, data).unwrap();
                let amounts: Vec<_> = pads[..shape.len()].to_vec();
                let p = pad(&t, &PadSpec::zeros(amounts.clone())).unwrap();
                let mut back = p;
                for (axis, &(b, _)) in amounts.iter().enumerate() {
                    back = slice_axis(&back, axis, b, shape[axis]).unwrap();
                }
                prop_assert_eq!(back, t);
            }

            #[test]
            fn record_round_trip((shape, data) in shape_and_data()) {
                let t = Tensor::new(&shape, data).unwrap();
                let mut buf = Vec::new();
                t.write_record(&mut buf).unwrap();
                prop_assert_eq!(Tensor::read_record(&buf[..]).unwrap(), t);
            }
        }
    }
}
