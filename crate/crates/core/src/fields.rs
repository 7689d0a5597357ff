//! 3D fields on the column grid and level-1 vector operations.
//!
//! A field holds one scalar per cell `(i, j, k)` of an `m x m x n_z` grid in a
//! flat array. Two linear orderings are supported: columns stored
//! contiguously (`VerticalContiguous`) or the first horizontal index running
//! fastest (`HorizontalContiguous`).
//!
//! Reductions are deterministic: every column is summed sequentially in
//! ascending `k`, and the `m * m` column partials are combined by a fixed
//! pairwise tree over the lexicographic `(i, j)` order. The result therefore
//! does not depend on the layout or on the number of worker threads.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::{Precision, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `l = n_z (m i + j) + k`
    #[default]
    VerticalContiguous,
    /// `l = m (n_z j + k) + i`
    HorizontalContiguous,
}

impl Layout {
    pub const ALL: [Layout; 2] = [Layout::VerticalContiguous, Layout::HorizontalContiguous];

    #[inline(always)]
    pub fn index(self, i: usize, j: usize, k: usize, m: usize, n_z: usize) -> usize {
        debug_assert!(i < m && j < m && k < n_z, "({i},{j},{k}) outside {m}x{m}x{n_z}");
        match self {
            Layout::VerticalContiguous => n_z * (m * i + j) + k,
            Layout::HorizontalContiguous => m * (n_z * j + k) + i,
        }
    }

    /// Inverse of [`Layout::index`].
    #[inline]
    pub fn cell(self, l: usize, m: usize, n_z: usize) -> (usize, usize, usize) {
        match self {
            Layout::VerticalContiguous => {
                let col = l / n_z;
                (col / m, col % m, l % n_z)
            }
            Layout::HorizontalContiguous => {
                let rest = l / m;
                (l % m, rest / n_z, rest % n_z)
            }
        }
    }

    /// Offset of `(i, j, 0)` and the stride between consecutive levels.
    #[inline(always)]
    pub fn column(self, i: usize, j: usize, m: usize, n_z: usize) -> (usize, usize) {
        match self {
            Layout::VerticalContiguous => (n_z * (m * i + j), 1),
            Layout::HorizontalContiguous => (m * n_z * j + i, m),
        }
    }

    /// Every field splits into `m` contiguous slabs of `m * n_z` entries, each
    /// holding `m` whole columns. Returns `(i, j)` of local column `c` in slab `s`.
    #[inline(always)]
    pub(crate) fn slab_column(self, s: usize, c: usize) -> (usize, usize) {
        match self {
            Layout::VerticalContiguous => (s, c),
            Layout::HorizontalContiguous => (c, s),
        }
    }

    /// `(column stride, level stride)` inside a slab.
    #[inline(always)]
    pub(crate) fn slab_strides(self, m: usize, n_z: usize) -> (usize, usize) {
        match self {
            Layout::VerticalContiguous => (n_z, 1),
            Layout::HorizontalContiguous => (1, m),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::VerticalContiguous => "vertical",
            Layout::HorizontalContiguous => "horizontal",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "vertical" | "vertical-contiguous" => Ok(Layout::VerticalContiguous),
            "horizontal" | "horizontal-contiguous" => Ok(Layout::HorizontalContiguous),
            other => Err(format!("unknown layout '{other}' (expected vertical|horizontal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field3D<T> {
    m: usize,
    n_z: usize,
    layout: Layout,
    data: Vec<T>,
}

impl<T: Scalar> Field3D<T> {
    pub fn zeros(m: usize, n_z: usize, layout: Layout) -> Self {
        Self::filled(m, n_z, layout, T::zero())
    }

    pub fn filled(m: usize, n_z: usize, layout: Layout, value: T) -> Self {
        Field3D { m, n_z, layout, data: vec![value; m * m * n_z] }
    }

    pub fn from_vec(m: usize, n_z: usize, layout: Layout, data: Vec<T>) -> Result<Self> {
        if data.len() != m * m * n_z {
            return invalid(format!(
                "data length {} does not match {m}x{m}x{n_z}",
                data.len()
            ));
        }
        Ok(Field3D { m, n_z, layout, data })
    }

    /// Builds a field from a function of the cell indices.
    pub fn from_fn(m: usize, n_z: usize, layout: Layout, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut out = Self::zeros(m, n_z, layout);
        for i in 0..m {
            for j in 0..m {
                for k in 0..n_z {
                    out.set(i, j, k, f(i, j, k));
                }
            }
        }
        out
    }

    /// Uniform values in `[-1, 1)` drawn in lexicographic `(i, j, k)` order,
    /// so the same seed gives the same cell values in either layout.
    pub fn random(m: usize, n_z: usize, layout: Layout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(m, n_z, layout, |_, _, _| T::of_f64(rng.gen_range(-1.0..1.0)))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.layout.index(i, j, k, self.m, self.n_z)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: T) {
        let l = self.layout.index(i, j, k, self.m, self.n_z);
        self.data[l] = value;
    }

    pub fn fill(&mut self, value: T) {
        self.data.par_iter_mut().for_each(|x| *x = value);
    }

    pub fn copy_from(&mut self, other: &Self) -> Result<()> {
        check_conformant(self, other)?;
        self.data.par_iter_mut().zip(other.data.par_iter()).for_each(|(a, b)| *a = *b);
        Ok(())
    }

    pub fn conformant(&self, other: &Self) -> bool {
        self.m == other.m && self.n_z == other.n_z && self.layout == other.layout
    }

    /// Value-preserving copy into another ordering.
    pub fn relayout(&self, target: Layout) -> Self {
        if target == self.layout {
            return self.clone();
        }
        let (m, n_z) = (self.m, self.n_z);
        let mut out = Self::zeros(m, n_z, target);
        for i in 0..m {
            for j in 0..m {
                for k in 0..n_z {
                    out.data[target.index(i, j, k, m, n_z)] =
                        self.data[self.layout.index(i, j, k, m, n_z)];
                }
            }
        }
        out
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Field3D<U> {
        Field3D {
            m: self.m,
            n_z: self.n_z,
            layout: self.layout,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Header line `anisolve-field m=.. n_z=.. layout=.. precision=..`
    /// followed by the raw little-endian data array.
    pub fn write_raw<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "anisolve-field m={} n_z={} layout={} precision={}",
            self.m,
            self.n_z,
            self.layout,
            T::PRECISION
        )?;
        out.write_all(&T::to_le_bytes_vec(&self.data))?;
        Ok(())
    }

    pub fn read_raw<R: BufRead>(mut input: R) -> Result<Self> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let mut fields = header.trim_end().split(' ');
        if fields.next() != Some("anisolve-field") {
            return invalid("missing field header");
        }
        let (mut m, mut n_z, mut layout, mut precision) = (None, None, None, None);
        for kv in fields {
            match kv.split_once('=') {
                Some(("m", v)) => m = v.parse::<usize>().ok(),
                Some(("n_z", v)) => n_z = v.parse::<usize>().ok(),
                Some(("layout", v)) => layout = v.parse::<Layout>().ok(),
                Some(("precision", v)) => precision = v.parse::<Precision>().ok(),
                _ => return invalid(format!("malformed header entry '{kv}'")),
            }
        }
        let (Some(m), Some(n_z), Some(layout), Some(precision)) = (m, n_z, layout, precision) else {
            return invalid("incomplete field header");
        };
        if precision != T::PRECISION {
            return invalid(format!("stored precision {precision} does not match {}", T::PRECISION));
        }
        let width = precision.bytes();
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != m * m * n_z * width {
            return invalid(format!(
                "expected {} data bytes, found {}",
                m * m * n_z * width,
                bytes.len()
            ));
        }
        let data = bytes.chunks_exact(width).map(T::from_le_chunk).collect();
        Self::from_vec(m, n_z, layout, data)
    }
}

pub(crate) fn check_conformant<T: Scalar>(a: &Field3D<T>, b: &Field3D<T>) -> Result<()> {
    if a.conformant(b) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "field mismatch: {}x{}x{} ({}) vs {}x{}x{} ({})",
            a.m, a.m, a.n_z, a.layout, b.m, b.m, b.n_z, b.layout
        )))
    }
}

/// Fixed binary-tree sum: split in halves until single elements remain.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Combines per-column partials given in slab order (`s * m + c`) following
/// the lexicographic `(i, j)` order of the columns.
pub(crate) fn combine_columns<T: Scalar>(layout: Layout, m: usize, slab_partials: &[T]) -> T {
    match layout {
        Layout::VerticalContiguous => pairwise_sum(slab_partials),
        Layout::HorizontalContiguous => {
            let mut lex = vec![T::zero(); slab_partials.len()];
            for s in 0..m {
                for c in 0..m {
                    let (i, j) = layout.slab_column(s, c);
                    lex[i * m + j] = slab_partials[s * m + c];
                }
            }
            pairwise_sum(&lex)
        }
    }
}

/// `y <- alpha x + y`
pub fn axpy<T: Scalar>(alpha: T, x: &Field3D<T>, y: &mut Field3D<T>) -> Result<()> {
    check_conformant(x, y)?;
    let chunk = slab_len(x);
    y.data
        .par_chunks_mut(chunk)
        .zip(x.data.par_chunks(chunk))
        .for_each(|(ys, xs)| {
            for (yv, &xv) in ys.iter_mut().zip(xs) {
                *yv = alpha * xv + *yv;
            }
        });
    Ok(())
}

/// `x <- alpha x`
pub fn scal<T: Scalar>(alpha: T, x: &mut Field3D<T>) {
    let chunk = slab_len(x);
    x.data.par_chunks_mut(chunk).for_each(|xs| {
        for v in xs {
            *v = alpha * *v;
        }
    });
}

fn slab_len<T>(x: &Field3D<T>) -> usize {
    (x.m * x.n_z).max(1)
}

fn column_reduce<T: Scalar>(
    x: &Field3D<T>,
    y: &Field3D<T>,
    term: impl Fn(T, T) -> T + Sync,
) -> T {
    let (m, n_z, layout) = (x.m, x.n_z, x.layout);
    if x.data.is_empty() {
        return T::zero();
    }
    let (cs, ks) = layout.slab_strides(m, n_z);
    let chunk = m * n_z;
    let mut partials = vec![T::zero(); m * m];
    partials
        .par_chunks_mut(m)
        .zip(x.data.par_chunks(chunk).zip(y.data.par_chunks(chunk)))
        .for_each(|(part, (xs, ys))| {
            for (c, p) in part.iter_mut().enumerate() {
                let mut acc = T::zero();
                for k in 0..n_z {
                    let l = c * cs + k * ks;
                    acc = acc + term(xs[l], ys[l]);
                }
                *p = acc;
            }
        });
    combine_columns(layout, m, &partials)
}

/// `<x, y>`
pub fn dot<T: Scalar>(x: &Field3D<T>, y: &Field3D<T>) -> Result<T> {
    check_conformant(x, y)?;
    Ok(column_reduce(x, y, |a, b| a * b))
}

/// `sqrt(<x, x>)`
pub fn nrm2<T: Scalar>(x: &Field3D<T>) -> T {
    column_reduce(x, x, |a, _| a * a).sqrt()
}
