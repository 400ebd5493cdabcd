//! Factor containers for Paratuck2 and CP, reconstruction, and the mapping
//! between factor blocks and the flat decision vector the solvers optimize.
//!
//! Paratuck2 writes each frontal slice as X_k = A D^A_k H D^B_k B^T with
//! A (I x P), H (P x Q), B (J x Q) shared across slices and D^A_k, D^B_k
//! diagonal. Only the diagonal values are decision variables, stored
//! slice-major (all P values of slice 0, then slice 1, ...).

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{DenseMatrix, DenseTensor3, RealVector};

/// Stack of diagonal matrices: `size` diagonal values per slice, K slices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagStack {
    size: usize,
    slices: usize,
    data: Vec<f64>,
}

impl DiagStack {
    pub fn new(size: usize, slices: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * slices {
            return Err(Error::Dimension(format!(
                "diagonal stack expects {} values, got {}",
                size * slices,
                data.len()
            )));
        }
        Ok(Self { size, slices, data })
    }

    pub fn ones(size: usize, slices: usize) -> Self {
        Self {
            size,
            slices,
            data: vec![1.0; size * slices],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    /// Diagonal values of slice k.
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.data[k * self.size..(k + 1) * self.size]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.size..(k + 1) * self.size]
    }

    /// Contiguous slice-major data, matching the flattening order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// The five factor blocks of a Paratuck2 decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Paratuck2Factors {
    a: DenseMatrix,
    da: DiagStack,
    h: DenseMatrix,
    db: DiagStack,
    b: DenseMatrix,
}

impl Paratuck2Factors {
    pub fn new(
        a: DenseMatrix,
        da: DiagStack,
        h: DenseMatrix,
        db: DiagStack,
        b: DenseMatrix,
    ) -> Result<Self> {
        let (p, q) = (h.rows(), h.cols());
        if a.cols() != p {
            return Err(Error::Dimension(format!(
                "A has {} columns but H has {} rows",
                a.cols(),
                p
            )));
        }
        if b.cols() != q {
            return Err(Error::Dimension(format!(
                "B has {} columns but H has {} columns",
                b.cols(),
                q
            )));
        }
        if da.size() != p || db.size() != q {
            return Err(Error::Dimension(format!(
                "diagonal sizes ({}, {}) do not match latent ({p}, {q})",
                da.size(),
                db.size()
            )));
        }
        if da.slices() != db.slices() {
            return Err(Error::Dimension(format!(
                "diagonal stacks disagree on K: {} vs {}",
                da.slices(),
                db.slices()
            )));
        }
        Ok(Self { a, da, h, db, b })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn da(&self) -> &DiagStack {
        &self.da
    }

    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn db(&self) -> &DiagStack {
        &self.db
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub(crate) fn parts_mut(
        &mut self,
    ) -> (
        &mut DenseMatrix,
        &mut DiagStack,
        &mut DenseMatrix,
        &mut DiagStack,
        &mut DenseMatrix,
    ) {
        (
            &mut self.a,
            &mut self.da,
            &mut self.h,
            &mut self.db,
            &mut self.b,
        )
    }

    /// Tensor dimensions (I, J, K) this factor set reconstructs.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.rows(), self.b.rows(), self.da.slices())
    }

    /// Latent factors (P, Q).
    pub fn latent(&self) -> (usize, usize) {
        (self.h.rows(), self.h.cols())
    }

    pub fn layout(&self) -> ParamLayout {
        let (i, j, k) = self.dims();
        let (p, q) = self.latent();
        ParamLayout { i, j, k, p, q }
    }
}

/// Rank-R factor matrices of a CP decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    factors: Vec<DenseMatrix>,
    rank: usize,
}

impl CpFactors {
    pub fn new(factors: Vec<DenseMatrix>) -> Result<Self> {
        let Some(first) = factors.first() else {
            return Err(Error::InvalidArgument("CP factors cannot be empty".into()));
        };
        let rank = first.cols();
        if rank == 0 {
            return Err(Error::InvalidArgument("CP rank must be positive".into()));
        }
        if let Some(bad) = factors.iter().find(|f| f.cols() != rank) {
            return Err(Error::Dimension(format!(
                "all CP factor matrices must share {} columns, found {}",
                rank,
                bad.cols()
            )));
        }
        Ok(Self { factors, rank })
    }

    pub fn factors(&self) -> &[DenseMatrix] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.factors
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }
}

/// Shape record that pins the flattened vector layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub p: usize,
    pub q: usize,
}

impl ParamLayout {
    pub fn new(dims: (usize, usize, usize), latent: (usize, usize)) -> Self {
        Self {
            i: dims.0,
            j: dims.1,
            k: dims.2,
            p: latent.0,
            q: latent.1,
        }
    }

    /// Total decision-vector length: I*P + P*K + P*Q + Q*K + J*Q.
    pub fn len(&self) -> usize {
        self.i * self.p + self.p * self.k + self.p * self.q + self.q * self.k + self.j * self.q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Block offsets (a, da, h, db, b, end).
    pub fn offsets(&self) -> (usize, usize, usize, usize, usize, usize) {
        let a = 0;
        let da = a + self.i * self.p;
        let h = da + self.p * self.k;
        let db = h + self.p * self.q;
        let b = db + self.q * self.k;
        let end = b + self.j * self.q;
        (a, da, h, db, b, end)
    }
}

/// Flattened decision vector with the layout needed to unflatten it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    data: RealVector,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn new(data: RealVector, layout: ParamLayout) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::Layout {
                expected: layout.len(),
                got: data.len(),
            });
        }
        Ok(Self { data, layout })
    }

    pub fn data(&self) -> &RealVector {
        &self.data
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }
}

/// Random starting factors: A, H, B uniform on [0, 1) from the seeded
/// generator, every diagonal value exactly 1.
pub fn init_factors(
    dims: (usize, usize, usize),
    latent: (usize, usize),
    seed: u64,
) -> Result<Paratuck2Factors> {
    let (i, j, k) = dims;
    let (p, q) = latent;
    if i == 0 || j == 0 || k == 0 || p == 0 || q == 0 {
        return Err(Error::InvalidArgument(format!(
            "dims {i}x{j}x{k} and latent ({p}, {q}) must all be positive"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut draw = |rows: usize, cols: usize| {
        DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.next_f64()).collect())
            .expect("freshly drawn matrix has matching length")
    };
    let a = draw(i, p);
    let h = draw(p, q);
    let b = draw(j, q);
    Paratuck2Factors::new(a, DiagStack::ones(p, k), h, DiagStack::ones(q, k), b)
}

/// Rebuild the approximate tensor: slice k is A diag(da_k) H diag(db_k) B^T.
pub fn paratuck2_reconstruct(f: &Paratuck2Factors) -> DenseTensor3 {
    let (i, j, k) = f.dims();
    let (p, q) = f.latent();
    let mut data = vec![0.0; i * j * k];
    let mut mid = vec![0.0; p * q];
    let mut left = vec![0.0; i * q];
    for slice in 0..k {
        reconstruct_slice_into(
            f.a().data(),
            f.da().slice(slice),
            f.h().data(),
            f.db().slice(slice),
            f.b().data(),
            (i, j, p, q),
            &mut mid,
            &mut left,
            &mut data[i * j * slice..i * j * (slice + 1)],
        );
    }
    DenseTensor3::new((i, j, k), data).expect("reconstruction matches dims")
}

/// Left half of the slice product: mid = diag(da) H diag(db), then
/// left = A mid, leaving only the B^T product to consumers.
fn slice_left_products(
    a: &[f64],
    da: &[f64],
    h: &[f64],
    db: &[f64],
    (i, p, q): (usize, usize, usize),
    mid: &mut [f64],
    left: &mut [f64],
) {
    for pp in 0..p {
        let scale = da[pp];
        let hrow = &h[pp * q..(pp + 1) * q];
        let mrow = &mut mid[pp * q..(pp + 1) * q];
        for ((m, hv), dv) in mrow.iter_mut().zip(hrow).zip(db) {
            *m = scale * hv * dv;
        }
    }
    left.fill(0.0);
    for ii in 0..i {
        let arow = &a[ii * p..(ii + 1) * p];
        let lrow = &mut left[ii * q..(ii + 1) * q];
        for (pp, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let mrow = &mid[pp * q..(pp + 1) * q];
            for (l, m) in lrow.iter_mut().zip(mrow) {
                *l += av * m;
            }
        }
    }
}

/// Compute one frontal slice of the Paratuck2 model into `out` (column-major
/// within the slice, i fastest, matching the tensor linearization).
#[allow(clippy::too_many_arguments)]
fn reconstruct_slice_into(
    a: &[f64],
    da: &[f64],
    h: &[f64],
    db: &[f64],
    b: &[f64],
    (i, j, p, q): (usize, usize, usize, usize),
    mid: &mut [f64],
    left: &mut [f64],
    out: &mut [f64],
) {
    slice_left_products(a, da, h, db, (i, p, q), mid, left);
    for jj in 0..j {
        let brow = &b[jj * q..(jj + 1) * q];
        for ii in 0..i {
            let lrow = &left[ii * q..(ii + 1) * q];
            let mut acc = 0.0;
            for (l, bv) in lrow.iter().zip(brow) {
                acc += l * bv;
            }
            out[ii + i * jj] = acc;
        }
    }
}

/// CP reconstruction x_{ijk} = sum_r a_{ir} b_{jr} c_{kr}; order must be 3.
pub fn cp_reconstruct(f: &CpFactors) -> Result<DenseTensor3> {
    if f.order() != 3 {
        return Err(Error::UnsupportedOrder { order: f.order() });
    }
    let a = &f.factors()[0];
    let b = &f.factors()[1];
    let c = &f.factors()[2];
    let (i, j, k) = (a.rows(), b.rows(), c.rows());
    let r = f.rank();
    let mut data = vec![0.0; i * j * k];
    for kk in 0..k {
        for jj in 0..j {
            for ii in 0..i {
                let mut acc = 0.0;
                for rr in 0..r {
                    acc += a.get(ii, rr) * b.get(jj, rr) * c.get(kk, rr);
                }
                data[ii + i * jj + i * j * kk] = acc;
            }
        }
    }
    DenseTensor3::new((i, j, k), data)
}

/// Flatten factor blocks into the decision vector, block order
/// A, D^A diagonals, H, D^B diagonals, B.
pub fn flatten(f: &Paratuck2Factors) -> ParamVector {
    let layout = f.layout();
    let mut data = Vec::with_capacity(layout.len());
    data.extend_from_slice(f.a().data());
    data.extend_from_slice(f.da().data());
    data.extend_from_slice(f.h().data());
    data.extend_from_slice(f.db().data());
    data.extend_from_slice(f.b().data());
    ParamVector::new(RealVector::new(data), layout).expect("flatten length matches layout")
}

/// Exact inverse of [`flatten`].
pub fn unflatten(x: &ParamVector) -> Paratuck2Factors {
    unflatten_slice(x.layout(), x.as_slice()).expect("ParamVector construction checked the length")
}

/// Unflatten from a raw slice; errors when the length does not match.
pub fn unflatten_slice(layout: ParamLayout, x: &[f64]) -> Result<Paratuck2Factors> {
    if x.len() != layout.len() {
        return Err(Error::Layout {
            expected: layout.len(),
            got: x.len(),
        });
    }
    let (oa, oda, oh, odb, ob, end) = layout.offsets();
    let a = DenseMatrix::new(layout.i, layout.p, x[oa..oda].to_vec())?;
    let da = DiagStack::new(layout.p, layout.k, x[oda..oh].to_vec())?;
    let h = DenseMatrix::new(layout.p, layout.q, x[oh..odb].to_vec())?;
    let db = DiagStack::new(layout.q, layout.k, x[odb..ob].to_vec())?;
    let b = DenseMatrix::new(layout.j, layout.q, x[ob..end].to_vec())?;
    Paratuck2Factors::new(a, da, h, db, b)
}

/// Residual norm ||target - reconstruct(x)|| for a raw decision slice.
///
/// This is the solver hot path: the slice product is formed block by block
/// straight from the flat vector, without building factor matrices or the
/// approximate tensor.
pub fn objective_value(target: &DenseTensor3, layout: ParamLayout, x: &[f64]) -> Result<f64> {
    if x.len() != layout.len() {
        return Err(Error::Layout {
            expected: layout.len(),
            got: x.len(),
        });
    }
    let (i, j, k) = target.dims();
    if (i, j, k) != (layout.i, layout.j, layout.k) {
        return Err(Error::Dimension(format!(
            "layout dims {}x{}x{} do not match target {i}x{j}x{k}",
            layout.i, layout.j, layout.k
        )));
    }
    let (p, q) = (layout.p, layout.q);
    let (oa, oda, oh, odb, ob, _) = layout.offsets();
    let a = &x[oa..oda];
    let da = &x[oda..oh];
    let h = &x[oh..odb];
    let db = &x[odb..ob];
    let b = &x[ob..];
    let target_data = target.data();

    let mut mid = vec![0.0; p * q];
    let mut left = vec![0.0; i * q];
    let mut sum_sq = 0.0;
    for kk in 0..k {
        slice_left_products(
            a,
            &da[kk * p..(kk + 1) * p],
            h,
            &db[kk * q..(kk + 1) * q],
            (i, p, q),
            &mut mid,
            &mut left,
        );
        let slice_target = &target_data[i * j * kk..i * j * (kk + 1)];
        for jj in 0..j {
            let brow = &b[jj * q..(jj + 1) * q];
            let column = &slice_target[i * jj..i * (jj + 1)];
            for ii in 0..i {
                let lrow = &left[ii * q..(ii + 1) * q];
                let mut acc = 0.0;
                for (l, bv) in lrow.iter().zip(brow) {
                    acc += l * bv;
                }
                let d = column[ii] - acc;
                sum_sq += d * d;
            }
        }
    }
    Ok(sum_sq.sqrt())
}

/// Objective f(x) = ||target - reconstruct(unflatten(x))|| (the norm itself,
/// not its square).
pub fn objective(target: &DenseTensor3, x: &ParamVector) -> Result<f64> {
    objective_value(target, x.layout(), x.as_slice())
}
