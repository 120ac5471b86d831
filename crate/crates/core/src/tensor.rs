//! Dense tensors over named indices and pairwise contraction.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("copy tensor requires a single domain size, got {0} and {1}")]
    MixedDomains(usize, usize),
    #[error("shared index has mismatched domain sizes {0} and {1}")]
    DomainMismatch(usize, usize),
    #[error("tensor would have {entries} entries, above the cap of {cap}")]
    TooLarge { entries: u128, cap: u64 },
}

static NEXT_INDEX_ID: AtomicU64 = AtomicU64::new(0);

/// A named tensor dimension. Identity is the token `id`; ids are never
/// reused within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Index {
    id: u64,
    dim: usize,
}

impl Index {
    /// Mints a fresh index with the given domain size.
    pub fn fresh(dim: usize) -> Index {
        assert!(dim >= 1, "domain size must be at least 1");
        Index {
            id: NEXT_INDEX_ID.fetch_add(1, Ordering::Relaxed),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> u64 {
        self.id
    }
}

/// Number of entries of a dense tensor over `indices`.
pub fn entry_count(indices: &[Index]) -> u128 {
    indices.iter().map(|i| i.dim() as u128).product()
}

/// Dense tensor: values laid out row-major with respect to the index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    indices: Vec<Index>,
    values: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn scalar(value: S) -> Tensor<S> {
        Tensor {
            indices: Vec::new(),
            values: vec![value],
        }
    }

    /// Dense materialization of `entry` over the assignment space of
    /// `indices`, in row-major order.
    pub fn from_entries(indices: Vec<Index>, entry: impl FnMut(&[usize]) -> S) -> Tensor<S> {
        let mut entry = entry;
        let size = entry_count(&indices) as usize;
        let mut values = Vec::with_capacity(size);
        let dims: Vec<usize> = indices.iter().map(|i| i.dim()).collect();
        for_each_assignment(&dims, |assignment| values.push(entry(assignment)));
        Tensor { indices, values }
    }

    /// The copy tensor: 1 on constant assignments, 0 elsewhere. All indices
    /// must share one domain size.
    pub fn copy(indices: Vec<Index>) -> Result<Tensor<S>, TensorError> {
        if let Some(first) = indices.first() {
            let d = first.dim();
            for i in &indices {
                if i.dim() != d {
                    return Err(TensorError::MixedDomains(d, i.dim()));
                }
            }
        }
        Ok(Tensor::from_entries(indices, |a| {
            if a.iter().all(|&x| x == a[0]) {
                S::one()
            } else {
                S::zero()
            }
        }))
    }

    pub fn indices(&self) -> &[Index] {
        &self.indices
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Entry at the assignment given in index order.
    pub fn value_at(&self, assignment: &[usize]) -> S {
        self.values[self.address(assignment)]
    }

    /// Row-major address: sum of coordinate times stride, strides being the
    /// suffix products of the domain sizes.
    pub fn address(&self, assignment: &[usize]) -> usize {
        debug_assert_eq!(assignment.len(), self.indices.len());
        let mut addr = 0;
        for (i, &coord) in self.indices.iter().zip(assignment) {
            debug_assert!(coord < i.dim());
            addr = addr * i.dim() + coord;
        }
        addr
    }

    /// Inverse of `address`.
    pub fn assignment_of(&self, mut addr: usize) -> Vec<usize> {
        let mut out = vec![0; self.indices.len()];
        for (slot, i) in out.iter_mut().zip(&self.indices).rev() {
            *slot = addr % i.dim();
            addr /= i.dim();
        }
        out
    }

    /// Copy of this tensor with its indices permuted into `order`, which must
    /// be a permutation of the current index list.
    fn permuted(&self, order: &[Index]) -> Tensor<S> {
        debug_assert_eq!(order.len(), self.indices.len());
        if order == self.indices.as_slice() {
            return self.clone();
        }
        // position of each target index in the source order
        let src_pos: Vec<usize> = order
            .iter()
            .map(|i| self.indices.iter().position(|j| j == i).unwrap())
            .collect();
        let dims: Vec<usize> = order.iter().map(|i| i.dim()).collect();
        let mut values = Vec::with_capacity(self.values.len());
        let mut src_assignment = vec![0; order.len()];
        for_each_assignment(&dims, |a| {
            for (k, &p) in src_pos.iter().enumerate() {
                src_assignment[p] = a[k];
            }
            values.push(self.value_at(&src_assignment));
        });
        Tensor {
            indices: order.to_vec(),
            values,
        }
    }

    /// Pairwise contraction: all shared indices are summed simultaneously.
    /// The result's indices are the symmetric difference of the operands'.
    ///
    /// Both operands are permuted so the shared indices are contiguous and
    /// the contraction reduces to one (m x k) * (k x n) matrix product.
    pub fn contract_with(&self, other: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        let shared: Vec<Index> = self
            .indices
            .iter()
            .filter(|i| other.indices.iter().any(|j| j.id() == i.id()))
            .copied()
            .collect();
        for i in &shared {
            let j = other.indices.iter().find(|j| j.id() == i.id()).unwrap();
            if j.dim() != i.dim() {
                return Err(TensorError::DomainMismatch(i.dim(), j.dim()));
            }
        }
        let a_only: Vec<Index> = self
            .indices
            .iter()
            .filter(|i| !shared.contains(i))
            .copied()
            .collect();
        let b_only: Vec<Index> = other
            .indices
            .iter()
            .filter(|i| !shared.contains(i))
            .copied()
            .collect();

        let a_order: Vec<Index> = a_only.iter().chain(&shared).copied().collect();
        let b_order: Vec<Index> = shared.iter().chain(&b_only).copied().collect();
        let a = self.permuted(&a_order);
        let b = other.permuted(&b_order);

        let m: usize = a_only.iter().map(|i| i.dim()).product();
        let k: usize = shared.iter().map(|i| i.dim()).product();
        let n: usize = b_only.iter().map(|i| i.dim()).product();

        let mut values = vec![S::zero(); m * n];
        for r in 0..m {
            for kk in 0..k {
                let av = a.values[r * k + kk];
                if av == S::zero() {
                    continue;
                }
                let brow = &b.values[kk * n..(kk + 1) * n];
                let out = &mut values[r * n..(r + 1) * n];
                for (o, &bv) in out.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let indices: Vec<Index> = a_only.into_iter().chain(b_only).collect();
        Ok(Tensor { indices, values })
    }
}

/// Iterates all assignments over `dims` in row-major order.
pub fn for_each_assignment(dims: &[usize], mut f: impl FnMut(&[usize])) {
    let mut a = vec![0usize; dims.len()];
    loop {
        f(&a);
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            a[pos] += 1;
            if a[pos] < dims[pos] {
                break;
            }
            a[pos] = 0;
        }
    }
}
