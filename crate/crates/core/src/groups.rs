//! Non-overlapping group structure and the l1/l2 group calculus that only
//! needs the partition (norms, block soft thresholding).

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// A partition of `{0, .., dim-1}` into non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupStructure {
    dim: usize,
    groups: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

impl GroupStructure {
    pub fn new(dim: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut owner = vec![usize::MAX; dim];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidInput(format!("group {g} is empty")));
            }
            for &i in members {
                if i >= dim {
                    return Err(Error::InvalidInput(format!(
                        "group {g} has index {i} outside 0..{dim}"
                    )));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::InvalidInput(format!(
                        "index {i} appears in group {} and group {g}",
                        owner[i]
                    )));
                }
                owner[i] = g;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidInput(format!("index {i} is not covered by any group")));
        }
        Ok(Self { dim, groups, owner })
    }

    /// `count` consecutive groups of `size` coordinates each.
    pub fn contiguous(count: usize, size: usize) -> Result<Self> {
        if size == 0 && count > 0 {
            return Err(Error::InvalidInput("group size must be positive".into()));
        }
        let groups = (0..count)
            .map(|g| (g * size..(g + 1) * size).collect())
            .collect();
        Self::new(count * size, groups)
    }

    /// Every coordinate its own group (the plain l1 case).
    pub fn singletons(dim: usize) -> Self {
        Self::new(dim, (0..dim).map(|i| vec![i]).collect()).expect("singletons partition")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn owner(&self, i: usize) -> usize {
        self.owner[i]
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn block(&self, u: &Vector, g: usize) -> Vector {
        Vector::from_iterator(self.groups[g].len(), self.groups[g].iter().map(|&i| u[i]))
    }

    pub fn block_norm(&self, u: &Vector, g: usize) -> f64 {
        self.groups[g].iter().map(|&i| u[i] * u[i]).sum::<f64>().sqrt()
    }

    pub fn block_norms(&self, u: &Vector) -> Vec<f64> {
        (0..self.len()).map(|g| self.block_norm(u, g)).collect()
    }

    /// Rows of `a` belonging to group `g`.
    pub fn row_block(&self, a: &Matrix, g: usize) -> Matrix {
        crate::linalg::select_rows(a, &self.groups[g])
    }

    /// Sorted coordinates of the listed groups.
    pub fn coordinates_of(&self, which: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = which.iter().flat_map(|&g| self.groups[g].iter().copied()).collect();
        out.sort_unstable();
        out
    }

    /// Group structure induced on the sub-vector indexed by `coords`
    /// (which must be a union of whole groups). Returns the new structure and,
    /// for each new group, the original group index.
    pub fn restrict(&self, coords: &[usize]) -> Result<(GroupStructure, Vec<usize>)> {
        let mut position = vec![usize::MAX; self.dim];
        for (k, &i) in coords.iter().enumerate() {
            if i >= self.dim {
                return Err(Error::InvalidInput(format!("coordinate {i} out of range")));
            }
            position[i] = k;
        }
        let mut groups = Vec::new();
        let mut origin = Vec::new();
        for (g, members) in self.groups.iter().enumerate() {
            let inside = members.iter().filter(|&&i| position[i] != usize::MAX).count();
            if inside == 0 {
                continue;
            }
            if inside != members.len() {
                return Err(Error::InvalidInput(format!("group {g} is only partly selected")));
            }
            groups.push(members.iter().map(|&i| position[i]).collect());
            origin.push(g);
        }
        Ok((GroupStructure::new(coords.len(), groups)?, origin))
    }

    fn check_len(&self, u: &Vector, what: &str) -> Result<()> {
        if u.len() == self.dim {
            Ok(())
        } else {
            Err(Error::mismatch(what, self.dim, u.len()))
        }
    }
}

/// Sum of block Euclidean norms.
pub fn group_norm(u: &Vector, groups: &GroupStructure) -> Result<f64> {
    groups.check_len(u, "group_norm")?;
    Ok(groups.block_norms(u).iter().sum())
}

/// Largest block Euclidean norm (zero for an empty structure).
pub fn dual_group_norm(u: &Vector, groups: &GroupStructure) -> Result<f64> {
    groups.check_len(u, "dual_group_norm")?;
    Ok(groups.block_norms(u).into_iter().fold(0.0, f64::max))
}

/// Proximal map of `lambda * group_norm`.
pub fn block_soft_threshold(u: &Vector, lambda: f64, groups: &GroupStructure) -> Result<Vector> {
    groups.check_len(u, "block_soft_threshold")?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("threshold must be finite and non-negative, got {lambda}")));
    }
    let mut out = u.clone();
    for g in 0..groups.len() {
        let norm = groups.block_norm(u, g);
        let scale = if norm > lambda { 1.0 - lambda / norm } else { 0.0 };
        for &i in groups.group(g) {
            out[i] *= scale;
        }
    }
    Ok(out)
}

/// Nuclear norm of a 2x2 matrix via `sqrt(|X|_F^2 + 2|det X|)`.
pub fn nuclear_norm_2x2(x: &Matrix) -> Result<f64> {
    if x.shape() != (2, 2) {
        return Err(Error::InvalidInput(format!("expected a 2x2 matrix, got {:?}", x.shape())));
    }
    let det = x[(0, 0)] * x[(1, 1)] - x[(0, 1)] * x[(1, 0)];
    Ok((x.norm_squared() + 2.0 * det.abs()).sqrt())
}
