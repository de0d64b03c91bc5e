use super::SparseError;

/// A symmetric reordering. `perm[new] = old`, `inv[old] = new`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self, SparseError> {
        let n = perm.len();
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n {
                return Err(SparseError::InvalidPermutation(format!(
                    "entry {old} out of range for length {n}"
                )));
            }
            if inv[old] != usize::MAX {
                return Err(SparseError::InvalidPermutation(format!(
                    "index {old} appears twice"
                )));
            }
            inv[old] = new;
        }
        Ok(Permutation { perm, inv })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            perm: (0..n).collect(),
            inv: (0..n).collect(),
        }
    }

    pub fn reversal(n: usize) -> Self {
        let perm: Vec<usize> = (0..n).rev().collect();
        Permutation {
            inv: perm.clone(),
            perm,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Old index stored at new position `new`.
    #[inline]
    pub fn old(&self, new: usize) -> usize {
        self.perm[new]
    }

    /// New position of the old index `old`.
    #[inline]
    pub fn new_of(&self, old: usize) -> usize {
        self.inv[old]
    }

    pub fn map(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse_map(&self) -> &[usize] {
        &self.inv
    }

    pub fn inverse(&self) -> Permutation {
        Permutation {
            perm: self.inv.clone(),
            inv: self.perm.clone(),
        }
    }

    /// `P^T x`: gathers `x` into the new ordering.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&old| x[old]).collect()
    }

    /// `P y`: scatters `y` from the new ordering back to the old one.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; y.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        for i in 0..3 {
            assert_eq!(p.old(p.new_of(i)), i);
        }
    }

    #[test]
    fn apply_inverts_apply_transpose() {
        let p = Permutation::new(vec![3, 1, 0, 2]).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let px = p.apply_transpose(&x);
        assert_eq!(px, vec![4.0, 2.0, 1.0, 3.0]);
        assert_eq!(p.apply(&px), x.to_vec());
        assert_eq!(p.inverse().inverse(), p);
    }
}
