//! Exact incremental elimination of integer vectors modulo the Mersenne prime
//! `2^61 - 1`.
//!
//! Reduction modulo a prime can only lower rank, so a set found independent
//! here is independent over the rationals as well.

const P: u64 = (1 << 61) - 1;

fn reduce(x: u128) -> u64 {
    let lo = (x as u64) & P;
    let hi = (x >> 61) as u64;
    let s = lo + (hi & P) + (hi >> 61);
    let s = (s & P) + (s >> 61);
    if s >= P {
        s - P
    } else {
        s
    }
}

fn mul(a: u64, b: u64) -> u64 {
    reduce(a as u128 * b as u128)
}

fn sub(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + P - b
    }
}

fn pow(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        exp >>= 1;
    }
    acc
}

fn inv(a: u64) -> u64 {
    pow(a, P - 2)
}

/// Row-echelon basis grown one vector at a time.
#[derive(Debug, Clone)]
pub struct ModularEliminator {
    dim: usize,
    // (pivot, row) with row[pivot] == 1
    rows: Vec<(usize, Vec<u64>)>,
}

impl ModularEliminator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Inserts a 0/1 vector given by the indices of its ones.
    pub fn insert_indicator(&mut self, ones: &[usize]) -> bool {
        let mut v = vec![0u64; self.dim];
        for &i in ones {
            v[i] = 1;
        }
        self.insert(v)
    }

    /// Inserts a vector of small signed integers.
    pub fn insert_signed(&mut self, values: &[i64]) -> bool {
        let v = values
            .iter()
            .map(|&x| {
                if x >= 0 {
                    (x as u64) % P
                } else {
                    sub(0, (x.unsigned_abs()) % P)
                }
            })
            .collect();
        self.insert(v)
    }

    /// Reduces `v` against the current basis; keeps it if independent.
    pub fn insert(&mut self, mut v: Vec<u64>) -> bool {
        assert_eq!(v.len(), self.dim, "vector length");
        for (pivot, row) in &self.rows {
            let f = v[*pivot];
            if f != 0 {
                for (x, &r) in v.iter_mut().zip(row).skip(*pivot) {
                    if r != 0 {
                        *x = sub(*x, mul(f, r));
                    }
                }
            }
        }
        match v.iter().position(|&x| x != 0) {
            Some(pivot) => {
                let s = inv(v[pivot]);
                for x in v.iter_mut().skip(pivot) {
                    if *x != 0 {
                        *x = mul(*x, s);
                    }
                }
                self.rows.push((pivot, v));
                true
            }
            None => false,
        }
    }
}

/// Rank of a set of 0/1 indicator vectors of dimension `dim`.
pub fn indicator_rank<'a>(dim: usize, vectors: impl IntoIterator<Item = &'a [usize]>) -> usize {
    let mut e = ModularEliminator::new(dim);
    for v in vectors {
        e.insert_indicator(v);
        if e.rank() == dim {
            break;
        }
    }
    e.rank()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_arithmetic() {
        for a in [1u64, 2, 3, 12345, P - 1] {
            assert_eq!(mul(a, inv(a)), 1);
        }
        assert_eq!(sub(0, 1), P - 1);
    }

    #[test]
    fn detects_dependence() {
        let mut e = ModularEliminator::new(3);
        assert!(e.insert_signed(&[1, 1, 0]));
        assert!(e.insert_signed(&[0, 1, 1]));
        assert!(!e.insert_signed(&[1, 2, 1]));
        assert!(!e.insert_signed(&[1, 0, -1]));
        assert!(e.insert_signed(&[1, 0, 1]));
        assert_eq!(e.rank(), 3);
    }

    #[test]
    fn even_cycle_is_dependent() {
        // unsigned incidence of a 4-cycle has rank 3, a triangle rank 3
        let c4: [&[usize]; 4] = [&[0, 1], &[1, 2], &[2, 3], &[0, 3]];
        assert_eq!(indicator_rank(4, c4), 3);
        let c3: [&[usize]; 3] = [&[0, 1], &[1, 2], &[0, 2]];
        assert_eq!(indicator_rank(3, c3), 3);
    }
}
