//! Multi-indices `J = (j₁, j₂, j₃)` over `{±1, ±3, …, ±m}` with `j₁ + j₂ + j₃ = j`.

/// The signed harmonic set in ascending order: `-m, …, -3, -1, 1, 3, …, m`.
pub fn signed_harmonics(m: usize) -> Vec<i32> {
    let m = m as i32;
    (-m..=m).filter(|j| j % 2 != 0).collect()
}

/// All ordered triples summing to `j`, in lexicographic order.
pub fn enumerate_multiindices(m: usize, j: i32) -> Vec<[i32; 3]> {
    let set = signed_harmonics(m);
    let mut out = Vec::new();
    for &a in &set {
        for &b in &set {
            let c = j - a - b;
            if c.abs() <= m as i32 && c % 2 != 0 {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Multi-index lists for every stored harmonic `j ∈ {1, 3, …, m}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionPlan {
    pub m: usize,
    pub targets: Vec<i32>,
    pub triples: Vec<Vec<[i32; 3]>>,
}

impl InteractionPlan {
    pub fn new(m: usize) -> Self {
        assert!(m % 2 == 1, "harmonic cutoff must be odd, got {m}");
        let targets: Vec<i32> = (1..=m as i32).step_by(2).collect();
        let triples = targets.iter().map(|&j| enumerate_multiindices(m, j)).collect();
        Self { m, targets, triples }
    }

    /// Number of stored (positive) harmonics.
    pub fn harmonic_count(&self) -> usize {
        self.targets.len()
    }

    /// Slot of a signed harmonic: positive `j` first, then the negatives.
    #[inline]
    pub fn signed_slot(j: i32, count: usize) -> usize {
        if j > 0 {
            ((j - 1) / 2) as usize
        } else {
            count + ((-j - 1) / 2) as usize
        }
    }

    #[inline]
    pub fn slot_value(slot: usize, count: usize) -> i32 {
        if slot < count {
            2 * slot as i32 + 1
        } else {
            -(2 * (slot - count) as i32 + 1)
        }
    }
}
