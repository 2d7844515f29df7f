//! Cumulative-weight index over `w_i = D_i + b`.
//!
//! Weights are never stored as floats. Each node of the binary indexed tree
//! carries two integers: the summed activation counts and the number of
//! unsuspended neurons in its range. A prefix weight is then always evaluated
//! as `count + active * b` by [`weight_of`], which is also what the linear
//! reference scan uses. Because the integer parts are exact, the indexed and
//! the reference sampler compare the very same `f64` against the threshold and
//! return identical indices.

/// Weight of a prefix holding `count` activations spread over `active`
/// unsuspended neurons.
#[inline]
pub fn weight_of(count: u64, active: u64, b: f64) -> f64 {
    count as f64 + active as f64 * b
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightIndex {
    b: f64,
    counts: Vec<u64>,
    actives: Vec<u64>,
    total_count: u64,
    total_active: u64,
    top_step: usize,
}

impl WeightIndex {
    /// Builds the index in O(n) from per-neuron counts and suspension flags.
    pub fn build(b: f64, counts: &[u64], suspended: &[bool]) -> Self {
        let n = counts.len();
        let mut tree_counts = vec![0u64; n + 1];
        let mut tree_actives = vec![0u64; n + 1];
        let mut total_count = 0;
        let mut total_active = 0;
        for i in 0..n {
            if !suspended[i] {
                tree_counts[i + 1] = counts[i];
                tree_actives[i + 1] = 1;
                total_count += counts[i];
                total_active += 1;
            }
        }
        for i in 1..=n {
            let parent = i + lowest_bit(i);
            if parent <= n {
                tree_counts[parent] += tree_counts[i];
                tree_actives[parent] += tree_actives[i];
            }
        }
        let top_step = if n == 0 { 0 } else { 1usize << (usize::BITS - 1 - n.leading_zeros()) };
        Self {
            b,
            counts: tree_counts,
            actives: tree_actives,
            total_count,
            total_active,
            top_step,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn total_active(&self) -> u64 {
        self.total_active
    }

    pub fn total_weight(&self) -> f64 {
        weight_of(self.total_count, self.total_active, self.b)
    }

    /// Adds `count_delta` activations and `active_delta` presence to neuron `i`.
    pub fn update(&mut self, i: usize, count_delta: i64, active_delta: i64) {
        let mut node = i + 1;
        let n = self.len();
        while node <= n {
            self.counts[node] = self.counts[node].wrapping_add_signed(count_delta);
            self.actives[node] = self.actives[node].wrapping_add_signed(active_delta);
            node += lowest_bit(node);
        }
        self.total_count = self.total_count.wrapping_add_signed(count_delta);
        self.total_active = self.total_active.wrapping_add_signed(active_delta);
    }

    /// Exact integer prefix sums `(counts, actives)` over neurons `0..len`.
    pub fn prefix(&self, len: usize) -> (u64, u64) {
        let mut node = len;
        let (mut c, mut a) = (0, 0);
        while node > 0 {
            c += self.counts[node];
            a += self.actives[node];
            node -= lowest_bit(node);
        }
        (c, a)
    }

    /// Smallest index whose cumulative weight strictly exceeds `u * total`.
    ///
    /// If rounding leaves the threshold at or above the total, the last
    /// unsuspended neuron is returned.
    pub fn draw(&self, u: f64) -> usize {
        let n = self.len();
        let target = u * self.total_weight();
        let mut pos = 0;
        let (mut c, mut a) = (0u64, 0u64);
        let mut step = self.top_step;
        while step > 0 {
            let next = pos + step;
            if next <= n {
                let nc = c + self.counts[next];
                let na = a + self.actives[next];
                if weight_of(nc, na, self.b) <= target {
                    pos = next;
                    c = nc;
                    a = na;
                }
            }
            step >>= 1;
        }
        if pos < n {
            pos
        } else {
            self.last_active()
        }
    }

    /// Index of the unsuspended neuron with the highest index.
    fn last_active(&self) -> usize {
        let n = self.len();
        let mut pos = 0;
        let mut a = 0u64;
        let mut step = self.top_step;
        while step > 0 {
            let next = pos + step;
            if next <= n && a + self.actives[next] < self.total_active {
                pos = next;
                a += self.actives[next];
            }
            step >>= 1;
        }
        pos
    }
}

#[inline]
fn lowest_bit(i: usize) -> usize {
    i & i.wrapping_neg()
}
