use super::transition::{Stream, Transition};
use rand::Rng;

/// Fixed-capacity FIFO ring.
#[derive(Debug, Clone)]
struct Ring {
    items: Vec<Transition>,
    next: usize,
    capacity: usize,
}

impl Ring {
    fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }
}

/// One ring per stream, each holding up to `capacity` transitions.
/// Sampling is uniform with replacement within a stream.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    rings: [Ring; 3],
    pushed: [u64; 3],
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        let ring = || Ring {
            items: Vec::new(),
            next: 0,
            capacity,
        };
        Self {
            rings: [ring(), ring(), ring()],
            pushed: [0; 3],
        }
    }

    pub fn capacity(&self) -> usize {
        self.rings[0].capacity
    }

    pub fn push(&mut self, t: Transition) {
        let s = t.stream.index();
        self.pushed[s] += 1;
        self.rings[s].push(t);
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        for t in ts {
            self.push(t);
        }
    }

    pub fn len(&self, stream: Stream) -> usize {
        self.rings[stream.index()].items.len()
    }

    /// Total transitions ever pushed to `stream`.
    pub fn pushed(&self, stream: Stream) -> u64 {
        self.pushed[stream.index()]
    }

    pub fn is_empty(&self) -> bool {
        self.rings.iter().all(|r| r.items.is_empty())
    }

    /// Indices for a batch, or `None` while the stream holds fewer than
    /// `batch` transitions.
    pub fn sample_indices<R: Rng>(
        &self,
        stream: Stream,
        batch: usize,
        rng: &mut R,
    ) -> Option<Vec<usize>> {
        let n = self.len(stream);
        if n < batch || batch == 0 {
            return None;
        }
        Some((0..batch).map(|_| rng.gen_range(0..n)).collect())
    }

    pub fn sample<R: Rng>(
        &self,
        stream: Stream,
        batch: usize,
        rng: &mut R,
    ) -> Option<Vec<&Transition>> {
        let idx = self.sample_indices(stream, batch, rng)?;
        let items = &self.rings[stream.index()].items;
        Some(idx.into_iter().map(|i| &items[i]).collect())
    }

    /// Stored transition at slot `i` of `stream`.
    pub fn get(&self, stream: Stream, i: usize) -> &Transition {
        &self.rings[stream.index()].items[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::transition::{MsgSet, StoredAction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(stream: Stream, r: f32) -> Transition {
        Transition {
            stream,
            obs: vec![r],
            msgs: MsgSet::default(),
            action: StoredAction::Binary(1),
            reward: r,
            next_obs: vec![r],
            next_msgs: MsgSet::default(),
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(tr(Stream::Nav, k as f32));
        }
        assert_eq!(b.len(Stream::Nav), 3);
        let mut rewards: Vec<f32> = (0..3).map(|i| b.get(Stream::Nav, i).reward).collect();
        rewards.sort_by(f32::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
        assert_eq!(b.pushed(Stream::Nav), 5);
    }

    #[test]
    fn streams_are_isolated() {
        let mut b = ReplayBuffer::new(10);
        b.push(tr(Stream::Nav, 1.0));
        b.push(tr(Stream::Filter, -1.0));
        b.push(tr(Stream::Nav, 2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            for t in b.sample(Stream::Nav, 2, &mut rng).unwrap() {
                assert_eq!(t.stream, Stream::Nav);
                assert!(t.reward > 0.0);
            }
        }
        assert!(b.sample(Stream::Filter, 2, &mut rng).is_none());
    }

    #[test]
    fn sampling_is_uniform_chi_square() {
        let n = 20;
        let mut b = ReplayBuffer::new(n);
        for k in 0..n {
            b.push(tr(Stream::Nav, k as f32));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0u64; n];
        let draws = 100_000;
        for _ in 0..draws / 10 {
            for i in b.sample_indices(Stream::Nav, 10, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let e = draws as f64 / n as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 19 degrees of freedom, 0.999 quantile is about 43.8
        assert!(chi2 < 43.8, "chi2 = {chi2}");
    }
}
