use std::collections::VecDeque;

/// First index `i` at which the mean of the `window` losses ending at `i`
/// is `<= 0`. Indices before a full window is available are skipped.
/// Returns `None` for an empty sequence, `window == 0`, or no crossing.
pub fn zero_crossing_index(losses: &[f64], window: usize) -> Option<usize> {
    if window == 0 || losses.len() < window {
        return None;
    }
    let mut sum: f64 = losses[..window - 1].iter().sum();
    for i in window - 1..losses.len() {
        sum += losses[i];
        if sum / window as f64 <= 0.0 {
            return Some(i);
        }
        sum -= losses[i + 1 - window];
    }
    None
}

/// Streaming form of [`zero_crossing_index`].
#[derive(Debug, Clone)]
pub struct ZeroCrossing {
    window: usize,
    recent: VecDeque<f64>,
    seen: usize,
}

impl ZeroCrossing {
    pub fn new(window: usize) -> Self {
        ZeroCrossing {
            window: window.max(1),
            recent: VecDeque::with_capacity(window.max(1)),
            seen: 0,
        }
    }

    /// Feeds the next loss; returns its index if the criterion fires there.
    pub fn push(&mut self, loss: f64) -> Option<usize> {
        let index = self.seen;
        self.seen += 1;
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(loss);
        if self.recent.len() < self.window {
            return None;
        }
        // summed in arrival order, like the batch version
        let sum: f64 = self.recent.iter().sum();
        (sum / self.window as f64 <= 0.0).then_some(index)
    }
}
