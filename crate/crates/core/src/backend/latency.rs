//! Wraps a backend and adds simulated answer time.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use async_trait::async_trait;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{Backend, BackendError, Completion, CompletionRequest};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Fixed(f64),
    /// Uniform in `[min, max]`, drawn from a generator seeded with `seed` and
    /// the request, so the same request always gets the same delay.
    Seeded {
        seed: u64,
        min: f64,
        max: f64,
    },
}

pub struct LatencyInjector {
    inner: Arc<dyn Backend>,
    delay: Delay,
}

impl LatencyInjector {
    pub fn new(inner: Arc<dyn Backend>, delay: Delay) -> Self {
        Self { inner, delay }
    }

    fn extra(&self, request: &CompletionRequest) -> f64 {
        match self.delay {
            Delay::Fixed(s) => s,
            Delay::Seeded { seed, min, max } => {
                let mut h = DefaultHasher::new();
                request.scope.hash(&mut h);
                request.messages.len().hash(&mut h);
                if let Some(last) = request.messages.last() {
                    last.content.hash(&mut h);
                }
                let mut rng = StdRng::seed_from_u64(seed ^ h.finish());
                if max > min {
                    rng.random_range(min..=max)
                } else {
                    min
                }
            }
        }
    }
}

#[async_trait]
impl Backend for LatencyInjector {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut completion = self.inner.complete(request).await?;
        completion.latency += self.extra(request);
        Ok(completion)
    }
}
