use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};

use super::{CompletionBackend, CompletionRequest, GatewayError, StepScorer};

/// Counting semaphore bounding concurrent requests to one backend.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

pub struct Permit<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut current = self.current.lock().unwrap();
        while *current >= self.max {
            current = self.freed.wait(current).unwrap();
        }
        *current += 1;
        self.peak.fetch_max(*current, Ordering::SeqCst);
        Permit { limit: self }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    /// Highest number of permits ever held at once.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut current = self.limit.current.lock().unwrap();
        *current -= 1;
        self.limit.freed.notify_one();
    }
}

/// Wraps any backend with an in-flight cap.
pub struct Limited<B> {
    inner: B,
    limit: InFlightLimit,
}

impl<B> Limited<B> {
    pub fn new(inner: B, max_in_flight: usize) -> Self {
        Self {
            inner,
            limit: InFlightLimit::new(max_in_flight),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn limit(&self) -> &InFlightLimit {
        &self.limit
    }
}

impl<B: CompletionBackend> CompletionBackend for Limited<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError> {
        let _permit = self.limit.acquire();
        self.inner.complete(request)
    }
}

impl<B: StepScorer> StepScorer for Limited<B> {
    fn score_steps(
        &self,
        key: &str,
        question: &str,
        steps: &[String],
    ) -> Result<Vec<f64>, GatewayError> {
        let _permit = self.limit.acquire();
        self.inner.score_steps(key, question, steps)
    }
}
