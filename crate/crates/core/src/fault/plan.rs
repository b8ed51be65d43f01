use std::io::Write;

use rand::Rng;
use serde::Serialize;

use super::{FaultError, WeibullModel};
use crate::seed;

/// What happens to one client in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaultEvent {
    pub dropped: bool,
    /// Simulated time into the round's training window at which the
    /// client fails; infinite when it does not fail.
    pub failure_time: f64,
}

impl FaultEvent {
    pub const NONE: Self = Self {
        dropped: false,
        failure_time: f64::INFINITY,
    };
}

/// Pre-drawn failures for every `(round, client)` pair. Rounds are
/// numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultPlan {
    n_clients: usize,
    n_rounds: usize,
    seed: u64,
    events: Vec<FaultEvent>,
}

impl FaultPlan {
    /// A plan in which nothing fails.
    pub fn none(n_clients: usize, n_rounds: usize) -> Self {
        Self {
            n_clients,
            n_rounds,
            seed: 0,
            events: vec![FaultEvent::NONE; n_clients * n_rounds],
        }
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn n_rounds(&self) -> usize {
        self.n_rounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Event for `client` in `round` (1-based); outside the plan nothing fails.
    pub fn event(&self, round: usize, client: usize) -> FaultEvent {
        if round == 0 || round > self.n_rounds || client >= self.n_clients {
            return FaultEvent::NONE;
        }
        self.events[(round - 1) * self.n_clients + client]
    }

    pub fn round(&self, round: usize) -> Vec<FaultEvent> {
        (0..self.n_clients).map(|c| self.event(round, c)).collect()
    }

    pub fn dropped_count(&self) -> usize {
        self.events.iter().filter(|e| e.dropped).count()
    }

    /// Audit export: `round,client_id,dropped,failure_time`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "client_id", "dropped", "failure_time"])?;
        for r in 1..=self.n_rounds {
            for c in 0..self.n_clients {
                let e = self.event(r, c);
                let t = if e.failure_time.is_finite() {
                    format!("{}", e.failure_time)
                } else {
                    "inf".to_string()
                };
                w.write_record([r.to_string(), c.to_string(), u8::from(e.dropped).to_string(), t])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws a Bernoulli(`dropout_rate`) failure flag for every client in every
/// round; flagged clients get a Weibull failure time conditioned to fall
/// inside the `window` of local training. Each `(round, client)` pair has its
/// own derived generator, so the plan does not depend on iteration order.
pub fn build_fault_plan(
    n_clients: usize,
    n_rounds: usize,
    dropout_rate: f64,
    model: &WeibullModel<f64>,
    window: f64,
    seed: u64,
) -> Result<FaultPlan, FaultError> {
    if !(0.0..=1.0).contains(&dropout_rate) {
        return Err(FaultError::InvalidRate(dropout_rate));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(FaultError::InvalidPolicy(format!("failure window must be positive, got {window}")));
    }
    let mut events = Vec::with_capacity(n_clients * n_rounds);
    for r in 1..=n_rounds {
        for c in 0..n_clients {
            let mut rng = seed::rng_for(&[seed, seed::stream::FAULT, r as u64, c as u64]);
            let u: f64 = rng.random();
            let dropped = u < dropout_rate;
            let time = model.sample_within(&mut rng, window);
            events.push(FaultEvent {
                dropped,
                failure_time: if dropped { time } else { f64::INFINITY },
            });
        }
    }
    Ok(FaultPlan {
        n_clients,
        n_rounds,
        seed,
        events,
    })
}
