//! False-data-injection behaviour. Attackers follow the protocol to the letter
//! and only lie about their own sensor value.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::domain::{NodeId, Reading};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("attacker fraction must lie in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("duty cycle must lie in (0, 1], got {0}")]
    InvalidDutyCycle(f64),
    #[error("attack magnitude range [{lo}, {hi}] is empty or non-finite")]
    InvalidMagnitude { lo: f64, hi: f64 },
    #[error("additive offsets must exceed the similarity threshold {cthresh} in magnitude, smallest is {offset}")]
    OffsetTooSmall { offset: f64, cthresh: f64 },
    #[error("unknown attack mode `{0}`")]
    UnknownMode(String),
    #[error("active_from must be a non-negative time, got {0}")]
    InvalidStart(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    AdditiveOffset,
    FixedValue,
    RandomFabrication,
}

impl FromStr for AttackKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "additive_offset" => Ok(AttackKind::AdditiveOffset),
            "fixed_value" => Ok(AttackKind::FixedValue),
            "random_fabrication" => Ok(AttackKind::RandomFabrication),
            other => Err(AttackError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::AdditiveOffset => "additive_offset",
            AttackKind::FixedValue => "fixed_value",
            AttackKind::RandomFabrication => "random_fabrication",
        })
    }
}

/// How one attacker rewrites its readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackMode {
    AdditiveOffset(f64),
    FixedValue(f64),
    RandomFabrication { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackProfile {
    mode: AttackMode,
    active_from: f64,
    duty_cycle: f64,
}

impl AttackProfile {
    pub fn new(mode: AttackMode, active_from: f64, duty_cycle: f64) -> Result<Self, AttackError> {
        if !(duty_cycle > 0.0 && duty_cycle <= 1.0) {
            return Err(AttackError::InvalidDutyCycle(duty_cycle));
        }
        if !(active_from >= 0.0 && active_from.is_finite()) {
            return Err(AttackError::InvalidStart(active_from));
        }
        let finite = match mode {
            AttackMode::AdditiveOffset(v) | AttackMode::FixedValue(v) => v.is_finite(),
            AttackMode::RandomFabrication { lo, hi } => {
                lo.is_finite() && hi.is_finite() && lo <= hi
            }
        };
        if !finite {
            let (lo, hi) = match mode {
                AttackMode::RandomFabrication { lo, hi } => (lo, hi),
                AttackMode::AdditiveOffset(v) | AttackMode::FixedValue(v) => (v, v),
            };
            return Err(AttackError::InvalidMagnitude { lo, hi });
        }
        Ok(AttackProfile {
            mode,
            active_from,
            duty_cycle,
        })
    }

    pub fn mode(&self) -> AttackMode {
        self.mode
    }

    pub fn duty_cycle(&self) -> f64 {
        self.duty_cycle
    }

    pub fn active_from(&self) -> f64 {
        self.active_from
    }

    /// Returns the reading the attacker will report at `now`.
    pub fn falsify<R: Rng + ?Sized>(
        &self,
        true_reading: Reading,
        now: f64,
        rng: &mut R,
    ) -> Reading {
        if now < self.active_from {
            return true_reading;
        }
        if self.duty_cycle < 1.0 && rng.random::<f64>() >= self.duty_cycle {
            return true_reading;
        }
        let value = match self.mode {
            AttackMode::AdditiveOffset(offset) => true_reading.value() + offset,
            AttackMode::FixedValue(v) => v,
            AttackMode::RandomFabrication { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
        };
        Reading::new(value, true_reading.timestamp()).unwrap_or(true_reading)
    }
}

/// Configuration-level attack description. Offsets and fixed values are drawn
/// once per attacker from `[lo, hi]`; fabrication draws every reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackTemplate {
    pub kind: AttackKind,
    pub lo: f64,
    pub hi: f64,
    pub active_from: f64,
    pub duty_cycle: f64,
}

impl Default for AttackTemplate {
    fn default() -> Self {
        AttackTemplate {
            kind: AttackKind::AdditiveOffset,
            lo: 20.0,
            hi: 40.0,
            active_from: 0.0,
            duty_cycle: 1.0,
        }
    }
}

impl AttackTemplate {
    pub fn validate(&self, cthresh: f64) -> Result<(), AttackError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(AttackError::InvalidMagnitude {
                lo: self.lo,
                hi: self.hi,
            });
        }
        if self.kind == AttackKind::AdditiveOffset {
            let smallest = if self.lo <= 0.0 && self.hi >= 0.0 {
                0.0
            } else {
                self.lo.abs().min(self.hi.abs())
            };
            if smallest <= cthresh {
                return Err(AttackError::OffsetTooSmall {
                    offset: smallest,
                    cthresh,
                });
            }
        }
        AttackProfile::new(
            AttackMode::FixedValue(0.0),
            self.active_from,
            self.duty_cycle,
        )?;
        Ok(())
    }

    pub fn instantiate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AttackProfile, AttackError> {
        let mut draw = || {
            if self.lo == self.hi {
                self.lo
            } else {
                rng.random_range(self.lo..=self.hi)
            }
        };
        let mode = match self.kind {
            AttackKind::AdditiveOffset => AttackMode::AdditiveOffset(draw()),
            AttackKind::FixedValue => AttackMode::FixedValue(draw()),
            AttackKind::RandomFabrication => AttackMode::RandomFabrication {
                lo: self.lo,
                hi: self.hi,
            },
        };
        AttackProfile::new(mode, self.active_from, self.duty_cycle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerAssignment {
    pub fraction: f64,
    pub ids: BTreeSet<NodeId>,
}

impl AttackerAssignment {
    pub fn contains(&self, id: NodeId) -> bool {
        self.ids.contains(&id)
    }
}

/// Attacker count for a population, `round(fraction · n)`.
pub fn attacker_count(n_nodes: usize, fraction: f64) -> usize {
    ((fraction * n_nodes as f64).round() as usize).min(n_nodes)
}

/// Uniformly samples `round(fraction · n)` attackers among ids `0..n`.
pub fn assign_attackers<R: Rng + ?Sized>(
    n_nodes: usize,
    fraction: f64,
    rng: &mut R,
) -> Result<AttackerAssignment, AttackError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AttackError::InvalidFraction(fraction));
    }
    let k = attacker_count(n_nodes, fraction);
    let ids = index::sample(rng, n_nodes, k)
        .into_iter()
        .map(|i| NodeId(i as u32))
        .collect();
    Ok(AttackerAssignment { fraction, ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(v: f64) -> Reading {
        Reading::new(v, 3.0).unwrap()
    }

    #[test]
    fn fixed_and_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fixed = AttackProfile::new(AttackMode::FixedValue(45.0), 0.0, 1.0).unwrap();
        assert_eq!(fixed.falsify(r(16.0), 1.0, &mut rng).value(), 45.0);
        let add = AttackProfile::new(AttackMode::AdditiveOffset(29.0), 0.0, 1.0).unwrap();
        let out = add.falsify(r(16.0), 1.0, &mut rng);
        assert_eq!(out.value(), 45.0);
        assert_eq!(out.timestamp(), 3.0);
    }

    #[test]
    fn dormant_before_active_from() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = AttackProfile::new(AttackMode::FixedValue(45.0), 10.0, 1.0).unwrap();
        assert_eq!(p.falsify(r(16.0), 9.99, &mut rng).value(), 16.0);
        assert_eq!(p.falsify(r(16.0), 10.0, &mut rng).value(), 45.0);
    }

    #[test]
    fn duty_cycle_fraction() {
        // Binomial(1000, 0.5): sd ≈ 15.8, so ±50 is beyond 3σ.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = AttackProfile::new(AttackMode::AdditiveOffset(30.0), 0.0, 0.5).unwrap();
        let falsified = (0..1000)
            .filter(|_| p.falsify(r(16.0), 1.0, &mut rng).value() != 16.0)
            .count();
        assert!((450..=550).contains(&falsified), "{falsified}");
    }

    #[test]
    fn fabrication_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = AttackProfile::new(
            AttackMode::RandomFabrication { lo: 30.0, hi: 50.0 },
            0.0,
            1.0,
        )
        .unwrap();
        for _ in 0..1000 {
            let v = p.falsify(r(16.0), 1.0, &mut rng).value();
            assert!((30.0..50.0).contains(&v));
        }
    }

    #[test]
    fn profile_validation() {
        assert!(AttackProfile::new(AttackMode::FixedValue(1.0), 0.0, 0.0).is_err());
        assert!(AttackProfile::new(AttackMode::FixedValue(1.0), 0.0, 1.5).is_err());
        assert!(AttackProfile::new(AttackMode::FixedValue(f64::NAN), 0.0, 1.0).is_err());
        let mut t = AttackTemplate::default();
        assert!(t.validate(3.0).is_ok());
        t.lo = 2.0;
        assert!(matches!(
            t.validate(3.0),
            Err(AttackError::OffsetTooSmall { .. })
        ));
        t.lo = -40.0;
        t.hi = -20.0;
        assert!(t.validate(3.0).is_ok());
    }

    #[test]
    fn template_draws_offset_within_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            match AttackTemplate::default()
                .instantiate(&mut rng)
                .unwrap()
                .mode()
            {
                AttackMode::AdditiveOffset(o) => assert!((20.0..=40.0).contains(&o)),
                m => panic!("unexpected {m:?}"),
            }
        }
    }

    #[test]
    fn assignment_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(assign_attackers(100, 0.10, &mut rng).unwrap().ids.len(), 10);
        assert_eq!(assign_attackers(50, 0.02, &mut rng).unwrap().ids.len(), 1);
        assert!(assign_attackers(50, 0.0, &mut rng).unwrap().ids.is_empty());
        assert_eq!(assign_attackers(3, 1.0, &mut rng).unwrap().ids.len(), 3);
        assert!(assign_attackers(10, 1.2, &mut rng).is_err());
        for n in [50, 75, 100] {
            for f in [0.02, 0.05, 0.10] {
                let a = assign_attackers(n, f, &mut rng).unwrap();
                assert_eq!(a.ids.len(), (f * n as f64).round() as usize);
                assert!(a.ids.iter().all(|id| id.index() < n));
            }
        }
    }

    #[test]
    fn assignment_is_seeded() {
        let a = assign_attackers(100, 0.1, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = assign_attackers(100, 0.1, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
    }
}
