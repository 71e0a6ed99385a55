//! Local clocks and communication delays on one global logical clock.
//!
//! Every party acts at tick 0. Afterwards consecutive actions of a party are at
//! most `k0` ticks apart, and every piece of information read is at most `k0`
//! ticks old. An agent's dual read is also held until its next slot, so its
//! age keeps growing while held; generation accounts for that so the
//! multiplier behind any buffered primal is never more than `k0` ticks stale
//! when the coordinator looks at it.

use std::fmt;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsyncSchedule {
    /// Last tick covered, `K`.
    pub horizon: usize,
    pub k0: usize,
    /// `K_D`, sorted.
    pub coordinator_slots: Vec<usize>,
    /// `K_i` per agent, sorted.
    pub agent_slots: Vec<Vec<usize>>,
    /// `delta_di(k)` for each `k` in `agent_slots[i]`, same order.
    pub dual_delays: Vec<Vec<usize>>,
    /// `delta_pi(k)` for each `k` in `coordinator_slots`, indexed `[agent][slot position]`.
    pub primal_delays: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    Coordinator,
    Agent(usize),
}

impl fmt::Display for Clock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clock::Coordinator => write!(f, "K_D"),
            Clock::Agent(i) => write!(f, "K_{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    MissingStart,
    NotIncreasing {
        previous: usize,
    },
    BeyondHorizon,
    Gap {
        gap: usize,
        bound: usize,
    },
    /// Last action too far before the horizon.
    Tail {
        gap: usize,
        bound: usize,
    },
    DualDelay {
        delay: usize,
        bound: usize,
    },
    PrimalDelay {
        agent: usize,
        delay: usize,
        bound: usize,
    },
    /// The delay points before tick 0.
    BeforeStart {
        delay: usize,
    },
    /// A held dual read grows older than `k0` before the next slot.
    HeldAge {
        age: usize,
        bound: usize,
    },
    LengthMismatch {
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub clock: Clock,
    pub slot: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} slot {}: ", self.clock, self.slot)?;
        match self.kind {
            ViolationKind::MissingStart => write!(f, "clock does not start at 0"),
            ViolationKind::NotIncreasing { previous } => {
                write!(f, "slot does not follow previous slot {previous}")
            }
            ViolationKind::BeyondHorizon => write!(f, "slot lies beyond the horizon"),
            ViolationKind::Gap { gap, bound } => write!(f, "gap {gap} exceeds bound {bound}"),
            ViolationKind::Tail { gap, bound } => {
                write!(f, "{gap} ticks to the horizon exceed bound {bound}")
            }
            ViolationKind::DualDelay { delay, bound } => {
                write!(f, "dual delay {delay} exceeds k0 = {bound}")
            }
            ViolationKind::PrimalDelay {
                agent,
                delay,
                bound,
            } => write!(
                f,
                "primal delay from agent {agent} is {delay}, exceeds k0 = {bound}"
            ),
            ViolationKind::BeforeStart { delay } => {
                write!(f, "delay {delay} reaches before iteration 0")
            }
            ViolationKind::HeldAge { age, bound } => {
                write!(f, "held dual read reaches age {age}, exceeds k0 = {bound}")
            }
            ViolationKind::LengthMismatch { expected, got } => {
                write!(f, "{got} delays recorded for {expected} slots")
            }
        }
    }
}

fn draw_clock(rng: &mut ChaCha8Rng, horizon: usize, max_gap: usize) -> Vec<usize> {
    let mut slots = vec![0];
    loop {
        let next = slots.last().unwrap() + rng.gen_range(1..=max_gap);
        if next > horizon {
            return slots;
        }
        slots.push(next);
    }
}

/// Random bounded-delay schedule over ticks `0..=horizon`.
///
/// Gaps between a party's consecutive slots are uniform on `{1, ..., max(k0, 1)}`;
/// delays are uniform on `{0, ..., k0}`, truncated so that no read precedes tick 0
/// and no held dual read ages past `k0`. `k0 = 0` gives the synchronous schedule.
pub fn generate_schedule(
    n_agents: usize,
    horizon: usize,
    k0: usize,
    seed: u64,
) -> Result<AsyncSchedule> {
    if horizon < 1 {
        return Err(Error::Schedule("horizon must be at least 1".into()));
    }
    if n_agents == 0 {
        return Err(Error::Schedule("no agents".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_gap = k0.max(1);
    let coordinator_slots = draw_clock(&mut rng, horizon, max_gap);
    let agent_slots: Vec<Vec<usize>> = (0..n_agents)
        .map(|_| draw_clock(&mut rng, horizon, max_gap))
        .collect();

    let dual_delays = agent_slots
        .iter()
        .map(|slots| {
            slots
                .iter()
                .enumerate()
                .map(|(pos, &s)| {
                    let next = slots.get(pos + 1).copied().unwrap_or(horizon + 1);
                    let held = next - s - 1;
                    let cap = k0.saturating_sub(held).min(s);
                    rng.gen_range(0..=cap)
                })
                .collect()
        })
        .collect();

    let primal_delays = (0..n_agents)
        .map(|_| {
            coordinator_slots
                .iter()
                .map(|&k| rng.gen_range(0..=k0.min(k)))
                .collect()
        })
        .collect();

    Ok(AsyncSchedule {
        horizon,
        k0,
        coordinator_slots,
        agent_slots,
        dual_delays,
        primal_delays,
    })
}

impl AsyncSchedule {
    /// Every party acts at every tick with no delay.
    pub fn synchronous(n_agents: usize, horizon: usize) -> Self {
        let all: Vec<usize> = (0..=horizon).collect();
        Self {
            horizon,
            k0: 0,
            coordinator_slots: all.clone(),
            agent_slots: vec![all.clone(); n_agents],
            dual_delays: vec![vec![0; all.len()]; n_agents],
            primal_delays: vec![vec![0; all.len()]; n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agent_slots.len()
    }

    fn check_clock(&self, clock: Clock, slots: &[usize], out: &mut Vec<Violation>) {
        let bound = self.k0.max(1);
        match slots.first() {
            Some(0) => {}
            Some(&first) => out.push(Violation {
                clock,
                slot: first,
                kind: ViolationKind::MissingStart,
            }),
            None => {
                out.push(Violation {
                    clock,
                    slot: 0,
                    kind: ViolationKind::MissingStart,
                });
                return;
            }
        }
        for pair in slots.windows(2) {
            let (prev, slot) = (pair[0], pair[1]);
            if slot <= prev {
                out.push(Violation {
                    clock,
                    slot,
                    kind: ViolationKind::NotIncreasing { previous: prev },
                });
            } else if slot - prev > bound {
                out.push(Violation {
                    clock,
                    slot,
                    kind: ViolationKind::Gap {
                        gap: slot - prev,
                        bound,
                    },
                });
            }
        }
        let last = *slots.last().unwrap();
        if last > self.horizon {
            out.push(Violation {
                clock,
                slot: last,
                kind: ViolationKind::BeyondHorizon,
            });
        } else if self.horizon - last >= bound {
            out.push(Violation {
                clock,
                slot: last,
                kind: ViolationKind::Tail {
                    gap: self.horizon - last,
                    bound: bound - 1,
                },
            });
        }
    }

    /// All breaches of the bounded-asynchrony invariants; empty iff the schedule is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let k0 = self.k0;
        self.check_clock(Clock::Coordinator, &self.coordinator_slots, &mut out);

        if self.dual_delays.len() != self.n_agents() || self.primal_delays.len() != self.n_agents()
        {
            out.push(Violation {
                clock: Clock::Coordinator,
                slot: 0,
                kind: ViolationKind::LengthMismatch {
                    expected: self.n_agents(),
                    got: self.dual_delays.len().min(self.primal_delays.len()),
                },
            });
            return out;
        }

        for (i, slots) in self.agent_slots.iter().enumerate() {
            let clock = Clock::Agent(i);
            self.check_clock(clock, slots, &mut out);
            let delays = &self.dual_delays[i];
            if delays.len() != slots.len() {
                out.push(Violation {
                    clock,
                    slot: 0,
                    kind: ViolationKind::LengthMismatch {
                        expected: slots.len(),
                        got: delays.len(),
                    },
                });
                continue;
            }
            for (pos, (&s, &delay)) in slots.iter().zip(delays).enumerate() {
                if delay > s {
                    out.push(Violation {
                        clock,
                        slot: s,
                        kind: ViolationKind::BeforeStart { delay },
                    });
                }
                if delay > k0 {
                    out.push(Violation {
                        clock,
                        slot: s,
                        kind: ViolationKind::DualDelay { delay, bound: k0 },
                    });
                    continue;
                }
                let next = slots.get(pos + 1).copied().unwrap_or(self.horizon + 1);
                let age = next.saturating_sub(s + 1) + delay;
                if age > k0 {
                    out.push(Violation {
                        clock,
                        slot: s,
                        kind: ViolationKind::HeldAge { age, bound: k0 },
                    });
                }
            }
        }

        for (i, delays) in self.primal_delays.iter().enumerate() {
            if delays.len() != self.coordinator_slots.len() {
                out.push(Violation {
                    clock: Clock::Agent(i),
                    slot: 0,
                    kind: ViolationKind::LengthMismatch {
                        expected: self.coordinator_slots.len(),
                        got: delays.len(),
                    },
                });
                continue;
            }
            for (&k, &delay) in self.coordinator_slots.iter().zip(delays) {
                if delay > k {
                    out.push(Violation {
                        clock: Clock::Coordinator,
                        slot: k,
                        kind: ViolationKind::BeforeStart { delay },
                    });
                }
                if delay > k0 {
                    out.push(Violation {
                        clock: Clock::Coordinator,
                        slot: k,
                        kind: ViolationKind::PrimalDelay {
                            agent: i,
                            delay,
                            bound: k0,
                        },
                    });
                }
            }
        }
        out
    }

    /// Plain-text audit trace: slot lists with their delays.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# ddopt async schedule v1").unwrap();
        writeln!(s, "horizon {}", self.horizon).unwrap();
        writeln!(s, "k0 {}", self.k0).unwrap();
        writeln!(s, "agents {}", self.n_agents()).unwrap();
        for (pos, k) in self.coordinator_slots.iter().enumerate() {
            write!(s, "coordinator {k}").unwrap();
            for delays in &self.primal_delays {
                write!(s, " {}", delays[pos]).unwrap();
            }
            s.push('\n');
        }
        for (i, (slots, delays)) in self.agent_slots.iter().zip(&self.dual_delays).enumerate() {
            for (k, d) in slots.iter().zip(delays) {
                writeln!(s, "agent {i} {k} {d}").unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Schedule(format!("line {}: {msg}", line + 1));
        let mut horizon = None;
        let mut k0 = None;
        let mut n_agents = None;
        let mut sched = AsyncSchedule {
            horizon: 0,
            k0: 0,
            coordinator_slots: Vec::new(),
            agent_slots: Vec::new(),
            dual_delays: Vec::new(),
            primal_delays: Vec::new(),
        };
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let nums = parts
                .map(str::parse::<usize>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(ln, &e.to_string()))?;
            match (key, nums.as_slice()) {
                ("horizon", [h]) => horizon = Some(*h),
                ("k0", [k]) => k0 = Some(*k),
                ("agents", [n]) => {
                    n_agents = Some(*n);
                    sched.agent_slots = vec![Vec::new(); *n];
                    sched.dual_delays = vec![Vec::new(); *n];
                    sched.primal_delays = vec![Vec::new(); *n];
                }
                ("coordinator", [k, delays @ ..]) => {
                    let n = n_agents.ok_or_else(|| bad(ln, "agent count must come first"))?;
                    if delays.len() != n {
                        return Err(bad(ln, "wrong number of primal delays"));
                    }
                    sched.coordinator_slots.push(*k);
                    for (i, d) in delays.iter().enumerate() {
                        sched.primal_delays[i].push(*d);
                    }
                }
                ("agent", [i, k, d]) => {
                    if n_agents.is_none_or(|n| *i >= n) {
                        return Err(bad(ln, "unknown agent"));
                    }
                    sched.agent_slots[*i].push(*k);
                    sched.dual_delays[*i].push(*d);
                }
                _ => return Err(bad(ln, "unrecognized record")),
            }
        }
        sched.horizon = horizon.ok_or_else(|| Error::Schedule("missing horizon".into()))?;
        sched.k0 = k0.ok_or_else(|| Error::Schedule("missing k0".into()))?;
        if n_agents.is_none() {
            return Err(Error::Schedule("missing agent count".into()));
        }
        Ok(sched)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn synchronous_degeneration() {
        let s = generate_schedule(3, 10, 0, 42).unwrap();
        let all: Vec<usize> = (0..=10).collect();
        assert_eq!(s.coordinator_slots, all);
        assert!(s.agent_slots.iter().all(|k| *k == all));
        assert!(s.dual_delays.iter().flatten().all(|&d| d == 0));
        assert!(s.primal_delays.iter().flatten().all(|&d| d == 0));
        assert_eq!(s, AsyncSchedule::synchronous(3, 10));
        assert!(s.validate().is_empty());
    }

    #[test]
    fn long_async_schedule_is_valid() {
        let s = generate_schedule(6, 10_000, 4, 7).unwrap();
        assert!(s.validate().is_empty());
        let max_gap = s
            .coordinator_slots
            .windows(2)
            .chain(s.agent_slots.iter().flat_map(|c| c.windows(2)))
            .map(|w| w[1] - w[0])
            .max()
            .unwrap();
        assert!(max_gap <= 4);
        let max_delay = s
            .dual_delays
            .iter()
            .chain(&s.primal_delays)
            .flatten()
            .max()
            .unwrap();
        assert!(*max_delay <= 4);
        // the generator should actually exercise the full range
        assert_eq!(max_gap, 4);
        assert_eq!(*s.primal_delays.iter().flatten().max().unwrap(), 4);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_schedule(6, 500, 3, 99).unwrap();
        let b = generate_schedule(6, 500, 3, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_schedule(6, 500, 3, 100).unwrap());
    }

    #[test]
    fn zero_horizon_rejected() {
        assert!(generate_schedule(2, 0, 1, 0).is_err());
    }

    #[test]
    fn coordinator_gap_flagged() {
        let mut s = AsyncSchedule::synchronous(2, 10);
        s.k0 = 2;
        // remove slots 4 and 5: gap of 3 = k0 + 1 between 3 and 6
        let keep: Vec<usize> = (0..s.coordinator_slots.len())
            .filter(|&p| s.coordinator_slots[p] != 4 && s.coordinator_slots[p] != 5)
            .collect();
        s.coordinator_slots = keep.iter().map(|&p| s.coordinator_slots[p]).collect();
        for d in &mut s.primal_delays {
            *d = keep.iter().map(|&p| d[p]).collect();
        }
        let v = s.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].clock, Clock::Coordinator);
        assert_eq!(v[0].slot, 6);
        assert_eq!(v[0].kind, ViolationKind::Gap { gap: 3, bound: 2 });
        assert!(v[0].to_string().contains("K_D"));
    }

    #[test]
    fn primal_delay_flagged() {
        let mut s = AsyncSchedule::synchronous(3, 10);
        s.k0 = 1;
        s.primal_delays[2][5] = 2;
        let v = s.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].slot, 5);
        assert_eq!(
            v[0].kind,
            ViolationKind::PrimalDelay {
                agent: 2,
                delay: 2,
                bound: 1
            }
        );
        let msg = v[0].to_string();
        assert!(msg.contains("agent 2") && msg.contains("slot 5"), "{msg}");
    }

    #[test]
    fn held_age_flagged() {
        let mut s = AsyncSchedule::synchronous(1, 6);
        s.k0 = 2;
        // agent acts at 0, 2, 4, 6 with a dual delay of 2 at slot 2: held through tick 3 -> age 3
        s.agent_slots[0] = vec![0, 2, 4, 6];
        s.dual_delays[0] = vec![0, 2, 0, 0];
        let v = s.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::HeldAge { age: 3, bound: 2 });
    }

    #[test]
    fn delay_before_start_flagged() {
        let mut s = AsyncSchedule::synchronous(1, 4);
        s.k0 = 3;
        s.primal_delays[0][1] = 2;
        let v = s.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::BeforeStart { delay: 2 });
    }

    #[test]
    fn text_trace_parses_back() {
        let s = generate_schedule(4, 60, 3, 5).unwrap();
        let text = s.to_text();
        assert!(text.starts_with(
            "# ddopt async schedule v1\nhorizon 60\nk0 3\nagents 4\ncoordinator 0 0 0 0 0\n"
        ));
        assert_eq!(AsyncSchedule::from_text(&text).unwrap(), s);
        assert!(AsyncSchedule::from_text("horizon 3\nk0 1\nagent 0 0 0\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn generated_schedules_validate(n in 1usize..5, horizon in 1usize..400, k0 in 0usize..9, seed in any::<u64>()) {
            let s = generate_schedule(n, horizon, k0, seed).unwrap();
            prop_assert!(s.validate().is_empty(), "{:?}", s.validate());
            prop_assert_eq!(AsyncSchedule::from_text(&s.to_text()).unwrap(), s);
        }
    }
}
