//! Cooperative deadlines and per-step wall-clock accounting.

use std::ops::AddAssign;
use std::time::{Duration, Instant};

/// Point in time after which long-running searches give up.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deadline(Option<Instant>);

impl Deadline {
    pub fn none() -> Self {
        Deadline(None)
    }

    pub fn after(limit: Duration) -> Self {
        Deadline(Instant::now().checked_add(limit))
    }

    pub fn expired(&self) -> bool {
        self.0.is_some_and(|end| Instant::now() >= end)
    }
}

/// Wall time spent in each named solver step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTimings {
    pub leader_selection: Duration,
    pub ordering: Duration,
    pub leader_plan: Duration,
    pub follower_plan: Duration,
    pub backward_validation: Duration,
    pub heuristic_build: Duration,
    pub stage2_search: Duration,
}

impl StepTimings {
    pub const NAMES: [&'static str; 7] = [
        "leader_selection",
        "ordering",
        "leader_plan",
        "follower_plan",
        "backward_validation",
        "heuristic_build",
        "stage2_search",
    ];

    /// Values in the same order as [`StepTimings::NAMES`].
    pub fn values(&self) -> [Duration; 7] {
        [
            self.leader_selection,
            self.ordering,
            self.leader_plan,
            self.follower_plan,
            self.backward_validation,
            self.heuristic_build,
            self.stage2_search,
        ]
    }

    pub fn stage1(&self) -> Duration {
        self.leader_selection + self.ordering + self.leader_plan + self.follower_plan + self.backward_validation
    }

    pub fn stage2(&self) -> Duration {
        self.heuristic_build + self.stage2_search
    }

    pub fn total(&self) -> Duration {
        self.stage1() + self.stage2()
    }
}

impl AddAssign for StepTimings {
    fn add_assign(&mut self, rhs: Self) {
        self.leader_selection += rhs.leader_selection;
        self.ordering += rhs.ordering;
        self.leader_plan += rhs.leader_plan;
        self.follower_plan += rhs.follower_plan;
        self.backward_validation += rhs.backward_validation;
        self.heuristic_build += rhs.heuristic_build;
        self.stage2_search += rhs.stage2_search;
    }
}

/// Runs `f` and adds its wall time to `slot`.
pub fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deadline_basics() {
        assert!(!Deadline::none().expired());
        assert!(Deadline::after(Duration::ZERO).expired());
        assert!(!Deadline::after(Duration::from_secs(3600)).expired());
    }

    #[test]
    fn totals_partition() {
        let mut t = StepTimings::default();
        timed(&mut t.ordering, || std::thread::sleep(Duration::from_millis(2)));
        t.stage2_search = Duration::from_millis(5);
        let sum: Duration = t.values().iter().sum();
        assert_eq!(sum, t.total());
        assert_eq!(t.total(), t.stage1() + t.stage2());
        assert!(t.ordering >= Duration::from_millis(2));
        let mut u = t;
        u += t;
        assert_eq!(u.total(), t.total() * 2);
    }
}
