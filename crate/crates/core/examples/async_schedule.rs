//! Generating, checking and serializing a bounded-delay schedule.
//!
//! ```text
//! cargo run --example async_schedule
//! ```

use ddopt::schedule::{generate_schedule, Clock};

fn main() {
    let schedule = generate_schedule(3, 30, 3, 42).unwrap();
    println!("coordinator slots: {:?}", schedule.coordinator_slots);
    for (i, slots) in schedule.agent_slots.iter().enumerate() {
        println!("agent {i} slots: {slots:?}");
        println!(
            "        reads lambda delayed by {:?}",
            schedule.dual_delays[i]
        );
    }
    println!("violations: {}", schedule.validate().len());

    // break it on purpose
    let mut broken = schedule.clone();
    broken.primal_delays[1][2] = 9;
    for v in broken.validate() {
        assert!(matches!(v.clock, Clock::Coordinator));
        println!("rejected: {v}");
    }

    let text = schedule.to_text();
    println!("\n{}", text.lines().take(6).collect::<Vec<_>>().join("\n"));
    let back = ddopt::AsyncSchedule::from_text(&text).unwrap();
    assert_eq!(back, schedule);
}
