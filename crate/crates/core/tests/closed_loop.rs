//! Closed-loop sanity of the receding-horizon controller across the gait
//! library and the commanded-velocity range.

use strider_core::gait::GaitPattern;
use strider_core::harness::{receding_horizon_run, tracking_metrics, HarnessConfig};
use strider_core::ocp::VelocityCommand;

#[test]
fn all_gaits_run_closed_loop_across_the_velocity_range() {
    // The endpoints of the commanded-velocity range; mid-range commands
    // are exercised by the tracking and push-recovery suites.
    let cfg = HarnessConfig::<f64>::default();
    for gait in GaitPattern::<f64>::builtins() {
        for vx in [-0.5, 1.0] {
            let command = VelocityCommand::new(vx, 0.0, 0.0);
            let duration = 4.0 * gait.period;
            let log = receding_horizon_run(&command, &gait, duration, &[], &cfg)
                .unwrap_or_else(|e| panic!("{} at {vx} m/s: {e}", gait.name));
            let metrics = tracking_metrics(&log, 2.0 * gait.period, 0.05).unwrap();
            // No divergence: bounded velocity error and sane height after
            // the start-up transient.
            assert!(
                metrics.mean_velocity_error < 0.25,
                "{} at {vx} m/s: mean velocity error {}",
                gait.name,
                metrics.mean_velocity_error
            );
            assert!(
                (metrics.mean_height - 0.32).abs() < 0.05,
                "{} at {vx} m/s: mean height {}",
                gait.name,
                metrics.mean_height
            );
            assert!(
                log.final_state.position.z > 0.15,
                "{} at {vx} m/s: final height {}",
                gait.name,
                log.final_state.position.z
            );
        }
    }
}

#[test]
fn zero_command_holds_station_for_five_seconds() {
    let cfg = HarnessConfig::<f64>::default();
    let gait = GaitPattern::trot();
    let log = receding_horizon_run(&VelocityCommand::zero(), &gait, 5.0, &[], &cfg).unwrap();
    let drift = (log.final_state.position
        - nalgebra::Vector3::new(0.0, 0.0, cfg.synthesis.target_height))
    .norm();
    assert!(drift <= 0.05, "CoM drifted {drift} m over 5 s");
}
