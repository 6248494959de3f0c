//! The `check` subcommand: a quick invariant suite over the active
//! configuration. Prints one line per check and returns the failure count.

use anyhow::Result;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use strider_core::config::ToolConfig;
use strider_core::export;
use strider_core::gait::{gait_diagram, make_timeline, rederive_gait, LEG_COUNT};
use strider_core::harness::sample_randomization;
use strider_core::imitation::reward_term_scalar;
use strider_core::ocp::{solve_ocp, VelocityCommand};
use strider_core::synthesis::{build_problem, GeneratorState};
use strider_core::vhipm::{compute_cop, in_convex_hull_xy, SupportSet};

use crate::{load, CommonArgs};

struct Suite {
    failures: usize,
}

impl Suite {
    fn record(&mut self, name: &str, outcome: std::result::Result<(), String>) {
        match outcome {
            Ok(()) => println!("check {name}: ok"),
            Err(message) => {
                println!("check {name}: FAILED ({message})");
                self.failures += 1;
            }
        }
    }
}

fn gait_conformance(config: &ToolConfig) -> std::result::Result<(), String> {
    for name in config.gaits.keys() {
        let gait = config.gait(name).map_err(|e| e.to_string())?;
        let dt = config.rates.solver_dt;
        let steps = (4.0 * gait.period / dt).round() as usize;
        let timeline = make_timeline(&gait, 0.0, steps, dt).map_err(|e| e.to_string())?;
        for leg in 0..LEG_COUNT {
            let stance = timeline.contacts[leg].iter().filter(|&&c| c).count();
            let fraction = stance as f64 / steps as f64;
            if (fraction - gait.duty_cycle).abs() > dt / gait.period + 1e-9 {
                return Err(format!(
                    "{name} leg {leg}: stance fraction {fraction} vs duty {}",
                    gait.duty_cycle
                ));
            }
        }
        let rows = gait_diagram(&gait);
        let parsed = export::parse_diagram_csv(&export::diagram_to_csv_string(&rows))
            .map_err(|e| e.to_string())?;
        let derived = rederive_gait(&parsed).map_err(|e| e.to_string())?;
        for leg in 1..LEG_COUNT {
            if derived.offsets[leg] != gait.phase_offsets[leg - 1] {
                return Err(format!("{name}: offset {leg} did not round-trip exactly"));
            }
        }
        if (derived.duty_cycle - gait.duty_cycle).abs() > 1e-12 {
            return Err(format!("{name}: duty cycle did not round-trip"));
        }
    }
    Ok(())
}

fn reward_identities(config: &ToolConfig) -> std::result::Result<(), String> {
    let reward = config.reward_config();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x = rng.gen_range(-2.0..2.0);
        let sigma = rng.gen_range(0.01..2.0);
        let r = reward_term_scalar(x, x, sigma).map_err(|e| e.to_string())?;
        if r != 1.0 {
            return Err(format!("zero error mapped to {r}"));
        }
    }
    let e_inv = (-1.0_f64).exp();
    let mut unit_checks = vec![
        reward.base_height,
        reward.yaw_rate,
        reward.action_rate,
        reward.feet_slip,
        reward.pitch_roll,
    ];
    unit_checks.extend_from_slice(&reward.base_velocity);
    unit_checks.extend_from_slice(&reward.feet_position);
    for sigma in unit_checks {
        let r = reward_term_scalar(sigma, 0.0, sigma).map_err(|e| e.to_string())?;
        if (r - e_inv).abs() > 1e-12 {
            return Err(format!("one-unit error mapped to {r} (sigma {sigma})"));
        }
    }
    Ok(())
}

fn sampler_ranges(config: &ToolConfig) -> std::result::Result<(), String> {
    let randomization = config.randomization_config();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let max_angle = randomization.gravity_cone_half_angle;
    for _ in 0..10_000 {
        let draw = sample_randomization(&randomization, &mut rng);
        for axis in 0..3 {
            if draw.linear_impulse[axis].abs() > randomization.linear_impulse {
                return Err("linear impulse out of range".into());
            }
            if draw.angular_impulse[axis].abs() > randomization.angular_impulse {
                return Err("angular impulse out of range".into());
            }
        }
        if draw.friction < randomization.friction[0] || draw.friction > randomization.friction[1] {
            return Err("friction out of range".into());
        }
        let angle = (-draw.gravity_direction.z).acos();
        if angle > max_angle + 1e-12 {
            return Err(format!("gravity cone angle {angle} exceeds {max_angle}"));
        }
    }
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..32 {
        if sample_randomization(&randomization, &mut a)
            != sample_randomization(&randomization, &mut b)
        {
            return Err("seeded draws diverged".into());
        }
    }
    Ok(())
}

fn cop_feasibility() -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let n = rng.gen_range(1..=4usize);
        let footholds: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.0))
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let support = SupportSet::new(footholds.clone());
        let cop = compute_cop(&support, &weights).map_err(|e| e.to_string())?;
        if !in_convex_hull_xy(&cop, &footholds, 1e-7) {
            return Err("weighted point escaped the support hull".into());
        }
    }
    Ok(())
}

fn equilibrium_solve(config: &ToolConfig) -> std::result::Result<(), String> {
    let gait = config.gait("trot").map_err(|e| e.to_string())?;
    let synthesis = config.synthesis_config();
    let state = GeneratorState::standing(config.targets.base_height, &config.hip_offsets());
    let problem = build_problem(
        &state,
        &VelocityCommand::zero(),
        &gait,
        2.0 * gait.period,
        &synthesis,
    )
    .map_err(|e| e.to_string())?;
    let solution = solve_ocp(&problem, &synthesis.weights, &synthesis.solver, None)
        .map_err(|e| e.to_string())?;
    if !solution.report.converged {
        return Err("equilibrium solve did not converge".into());
    }
    if solution.report.final_cost > 1e-6 {
        return Err(format!(
            "equilibrium cost {:.3e} above 1e-6",
            solution.report.final_cost
        ));
    }
    Ok(())
}

pub fn run(common: &CommonArgs) -> Result<usize> {
    let config = load(common)?;
    let mut suite = Suite { failures: 0 };
    suite.record(
        "config-validation",
        config.validate().map_err(|e| e.to_string()),
    );
    suite.record("gait-conformance", gait_conformance(&config));
    suite.record("reward-identities", reward_identities(&config));
    suite.record("sampler-ranges", sampler_ranges(&config));
    suite.record("cop-feasibility", cop_feasibility());
    suite.record("equilibrium-solve", equilibrium_solve(&config));
    Ok(suite.failures)
}
