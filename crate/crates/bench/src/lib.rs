//! Shared fixtures for the kernel benchmarks.

use resilient_core::dos::{gen_random_budgeted, DosBudget};
use resilient_core::{InputMode, LogicKind, LtiPlant, RealMatrix, SimConfig, TriggerConfig, Varphi, Vector};

/// Tridiagonal `n×n` matrix with a stable diagonal, full input and a
/// diagonal gain.
pub fn chain_plant(n: usize) -> LtiPlant {
    let a = RealMatrix::from_rows(
        &(0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match i as isize - j as isize {
                        0 => 0.2,
                        1 => -0.5,
                        -1 => 1.0,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect::<Vec<_>>(),
    )
    .expect("square rows");
    let k = RealMatrix::diag(&vec![-1.5; n]).expect("nonempty");
    LtiPlant::new(a, RealMatrix::identity(n), k, InputMode::HoldLast).expect("consistent plant")
}

/// Twenty-unit event-time run of [`chain_plant`] under random budgeted DoS.
pub fn sim_fixture(n: usize) -> SimConfig {
    let plant = chain_plant(n);
    let sigma = 0.1;
    let delta2 = resilient_core::trigger::plant_delta2(&plant, sigma).expect("hurwitz");
    let delta1 = delta2 / 2.0;
    let budget = DosBudget::new(0.5, 8.0).expect("valid budget");
    let dos = gen_random_budgeted(&budget, 0.2, 1, 20.0).expect("feasible budget");
    SimConfig {
        plant,
        logic: LogicKind::EventTime,
        trigger: TriggerConfig::new(sigma, delta1, delta2, Varphi::default()).expect("valid trigger"),
        dos,
        budget,
        x0: Vector::from_element(n, 1.0),
        horizon: 20.0,
        record_step: delta1 / 4.0,
        crossing_tol: 1e-9,
    }
}
