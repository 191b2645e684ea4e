//! Fixtures shared by the criterion benches.

use compositeflow::problems::{build_operator, generate_data, least_squares_problem, OperatorKind};
use compositeflow::{CompositeProblem, Penalty};

/// Least-squares plus MCP on a random surjective operator.
pub fn mcp_instance(n: usize, m: usize, components: usize) -> CompositeProblem {
    let (design, targets) = generate_data(n, components, 0.1, 17);
    let a = build_operator(
        &OperatorKind::Gaussian {
            sigma_min: 0.5,
            sigma_max: 1.5,
        },
        m,
        n,
        23,
    )
    .expect("operator");
    least_squares_problem(design, targets, Penalty::Mcp { weight: 0.2, gamma: 3.0 }, a, 0.05).expect("problem")
}
