//! Reference systems used by tests, the acceptance suite and the CLI docs.

use crate::linalg::RMat;
use crate::sysmodel::{Atom, DelayKernel, NeutralSystem};

pub fn point_system(h: f64, a_minus1: RMat, a0: RMat, b: RMat) -> NeutralSystem {
    let n = a_minus1.nrows();
    NeutralSystem::new(
        h,
        a_minus1,
        DelayKernel::zero(n, h),
        DelayKernel::atoms_only(
            n,
            h,
            vec![Atom {
                theta: 0.0,
                matrix: a0,
            }],
        ),
        b,
    )
    .expect("fixture is valid")
}

/// `ẋ(t) = A_{-1} ẋ(t-1) + diag(α, β) x(t)` with a Jordan block in `A_{-1}`.
pub fn example1(alpha: f64, beta: f64) -> NeutralSystem {
    point_system(
        1.0,
        RMat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        RMat::from_row_slice(2, 2, &[alpha, 0.0, 0.0, beta]),
        RMat::zeros(2, 0),
    )
}

/// [`example1`] with an input matrix.
pub fn example1_with_input(alpha: f64, beta: f64, b: &[f64]) -> NeutralSystem {
    example1(alpha, beta)
        .with_input(RMat::from_column_slice(2, b.len() / 2, b))
        .expect("fixture is valid")
}

/// `ż(t) + ż(t-1) = A_0 z(t)`, `A_0 = [[-1, γ], [0, -1]]`: same spectrum for
/// every γ, stable only for γ = 0.
pub fn example2(gamma: f64) -> NeutralSystem {
    point_system(
        1.0,
        RMat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
        RMat::from_row_slice(2, 2, &[-1.0, gamma, 0.0, -1.0]),
        RMat::zeros(2, 0),
    )
}

/// Scalar retarded system `ż = -z`.
pub fn scalar_decay() -> NeutralSystem {
    point_system(
        1.0,
        RMat::zeros(1, 1),
        RMat::from_element(1, 1, -1.0),
        RMat::from_element(1, 1, 1.0),
    )
}

/// `A_{-1}` a rotation by π/2 (eigenvalues ±i, simple) and `A_0 = -I`.
pub fn rotation_fixture() -> NeutralSystem {
    point_system(
        1.0,
        RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        RMat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
        RMat::zeros(2, 0),
    )
}

/// Single-input neutral pair with `A_{-1} = diag(1/2, 1/3)`, Kalman rank 2.
pub fn reach_fixture() -> NeutralSystem {
    point_system(
        1.0,
        RMat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0 / 3.0]),
        RMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        RMat::from_column_slice(2, 1, &[0.0, 1.0]),
    )
}

/// A system exercising both distributed kernels on a non-unit delay.
pub fn distributed_fixture() -> NeutralSystem {
    let h = 1.5;
    let a2 = DelayKernel::new(
        2,
        h,
        vec![-h, -0.5, 0.0],
        vec![
            RMat::from_row_slice(2, 2, &[0.1, 0.0, 0.05, -0.2]),
            RMat::from_row_slice(2, 2, &[0.0, 0.3, -0.1, 0.0]),
        ],
        vec![],
    )
    .expect("valid kernel");
    let a3 = DelayKernel::new(
        2,
        h,
        vec![-h, -1.0, -0.25, 0.0],
        vec![
            RMat::from_row_slice(2, 2, &[-0.4, 0.2, 0.0, 0.1]),
            RMat::from_row_slice(2, 2, &[0.3, 0.0, -0.6, 0.2]),
            RMat::from_row_slice(2, 2, &[0.0, -0.5, 0.4, -0.3]),
        ],
        vec![
            Atom {
                theta: 0.0,
                matrix: RMat::from_row_slice(2, 2, &[-2.0, 0.5, 0.0, -1.5]),
            },
            Atom {
                theta: -0.7,
                matrix: RMat::from_row_slice(2, 2, &[0.2, 0.0, 0.1, -0.3]),
            },
        ],
    )
    .expect("valid kernel");
    NeutralSystem::new(
        h,
        RMat::from_row_slice(2, 2, &[0.3, 0.2, -0.1, 0.4]),
        a2,
        a3,
        RMat::from_column_slice(2, 1, &[1.0, 0.5]),
    )
    .expect("fixture is valid")
}

/// Single-input chain: `A_{-1}` the upper shift, `A_0 = -I`, `B = e_n`.
/// Kalman rank `n` and `det Δ` vanishes only at `λ = -1`.
pub fn shift_chain(n: usize) -> NeutralSystem {
    let shift = RMat::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let b = RMat::from_fn(n, 1, |i, _| if i + 1 == n { 1.0 } else { 0.0 });
    point_system(1.0, shift, -RMat::identity(n, n), b)
}
