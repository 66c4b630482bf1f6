//! Dense reference solver shared by the integration tests.

use nalgebra::{DMatrix, DVector};

use partseg::{BoundaryValues, ScalarField};

/// Dense solve of `Δ_h u - c u = f` with Dirichlet data, interior unknowns only.
pub fn dense_screened(c: &ScalarField, f: &ScalarField, data: &BoundaryValues) -> ScalarField {
    let g = *data.grid();
    let interior = g.interior_nodes();
    let mut slot = vec![usize::MAX; g.len()];
    for (s, &k) in interior.iter().enumerate() {
        slot[k] = s;
    }
    let bc = data.to_field();
    let (wx, wy) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let m = interior.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (row, &k) in interior.iter().enumerate() {
        a[(row, row)] = -2.0 * wx - 2.0 * wy - c[k];
        rhs[row] = f[k];
        for (nb, w) in [(k - 1, wx), (k + 1, wx), (k - g.nx(), wy), (k + g.nx(), wy)] {
            if slot[nb] == usize::MAX {
                rhs[row] -= w * bc[nb];
            } else {
                a[(row, slot[nb])] = w;
            }
        }
    }
    let x = a.lu().solve(&rhs).expect("nonsingular stencil matrix");
    let mut u = bc;
    for (row, &k) in interior.iter().enumerate() {
        u[k] = x[row];
    }
    u
}
