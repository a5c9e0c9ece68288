use crate::model::DerivativeBundle;

/// Largest gradient entry tolerated before scaling kicks in.
pub const GRADIENT_TARGET: f64 = 100.0;

/// Multiplicative factors applied to the objective and constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub objective: f64,
    pub state_rows: Vec<f64>,
    pub ineq_rows: Vec<f64>,
}

impl Scaling {
    pub fn identity(n_state: usize, n_ineq: usize) -> Self {
        Self { objective: 1.0, state_rows: vec![1.0; n_state], ineq_rows: vec![1.0; n_ineq] }
    }

    /// Appends unit factors for `extra` inequality rows.
    pub fn with_extra_rows(mut self, extra: usize) -> Self {
        self.ineq_rows.extend(std::iter::repeat(1.0).take(extra));
        self
    }
}

fn factor(norm: f64) -> f64 {
    if norm > GRADIENT_TARGET {
        GRADIENT_TARGET / norm
    } else {
        1.0
    }
}

/// Gradient-based scaling: `min(1, 100 / ‖∇‖∞)` for the objective and for
/// every row of `g` and `c`.
pub fn compute_scaling(bundle: &DerivativeBundle) -> Scaling {
    let grad_norm = bundle.grad_u.iter().chain(&bundle.grad_x).fold(0.0_f64, |m, v| m.max(v.abs()));
    let rows = |a: &crate::sparse::CsrMatrix, b: &crate::sparse::CsrMatrix| -> Vec<f64> {
        (0..a.nrows()).map(|i| factor(a.row_max_abs(i).max(b.row_max_abs(i)))).collect()
    };
    Scaling {
        objective: factor(grad_norm),
        state_rows: rows(&bundle.state_jac_u, &bundle.state_jac_x),
        ineq_rows: rows(&bundle.ineq_jac_u, &bundle.ineq_jac_x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_rule() {
        assert_eq!(factor(50.0), 1.0);
        assert_eq!(factor(1e4), 1e-2);
        assert_eq!(factor(0.0), 1.0);
    }
}
