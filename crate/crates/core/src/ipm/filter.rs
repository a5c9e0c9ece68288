/// Constants of the filter line search.
#[derive(Debug, Clone, Copy)]
pub struct FilterParams {
    pub gamma_theta: f64,
    pub gamma_phi: f64,
    pub s_theta: f64,
    pub s_phi: f64,
    pub eta: f64,
    pub delta: f64,
    pub alpha_min: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { gamma_theta: 1e-5, gamma_phi: 1e-5, s_theta: 1.1, s_phi: 2.3, eta: 1e-4, delta: 1.0, alpha_min: 1e-12 }
    }
}

/// How a trial point was accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    /// Sufficient decrease of the barrier objective (f-type step).
    Armijo,
    /// Sufficient reduction of infeasibility or barrier objective.
    Filter,
}

/// Set of forbidden `(θ, φ)` corners.
#[derive(Debug, Clone)]
pub struct Filter {
    entries: Vec<(f64, f64)>,
    theta_max: f64,
    theta_min: f64,
    params: FilterParams,
}

impl Filter {
    /// `theta0` is the constraint violation at the starting point.
    pub fn new(theta0: f64, params: FilterParams) -> Self {
        let base = theta0.max(1.0);
        Self { entries: Vec::new(), theta_max: 1e4 * base, theta_min: 1e-4 * base, params }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn dominated(&self, theta: f64, phi: f64) -> bool {
        self.entries.iter().any(|&(t, p)| theta >= t && phi >= p)
    }

    /// True when the step qualifies as an f-type step at length `alpha`.
    pub fn switching(&self, theta: f64, slope: f64, alpha: f64) -> bool {
        let p = &self.params;
        slope < 0.0 && theta <= self.theta_min && alpha * (-slope).powf(p.s_phi) > p.delta * theta.powf(p.s_theta)
    }

    /// Acceptance test of a trial `(θ_t, φ_t)` from the current `(θ, φ)`
    /// with directional derivative `slope` of the barrier objective.
    pub fn accepts(
        &self,
        theta: f64,
        phi: f64,
        slope: f64,
        alpha: f64,
        theta_t: f64,
        phi_t: f64,
    ) -> Option<Acceptance> {
        if !theta_t.is_finite() || !phi_t.is_finite() || theta_t > self.theta_max {
            return None;
        }
        if self.dominated(theta_t, phi_t) {
            return None;
        }
        let p = &self.params;
        if self.switching(theta, slope, alpha) {
            let tol = 10.0 * f64::EPSILON * phi.abs();
            return (phi_t <= phi + p.eta * alpha * slope + tol).then_some(Acceptance::Armijo);
        }
        let ok = theta_t <= (1.0 - p.gamma_theta) * theta || phi_t <= phi - p.gamma_phi * theta;
        ok.then_some(Acceptance::Filter)
    }

    /// Adds the corner generated by the current point after a filter step.
    pub fn augment(&mut self, theta: f64, phi: f64) {
        let p = &self.params;
        let corner = ((1.0 - p.gamma_theta) * theta, phi - p.gamma_phi * theta);
        self.entries.retain(|&(t, f)| !(t >= corner.0 && f >= corner.1));
        self.entries.push(corner);
    }
}
