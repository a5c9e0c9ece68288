/// Relative push-off of the starting point from its bounds.
pub const PUSH_OFF: f64 = 1e-2;
/// Bounds on the initial bound multipliers.
pub const MULTIPLIER_RANGE: (f64, f64) = (1e-6, 1e6);
/// Safeguard keeping `z (w − l)` within a factor of `μ`.
pub const KAPPA_SIGMA: f64 = 1e10;

/// Lower and upper bounds on the stacked primal vector `(u, x, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Number of finite bounds, lower and upper counted separately.
    pub fn n_finite(&self) -> usize {
        self.lower.iter().chain(&self.upper).filter(|b| b.is_finite()).count()
    }

    /// Moves `v` strictly inside its bounds.
    pub fn push_inside(&self, v: &mut [f64]) {
        for ((vi, &l), &u) in v.iter_mut().zip(&self.lower).zip(&self.upper) {
            *vi = push_inside(*vi, l, u);
        }
    }

    /// Primal-dual diagonal `Σ = z_l / (w − l) + z_u / (u − w)`.
    pub fn sigma(&self, v: &[f64], zl: &[f64], zu: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let mut s = 0.0;
                if self.lower[i].is_finite() {
                    s += zl[i] / (v[i] - self.lower[i]);
                }
                if self.upper[i].is_finite() {
                    s += zu[i] / (self.upper[i] - v[i]);
                }
                s
            })
            .collect()
    }

    /// Gradient of `−μ Σ ln(w − l) − μ Σ ln(u − w)`.
    pub fn barrier_gradient(&self, v: &[f64], mu: f64) -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let mut g = 0.0;
                if self.lower[i].is_finite() {
                    g -= mu / (v[i] - self.lower[i]);
                }
                if self.upper[i].is_finite() {
                    g += mu / (self.upper[i] - v[i]);
                }
                g
            })
            .collect()
    }

    /// `−μ Σ ln(w − l) − μ Σ ln(u − w)`, infinite outside the bounds.
    pub fn barrier(&self, v: &[f64], mu: f64) -> f64 {
        let mut sum = 0.0;
        for i in 0..v.len() {
            for d in [v[i] - self.lower[i], self.upper[i] - v[i]] {
                if d.is_finite() {
                    if d <= 0.0 {
                        return f64::INFINITY;
                    }
                    sum -= mu * d.ln();
                }
            }
        }
        sum
    }

    /// Initial bound multipliers `μ / distance`, clipped to
    /// [`MULTIPLIER_RANGE`]; zero where there is no bound.
    pub fn initial_multipliers(&self, v: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let init = |d: f64| if d.is_finite() { (mu / d).clamp(MULTIPLIER_RANGE.0, MULTIPLIER_RANGE.1) } else { 0.0 };
        let zl = v.iter().zip(&self.lower).map(|(v, l)| init(v - l)).collect();
        let zu = v.iter().zip(&self.upper).map(|(v, u)| init(u - v)).collect();
        (zl, zu)
    }

    /// Newton steps of the bound multipliers for a primal step `dv`:
    /// `dz_l = μ/(w−l) − z_l − Σ_l dw` and `dz_u = μ/(u−w) − z_u + Σ_u dw`.
    pub fn multiplier_step(&self, v: &[f64], dv: &[f64], zl: &[f64], zu: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let n = v.len();
        let mut dzl = vec![0.0; n];
        let mut dzu = vec![0.0; n];
        for i in 0..n {
            if self.lower[i].is_finite() {
                let d = v[i] - self.lower[i];
                dzl[i] = mu / d - zl[i] - zl[i] / d * dv[i];
            }
            if self.upper[i].is_finite() {
                let d = self.upper[i] - v[i];
                dzu[i] = mu / d - zu[i] + zu[i] / d * dv[i];
            }
        }
        (dzl, dzu)
    }

    /// Largest `α ≤ 1` with `w + α dw` no closer to each bound than a
    /// fraction `1 − τ` of the current distance.
    pub fn max_step(&self, v: &[f64], dv: &[f64], tau: f64) -> f64 {
        let mut alpha = 1.0_f64;
        for i in 0..v.len() {
            if dv[i] < 0.0 && self.lower[i].is_finite() {
                alpha = alpha.min(-tau * (v[i] - self.lower[i]) / dv[i]);
            }
            if dv[i] > 0.0 && self.upper[i].is_finite() {
                alpha = alpha.min(tau * (self.upper[i] - v[i]) / dv[i]);
            }
        }
        alpha
    }

    /// Projects the multipliers onto `[μ/(κ d), κ μ/d]` after a step.
    pub fn safeguard(&self, v: &[f64], zl: &mut [f64], zu: &mut [f64], mu: f64) {
        for i in 0..v.len() {
            if self.lower[i].is_finite() {
                let d = v[i] - self.lower[i];
                zl[i] = zl[i].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
            if self.upper[i].is_finite() {
                let d = self.upper[i] - v[i];
                zu[i] = zu[i].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
        }
    }

    /// `‖((w − l) z_l − μ, (u − w) z_u − μ)‖∞` over finite bounds.
    pub fn complementarity(&self, v: &[f64], zl: &[f64], zu: &[f64], mu: f64) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..v.len() {
            if self.lower[i].is_finite() {
                worst = worst.max(((v[i] - self.lower[i]) * zl[i] - mu).abs());
            }
            if self.upper[i].is_finite() {
                worst = worst.max(((self.upper[i] - v[i]) * zu[i] - mu).abs());
            }
        }
        worst
    }

    pub fn strictly_interior(&self, v: &[f64]) -> bool {
        v.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| v > l && v < u)
    }
}

/// Moves `v` inside `[l, u]` by `min(κ max(1, |b|), κ (u − l))`.
pub fn push_inside(v: f64, l: f64, u: f64) -> f64 {
    let width = u - l;
    let mut out = v;
    if l.is_finite() {
        let mut p = PUSH_OFF * l.abs().max(1.0);
        if width.is_finite() {
            p = p.min(PUSH_OFF * width);
        }
        out = out.max(l + p);
    }
    if u.is_finite() {
        let mut p = PUSH_OFF * u.abs().max(1.0);
        if width.is_finite() {
            p = p.min(PUSH_OFF * width);
        }
        out = out.min(u - p);
    }
    out
}

/// Fraction-to-boundary parameter `τ = max(0.99, 1 − μ)`.
pub fn fraction_to_boundary(mu: f64) -> f64 {
    (1.0 - mu).max(0.99)
}

/// Monotone barrier decrease `max(tol/10, min(κ μ, μ^θ))` with
/// `κ = 0.2`, `θ = 1.5`.
pub fn barrier_update(mu: f64, tol: f64) -> f64 {
    (tol / 10.0).max((0.2 * mu).min(mu.powf(1.5)))
}

/// Primal-dual iterate of the interior-point method.
#[derive(Debug, Clone, PartialEq)]
pub struct IpmState {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    /// Multipliers of `g`; recomputed from the adjoint equation by the
    /// feasible-path solver.
    pub lambda: Vec<f64>,
    /// Multipliers of `c − s = 0`.
    pub y: Vec<f64>,
    /// Multipliers of the lower and upper bounds on `(u, x, s)`.
    pub zl: Vec<f64>,
    pub zu: Vec<f64>,
    pub mu: f64,
    pub iteration: usize,
    pub last_delta: f64,
}

impl IpmState {
    /// Builds the starting iterate: primal pushed inside the bounds, slacks
    /// at the pushed constraint values, `λ = y = 0` and bound multipliers
    /// `μ₀ / distance`.
    pub fn initialize(u: Vec<f64>, x: Vec<f64>, c: &[f64], bounds: &Bounds, mu0: f64) -> Self {
        let mut v: Vec<f64> = u.iter().chain(&x).chain(c).copied().collect();
        bounds.push_inside(&mut v);
        let (zl, zu) = bounds.initial_multipliers(&v, mu0);
        let (n_u, n_x) = (u.len(), x.len());
        Self {
            u: v[..n_u].to_vec(),
            x: v[n_u..n_u + n_x].to_vec(),
            s: v[n_u + n_x..].to_vec(),
            lambda: vec![0.0; n_x],
            y: vec![0.0; c.len()],
            zl,
            zu,
            mu: mu0,
            iteration: 0,
            last_delta: 0.0,
        }
    }

    /// Stacked primal vector `(u, x, s)`.
    pub fn primal(&self) -> Vec<f64> {
        self.u.iter().chain(&self.x).chain(&self.s).copied().collect()
    }

    pub fn set_primal(&mut self, v: &[f64]) {
        let (n_u, n_x) = (self.u.len(), self.x.len());
        self.u.copy_from_slice(&v[..n_u]);
        self.x.copy_from_slice(&v[n_u..n_u + n_x]);
        self.s.copy_from_slice(&v[n_u + n_x..]);
    }
}
