//! Market model definitions: the reduced planar system, the full
//! price/demand/supply system, the conserved energy of the unforced limit,
//! fixed points, and the exact saddle-to-saddle connecting orbits.
//!
//! Reduced system in the deviation variables `p` (price above the demand
//! threshold) and `q` (excess demand):
//!
//! ```text
//! dp/dt = alpha * q
//! dq/dt = -beta * p * (1 - beta1 * p^2) - gamma * p - delta * q + a * sin(omega1 * t)
//! ```
//!
//! With `delta = a = 0` the system is Hamiltonian with energy
//! `H = alpha q^2 / 2 + (beta + gamma) p^2 / 2 - beta beta1 p^4 / 4`.

use crate::error::{Error, Result};

/// Coefficients of the reduced planar system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Price response rate to excess demand (> 0).
    pub alpha: f64,
    /// Demand response rate to price deviation (> 0).
    pub beta: f64,
    /// Cubic collectability/saturation coefficient (> 0).
    pub beta1: f64,
    /// Supply response rate to price deviation (> 0).
    pub gamma: f64,
    /// Supply response rate to excess demand; acts as damping (>= 0).
    pub delta: f64,
    /// Forcing amplitude.
    pub a: f64,
    /// Forcing angular frequency (> 0).
    pub omega1: f64,
}

fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            requirement: "strictly positive and finite",
            value,
        });
    }
    Ok(())
}

fn require_finite(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            requirement: "finite",
            value,
        });
    }
    Ok(())
}

impl ModelParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        beta1: f64,
        gamma: f64,
        delta: f64,
        a: f64,
        omega1: f64,
    ) -> Result<Self> {
        require_positive("alpha", alpha)?;
        require_positive("beta", beta)?;
        require_positive("beta1", beta1)?;
        require_positive("gamma", gamma)?;
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "delta",
                requirement: "non-negative and finite",
                value: delta,
            });
        }
        require_finite("a", a)?;
        require_positive("omega1", omega1)?;
        Ok(Self {
            alpha,
            beta,
            beta1,
            gamma,
            delta,
            a,
            omega1,
        })
    }

    /// Baseline coefficient set used throughout the tool:
    /// `alpha = beta = gamma = 1`, `beta1 = 0.25`, `omega1 = pi`,
    /// with damping and forcing chosen per run.
    pub fn baseline(delta: f64, a: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 0.25, 1.0, delta, a, std::f64::consts::PI)
    }

    /// `delta = 0` and `a = 0`: the conservative, integrable regime.
    pub fn is_integrable(&self) -> bool {
        self.delta == 0.0 && self.a == 0.0
    }

    /// Forcing period `T = 2 pi / omega1`.
    pub fn forcing_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega1
    }

    /// Unchecked right-hand side of the reduced system. The integrator hot
    /// path calls this directly; use [`vector_field`] for validated input.
    #[inline]
    pub fn rhs(&self, t: f64, x: State2) -> State2 {
        let State2 { p, q } = x;
        State2 {
            p: self.alpha * q,
            q: -self.beta * p * (1.0 - self.beta1 * p * p) - self.gamma * p - self.delta * q
                + self.a * (self.omega1 * t).sin(),
        }
    }
}

/// A point of the reduced phase plane: price deviation `p`, excess demand `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State2 {
    pub p: f64,
    pub q: f64,
}

impl State2 {
    pub const fn new(p: f64, q: f64) -> Self {
        Self { p, q }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.q.is_finite()
    }

    /// Whether the underlying price `P = p + p_d` is non-negative.
    /// Escaping trajectories may leave the admissible range; this is a
    /// report, not a constraint on the dynamics.
    pub fn price_admissible(&self, p_d: f64) -> bool {
        self.p >= -p_d
    }

    pub fn distance(&self, other: State2) -> f64 {
        (self.p - other.p).hypot(self.q - other.q)
    }
}

impl std::ops::Neg for State2 {
    type Output = State2;
    fn neg(self) -> State2 {
        State2::new(-self.p, -self.q)
    }
}

/// Time-stamped sequence of planar states with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<State2>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<State2>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidOptions(format!(
                "trajectory length mismatch: {} times vs {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidOptions(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[State2] {
        &self.states
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, State2)> + '_ {
        self.times.iter().copied().zip(self.states.iter().copied())
    }
}

/// Coefficients of the full three-variable price/demand/supply model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub alpha: f64,
    pub beta: f64,
    pub beta1: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Demand threshold price (> 0).
    pub p_d: f64,
    /// Supply threshold price (> 0).
    pub p_s: f64,
    /// Demand forcing amplitude: `F_d(t) = a sin(omega1 t)`.
    pub a: f64,
    pub omega1: f64,
    /// Constant supply term in `F_s(t) = c + b sin(omega2 t)`.
    pub c: f64,
    /// Supply forcing amplitude.
    pub b: f64,
    /// Supply forcing angular frequency.
    pub omega2: f64,
}

impl MarketParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        beta: f64,
        beta1: f64,
        gamma: f64,
        delta: f64,
        p_d: f64,
        p_s: f64,
        a: f64,
        omega1: f64,
        c: f64,
        b: f64,
        omega2: f64,
    ) -> Result<Self> {
        // Reuse the planar validation for the shared coefficients.
        ModelParams::new(alpha, beta, beta1, gamma, delta, a, omega1)?;
        require_positive("p_d", p_d)?;
        require_positive("p_s", p_s)?;
        require_finite("c", c)?;
        require_finite("b", b)?;
        if !(omega2 >= 0.0) || !omega2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "omega2",
                requirement: "non-negative and finite",
                value: omega2,
            });
        }
        // Saturation: demand growth must already stall at price zero.
        let sat = beta1 * p_d * p_d;
        if !(sat > 1.0) {
            return Err(Error::SaturationCondition(sat));
        }
        Ok(Self {
            alpha,
            beta,
            beta1,
            gamma,
            delta,
            p_d,
            p_s,
            a,
            omega1,
            c,
            b,
            omega2,
        })
    }

    /// Unchecked right-hand side of the full model.
    #[inline]
    pub fn rhs(&self, t: f64, x: MarketState) -> MarketState {
        let dp = self.p_d - x.price;
        MarketState {
            price: self.alpha * (x.demand - x.supply),
            demand: self.beta * dp * (1.0 - self.beta1 * dp * dp)
                + self.a * (self.omega1 * t).sin(),
            supply: -self.gamma * (self.p_s - x.price)
                + self.delta * (x.demand - x.supply)
                + self.c
                + self.b * (self.omega2 * t).sin(),
        }
    }
}

/// State of the full model: average price, total demand, total supply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub price: f64,
    pub demand: f64,
    pub supply: f64,
}

impl MarketState {
    pub const fn new(price: f64, demand: f64, supply: f64) -> Self {
        Self {
            price,
            demand,
            supply,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.price.is_finite() && self.demand.is_finite() && self.supply.is_finite()
    }

    /// Prices below zero have no market meaning; escaping trajectories may
    /// still reach them.
    pub fn is_physical(&self) -> bool {
        self.price >= 0.0
    }

    /// Deviation coordinates `(p, q) = (P - p_d, D - S)`.
    pub fn deviation(&self, p_d: f64) -> State2 {
        State2::new(self.price - p_d, self.demand - self.supply)
    }
}

/// An eigenvalue stored as an explicit (re, im) pair; the two closed-form
/// pairs of this model never need a general solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

/// The three equilibria of the unforced, undamped system with their
/// linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    /// Market equilibrium at the origin; a neutrally stable center.
    pub equilibrium: State2,
    /// Saddle at negative price deviation.
    pub saturation: State2,
    /// Saddle at positive price deviation.
    pub collectability: State2,
    /// Pure imaginary pair `+/- i sqrt(alpha (beta + gamma))` at the center.
    pub center_eigenvalues: [Eigenvalue; 2],
    /// Real pair `+/- sqrt(2 alpha (beta + gamma))` at either saddle.
    pub saddle_eigenvalues: [Eigenvalue; 2],
    /// Whether both saddles sit at positive underlying price, i.e.
    /// `(beta + gamma) / beta < beta1 * p_d^2`. `None` when no demand
    /// threshold was supplied.
    pub saddles_at_positive_price: Option<bool>,
}

/// Which of the two saddle connections of the unforced system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `q > 0`: runs from the saturation saddle to the collectability saddle.
    Upper,
    /// The mirror image `(-p, -q)`.
    Lower,
}

/// Closed form of a saddle connection: `p = A tanh(Omega t + t0)`,
/// `q = (A Omega / alpha) sech^2(Omega t + t0)` on the upper branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeteroclinicSpec {
    /// Orbit half-width `A = sqrt((beta + gamma) / (beta beta1))`.
    pub half_width: f64,
    /// Rate constant `Omega = sqrt(alpha (beta + gamma) / 2)`.
    pub rate: f64,
    /// Phase parameter.
    pub t0: f64,
    pub branch: Branch,
    alpha: f64,
}

impl HeteroclinicSpec {
    pub fn for_params(params: &ModelParams, t0: f64, branch: Branch) -> Self {
        let bg = params.beta + params.gamma;
        Self {
            half_width: (bg / (params.beta * params.beta1)).sqrt(),
            rate: (0.5 * params.alpha * bg).sqrt(),
            t0,
            branch,
            alpha: params.alpha,
        }
    }

    /// Evaluate the orbit at time `t`. Exact for `delta = a = 0`.
    pub fn at(&self, t: f64) -> State2 {
        let tau = self.rate * t + self.t0;
        let sech = 1.0 / tau.cosh();
        let upper = State2::new(
            self.half_width * tau.tanh(),
            self.half_width * self.rate / self.alpha * sech * sech,
        );
        match self.branch {
            Branch::Upper => upper,
            Branch::Lower => -upper,
        }
    }
}

/// Validated reduced vector field `(dp/dt, dq/dt)` at time `t`.
pub fn vector_field(params: &ModelParams, t: f64, x: State2) -> Result<State2> {
    if !x.is_finite() {
        return Err(Error::NonFiniteState(format!("({}, {})", x.p, x.q)));
    }
    Ok(params.rhs(t, x))
}

/// Energy of the unforced, undamped system. Conserved only when
/// `delta = a = 0`.
pub fn hamiltonian(params: &ModelParams, x: State2) -> f64 {
    0.5 * params.alpha * x.q * x.q + 0.5 * (params.beta + params.gamma) * x.p * x.p
        - 0.25 * params.beta * params.beta1 * x.p.powi(4)
}

/// The three equilibria of the integrable limit with closed-form eigenvalues.
/// `p_d`, when given, enables the positive-price check on the saddles.
pub fn fixed_points(params: &ModelParams, p_d: Option<f64>) -> FixedPointReport {
    let bg = params.beta + params.gamma;
    let a_half = (bg / (params.beta * params.beta1)).sqrt();
    let center = (params.alpha * bg).sqrt();
    let saddle = (2.0 * params.alpha * bg).sqrt();
    FixedPointReport {
        equilibrium: State2::new(0.0, 0.0),
        saturation: State2::new(-a_half, 0.0),
        collectability: State2::new(a_half, 0.0),
        center_eigenvalues: [
            Eigenvalue {
                re: 0.0,
                im: center,
            },
            Eigenvalue {
                re: 0.0,
                im: -center,
            },
        ],
        saddle_eigenvalues: [
            Eigenvalue {
                re: saddle,
                im: 0.0,
            },
            Eigenvalue {
                re: -saddle,
                im: 0.0,
            },
        ],
        saddles_at_positive_price: p_d.map(|pd| bg / params.beta < params.beta1 * pd * pd),
    }
}

/// Closed-form saddle connection evaluated at `t`; see [`HeteroclinicSpec`].
pub fn heteroclinic_orbit(params: &ModelParams, t0: f64, branch: Branch, t: f64) -> State2 {
    HeteroclinicSpec::for_params(params, t0, branch).at(t)
}

/// Validated full-model vector field `(dP/dt, dD/dt, dS/dt)` at time `t`.
pub fn market_vector_field(params: &MarketParams, t: f64, x: MarketState) -> Result<MarketState> {
    if !x.is_finite() {
        return Err(Error::NonFiniteState(format!(
            "({}, {}, {})",
            x.price, x.demand, x.supply
        )));
    }
    Ok(params.rhs(t, x))
}

/// Drop the full model to the planar deviation form. Requires the supply
/// forcing to vanish (`b = 0`) and the constant supply terms to cancel:
/// `c - gamma (p_s - p_d) = 0`.
pub fn reduce_to_planar(params: &MarketParams) -> Result<ModelParams> {
    if params.b != 0.0 {
        return Err(Error::Reduction(format!(
            "supply forcing amplitude b = {} must vanish",
            params.b
        )));
    }
    let residual = params.c - params.gamma * (params.p_s - params.p_d);
    let scale = 1.0_f64
        .max(params.c.abs())
        .max((params.gamma * (params.p_s - params.p_d)).abs());
    if residual.abs() > 1e-12 * scale {
        return Err(Error::Reduction(format!(
            "constant supply residual c - gamma (p_s - p_d) = {residual} must vanish"
        )));
    }
    ModelParams::new(
        params.alpha,
        params.beta,
        params.beta1,
        params.gamma,
        params.delta,
        params.a,
        params.omega1,
    )
}

/// Lift a reduced trajectory back to `(P, D, S)` samples. `P = p + p_d`
/// exactly, `D` integrates the demand equation by the trapezoid rule over
/// the trajectory's own samples, and `S = D - q` exactly.
pub fn reconstruct_market(
    traj: &Trajectory,
    params: &MarketParams,
    d0: f64,
) -> Result<Vec<MarketState>> {
    reduce_to_planar(params)?;
    if !d0.is_finite() {
        return Err(Error::InvalidParameter {
            name: "d0",
            requirement: "finite",
            value: d0,
        });
    }
    let demand_rate = |t: f64, s: &State2| {
        -params.beta * s.p * (1.0 - params.beta1 * s.p * s.p)
            + params.a * (params.omega1 * t).sin()
    };
    let mut out = Vec::with_capacity(traj.len());
    let mut demand = d0;
    let mut prev: Option<(f64, f64)> = None;
    for (t, s) in traj.iter() {
        let rate = demand_rate(t, &s);
        if let Some((t_prev, rate_prev)) = prev {
            demand += 0.5 * (t - t_prev) * (rate_prev + rate);
        }
        prev = Some((t, rate));
        out.push(MarketState::new(s.p + params.p_d, demand, demand - s.q));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn baseline(delta: f64, a: f64) -> ModelParams {
        ModelParams::baseline(delta, a).unwrap()
    }

    const A_SADDLE: f64 = 2.8284271247461903; // sqrt(8) for the baseline set

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 1.0, 0.25, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.25, 1.0, -0.1, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.25, 1.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.25, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(baseline(0.0, 0.0).is_integrable());
        assert!(!baseline(0.1, 0.0).is_integrable());
    }

    #[test]
    fn vector_field_at_equilibrium_and_saddle() {
        let p = baseline(0.0, 0.0);
        let at_origin = vector_field(&p, 0.0, State2::new(0.0, 0.0)).unwrap();
        assert_eq!(at_origin, State2::new(0.0, 0.0));

        // Saddle location quoted to 6 digits; the coordinate rounding of
        // 2.9e-6 is amplified by the local field slope of 4.
        let at_saddle = vector_field(&p, 3.7, State2::new(2.82843, 0.0)).unwrap();
        assert_abs_diff_eq!(at_saddle.p, 0.0, epsilon = 2e-5);
        assert_abs_diff_eq!(at_saddle.q, 0.0, epsilon = 2e-5);
    }

    #[test]
    fn vector_field_forcing_only() {
        let p = baseline(0.1, 2.6);
        let v = vector_field(&p, 0.5, State2::new(0.0, 0.0)).unwrap();
        assert_eq!(v.p, 0.0);
        assert_relative_eq!(v.q, 2.6, max_relative = 1e-15);
    }

    #[test]
    fn vector_field_rejects_non_finite() {
        let p = baseline(0.0, 0.0);
        assert!(vector_field(&p, 0.0, State2::new(f64::NAN, 0.0)).is_err());
        assert!(vector_field(&p, 0.0, State2::new(0.0, f64::INFINITY)).is_err());
    }

    #[test]
    fn hamiltonian_values() {
        let p = baseline(0.0, 0.0);
        assert_eq!(hamiltonian(&p, State2::new(0.0, 0.0)), 0.0);
        assert_relative_eq!(
            hamiltonian(&p, State2::new(A_SADDLE, 0.0)),
            4.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            hamiltonian(&p, State2::new(0.0, 1.0)),
            0.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn odd_symmetry_unforced() {
        let p = baseline(0.3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = State2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let t = rng.gen_range(0.0..10.0);
            let v = p.rhs(t, x);
            let w = p.rhs(t, -x);
            assert_relative_eq!(w.p, -v.p, max_relative = 1e-14);
            assert_relative_eq!(w.q, -v.q, max_relative = 1e-14);
        }
    }

    #[test]
    fn half_period_equivariance() {
        // f(t + T/2, -x) = -f(t, x): the forcing flips sign half a period on.
        let p = baseline(0.1, 2.6);
        let half = std::f64::consts::PI / p.omega1;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = State2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let t = rng.gen_range(0.0..10.0);
            let v = p.rhs(t, x);
            let w = p.rhs(t + half, -x);
            assert_abs_diff_eq!(w.p, -v.p, epsilon = 1e-12);
            assert_abs_diff_eq!(w.q, -v.q, epsilon = 1e-12);
        }
    }

    #[test]
    fn fixed_points_baseline() {
        let rep = fixed_points(&baseline(0.0, 0.0), None);
        assert_eq!(rep.equilibrium, State2::new(0.0, 0.0));
        assert_abs_diff_eq!(rep.collectability.p, 2.82843, epsilon = 1e-5);
        assert_abs_diff_eq!(rep.saturation.p, -2.82843, epsilon = 1e-5);
        assert_eq!(rep.saturation.q, 0.0);
        assert_eq!(rep.collectability.q, 0.0);
        assert_abs_diff_eq!(rep.center_eigenvalues[0].im, 1.41421, epsilon = 1e-5);
        assert_eq!(rep.center_eigenvalues[0].re, 0.0);
        assert_abs_diff_eq!(rep.saddle_eigenvalues[0].re, 2.0, epsilon = 1e-12);
        assert_eq!(rep.saddle_eigenvalues[0].im, 0.0);
        assert_eq!(rep.saddles_at_positive_price, None);
    }

    #[test]
    fn fixed_points_price_check() {
        let p = baseline(0.0, 0.0);
        // (beta+gamma)/beta = 2 vs beta1 * p_d^2 = 0.25 * 9 = 2.25
        assert_eq!(
            fixed_points(&p, Some(3.0)).saddles_at_positive_price,
            Some(true)
        );
        assert_eq!(
            fixed_points(&p, Some(2.0)).saddles_at_positive_price,
            Some(false)
        );
    }

    #[test]
    fn fixed_points_are_zeros_of_the_unforced_field() {
        let p = ModelParams::new(1.3, 0.8, 0.4, 1.7, 0.0, 0.0, 2.0).unwrap();
        let rep = fixed_points(&p, None);
        for x in [rep.equilibrium, rep.saturation, rep.collectability] {
            let v = p.rhs(0.0, x);
            assert!(v.p.hypot(v.q) < 1e-12, "residual at {x:?}: {v:?}");
        }
    }

    #[test]
    fn heteroclinic_endpoints_and_midpoint() {
        let p = baseline(0.0, 0.0);
        let far = heteroclinic_orbit(&p, 0.0, Branch::Upper, 50.0);
        assert_abs_diff_eq!(far.p, A_SADDLE, epsilon = 1e-10);
        assert_abs_diff_eq!(far.q, 0.0, epsilon = 1e-10);

        // A Omega / alpha = A here since Omega = 1
        let mid = heteroclinic_orbit(&p, 0.0, Branch::Upper, 0.0);
        assert_abs_diff_eq!(mid.p, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mid.q, A_SADDLE, epsilon = 1e-10);

        let low = heteroclinic_orbit(&p, 0.0, Branch::Lower, 0.0);
        assert_eq!(low.p, -mid.p);
        assert_eq!(low.q, -mid.q);
    }

    #[test]
    fn heteroclinic_satisfies_the_unforced_field() {
        // central-difference residual below 1e-8 across the connection
        let p = baseline(0.0, 0.0);
        let spec = HeteroclinicSpec::for_params(&p, 0.0, Branch::Upper);
        let h = 1e-5;
        let mut worst = 0.0_f64;
        for i in 0..1000 {
            let tau = -10.0 + 20.0 * (i as f64) / 999.0;
            let t = (tau - spec.t0) / spec.rate;
            let plus = spec.at(t + h);
            let minus = spec.at(t - h);
            let fd = State2::new((plus.p - minus.p) / (2.0 * h), (plus.q - minus.q) / (2.0 * h));
            let v = p.rhs(t, spec.at(t));
            worst = worst.max((fd.p - v.p).abs()).max((fd.q - v.q).abs());
        }
        assert!(worst < 1e-8, "max residual {worst:e}");
    }

    #[test]
    fn field_is_energy_gradient_when_integrable() {
        let p = ModelParams::new(1.4, 0.9, 0.3, 1.2, 0.0, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..100 {
            let x = State2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let dh_dq = (hamiltonian(&p, State2::new(x.p, x.q + h))
                - hamiltonian(&p, State2::new(x.p, x.q - h)))
                / (2.0 * h);
            let dh_dp = (hamiltonian(&p, State2::new(x.p + h, x.q))
                - hamiltonian(&p, State2::new(x.p - h, x.q)))
                / (2.0 * h);
            let v = p.rhs(0.0, x);
            assert!((v.p - dh_dq).abs() <= 1e-6 * dh_dq.abs().max(1.0));
            assert!((v.q + dh_dp).abs() <= 1e-6 * dh_dp.abs().max(1.0));
        }
    }

    #[test]
    fn market_params_saturation_condition() {
        // beta1 * p_d^2 = 0.25 * 4 = 1 is not > 1
        let err = MarketParams::new(
            1.0, 1.0, 0.25, 1.0, 0.1, 2.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0,
        );
        assert!(matches!(err, Err(Error::SaturationCondition(_))));
        assert!(MarketParams::new(
            1.0, 1.0, 0.25, 1.0, 0.1, 3.0, 3.0, 0.0, 1.0, 0.0, 0.0, 0.0
        )
        .is_ok());
    }

    fn market_baseline() -> MarketParams {
        MarketParams::new(
            1.0,
            1.0,
            0.25,
            1.0,
            0.1,
            3.0,
            3.0,
            2.6,
            std::f64::consts::PI,
            0.0,
            0.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn market_field_balanced_states() {
        let mut mp = market_baseline();
        mp.a = 0.0;
        mp.p_s = 4.0;
        // P = p_d, D = S: demand terms vanish, supply drifts by the constant
        let v = market_vector_field(&mp, 1.0, MarketState::new(3.0, 7.0, 7.0)).unwrap();
        assert_eq!(v.price, 0.0);
        assert_eq!(v.demand, 0.0);
        assert_relative_eq!(v.supply, -mp.gamma * (mp.p_s - mp.p_d), max_relative = 1e-15);

        // equal thresholds: a true equilibrium of the full model
        mp.p_s = 3.0;
        let v = market_vector_field(&mp, 1.0, MarketState::new(3.0, 7.0, 7.0)).unwrap();
        assert_eq!(
            (v.price, v.demand, v.supply),
            (0.0, 0.0, 0.0),
            "full-model equilibrium"
        );
    }

    #[test]
    fn market_field_matches_reduced_field() {
        let mp = market_baseline();
        let rp = reduce_to_planar(&mp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let x = MarketState::new(
                rng.gen_range(0.0..6.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            let t = rng.gen_range(0.0..10.0);
            let v3 = mp.rhs(t, x);
            let v2 = rp.rhs(t, x.deviation(mp.p_d));
            assert_abs_diff_eq!(v3.price, v2.p, epsilon = 1e-12);
            assert_abs_diff_eq!(v3.demand - v3.supply, v2.q, epsilon = 1e-12);
        }
    }

    #[test]
    fn reduction_rules() {
        let mp = market_baseline();
        let rp = reduce_to_planar(&mp).unwrap();
        assert_eq!(
            (rp.alpha, rp.beta, rp.beta1, rp.gamma, rp.delta, rp.a, rp.omega1),
            (mp.alpha, mp.beta, mp.beta1, mp.gamma, mp.delta, mp.a, mp.omega1)
        );

        let mut bad = mp;
        bad.c = 0.5;
        assert!(matches!(reduce_to_planar(&bad), Err(Error::Reduction(m)) if m.contains("0.5")));

        let mut shifted = mp;
        shifted.p_s = 4.0;
        shifted.c = 1.0; // cancels gamma * (p_s - p_d) exactly
        assert!(reduce_to_planar(&shifted).is_ok());

        let mut forced = mp;
        forced.b = 0.3;
        forced.omega2 = 1.0;
        assert!(matches!(reduce_to_planar(&forced), Err(Error::Reduction(_))));
    }

    #[test]
    fn reconstruct_constant_trajectory() {
        let mut mp = market_baseline();
        mp.a = 0.0;
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let states = vec![State2::new(0.0, 0.0); 50];
        let traj = Trajectory::new(times, states).unwrap();
        let market = reconstruct_market(&traj, &mp, 10.0).unwrap();
        for m in market {
            assert_eq!(m.price, mp.p_d);
            assert_eq!(m.demand, 10.0);
            assert_eq!(m.supply, 10.0);
        }
    }

    #[test]
    fn reconstruct_preserves_excess_demand() {
        let mp = market_baseline();
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
        let states: Vec<State2> = times
            .iter()
            .map(|&t| State2::new((1.3 * t).sin(), (0.7 * t).cos()))
            .collect();
        let traj = Trajectory::new(times, states).unwrap();
        let market = reconstruct_market(&traj, &mp, 2.0).unwrap();
        for (s, m) in traj.states().iter().zip(&market) {
            // supply is defined as demand - q; recovering q loses at most
            // one rounding of the subtraction
            assert_abs_diff_eq!(m.demand - m.supply, s.q, epsilon = 1e-14);
            assert_eq!(m.price, s.p + mp.p_d);
        }
    }

    #[test]
    fn reconstruct_rejects_irreducible_params() {
        let mut mp = market_baseline();
        mp.c = 1.0;
        let traj = Trajectory::new(vec![0.0, 1.0], vec![State2::new(0.0, 0.0); 2]).unwrap();
        assert!(reconstruct_market(&traj, &mp, 0.0).is_err());
    }

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::new(vec![0.0, 1.0], vec![State2::new(0.0, 0.0)]).is_err());
        assert!(Trajectory::new(
            vec![0.0, 0.0],
            vec![State2::new(0.0, 0.0), State2::new(1.0, 0.0)]
        )
        .is_err());
    }

    #[test]
    fn price_admissibility_flags() {
        assert!(State2::new(-2.9, 0.0).price_admissible(3.0));
        assert!(!State2::new(-3.1, 0.0).price_admissible(3.0));
        assert!(MarketState::new(0.0, 1.0, 1.0).is_physical());
        assert!(!MarketState::new(-0.1, 1.0, 1.0).is_physical());
    }
}
