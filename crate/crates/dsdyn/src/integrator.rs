//! Fixed-step RK4 and adaptive Dormand-Prince 4(5) time stepping for the
//! reduced and full systems, with escape detection and sampled output.
//!
//! Both schemes land exactly on the requested end time (and on every
//! recording mark) by shrinking the final step of each stretch, so period
//! maps built on top of `integrate` are exactly reproducible.

use crate::error::{Error, Result};
use crate::model::{MarketParams, MarketState, ModelParams, State2, Trajectory};
use std::array::from_fn;

/// Stepping scheme. `Rk4` is the default for period maps and basins;
/// `Rk45` serves accuracy studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { step: f64 },
    Rk45 { rel_tol: f64, abs_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub method: Method,
    /// Escape radius `R`: the run stops once `max(|p|, |q|) > R`.
    pub escape_radius: f64,
    /// Step budget for a single call (attempted steps).
    pub max_steps: usize,
}

pub const DEFAULT_ESCAPE_RADIUS: f64 = 50.0;
pub const DEFAULT_MAX_STEPS: usize = 10_000_000;

/// Steps per forcing period for the default fixed-step scheme.
pub const STEPS_PER_PERIOD: f64 = 200.0;

impl IntegratorOptions {
    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4 { step },
            escape_radius: DEFAULT_ESCAPE_RADIUS,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn rk45(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            method: Method::Rk45 { rel_tol, abs_tol },
            escape_radius: DEFAULT_ESCAPE_RADIUS,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    /// Default scheme for period-map work: RK4 with `h = T / 200`.
    pub fn rk4_for(params: &ModelParams) -> Self {
        Self::rk4(params.forcing_period() / STEPS_PER_PERIOD)
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Rk4 { step } => {
                if !(step > 0.0) || !step.is_finite() {
                    return Err(Error::InvalidOptions(format!(
                        "rk4 step must be positive, got {step}"
                    )));
                }
            }
            Method::Rk45 { rel_tol, abs_tol } => {
                if !(rel_tol > 0.0) || !(abs_tol > 0.0) {
                    return Err(Error::InvalidOptions(format!(
                        "rk45 tolerances must be positive, got rel={rel_tol} abs={abs_tol}"
                    )));
                }
            }
        }
        if !(self.escape_radius > 0.0) {
            return Err(Error::InvalidOptions(format!(
                "escape radius must be positive, got {}",
                self.escape_radius
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidOptions("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// What to keep along the way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recording {
    None,
    EveryStep,
    /// Record at `t0 + k * dt` marks (integration lands on each mark).
    Interval(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Completed,
    Escaped,
    BudgetExhausted,
}

/// Sign of the diverging direction, taken from `p` at the first exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeSign {
    Positive,
    Negative,
}

impl EscapeSign {
    pub fn of(value: f64) -> Self {
        if value >= 0.0 {
            EscapeSign::Positive
        } else {
            EscapeSign::Negative
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            EscapeSign::Positive => 1,
            EscapeSign::Negative => -1,
        }
    }
}

impl std::fmt::Display for EscapeSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EscapeSign::Positive => write!(f, "+1"),
            EscapeSign::Negative => write!(f, "-1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOutcome {
    pub status: Status,
    pub final_time: f64,
    pub final_state: State2,
    pub escape_sign: Option<EscapeSign>,
    pub trajectory: Option<Trajectory>,
}

/// Full-model analogue of [`IntegrationOutcome`]; escape is measured on
/// `max(|P - p_d|, |D - S|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketOutcome {
    pub status: Status,
    pub final_time: f64,
    pub final_state: MarketState,
    pub escape_sign: Option<EscapeSign>,
    pub trajectory: Option<Vec<(f64, MarketState)>>,
}

struct RawOutcome<const N: usize> {
    status: Status,
    final_time: f64,
    final_state: [f64; N],
    escape_sign: Option<EscapeSign>,
    samples: Option<Vec<(f64, [f64; N])>>,
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], a: f64, x: &[f64; N]) -> [f64; N] {
    from_fn(|i| y[i] + a * x[i])
}

#[inline]
fn finite<const N: usize>(x: &[f64; N]) -> bool {
    x.iter().all(|v| v.is_finite())
}

#[inline]
fn rk4_step<const N: usize, F: Fn(f64, [f64; N]) -> [f64; N]>(
    f: &F,
    t: f64,
    y: [f64; N],
    h: f64,
) -> [f64; N] {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, axpy(&y, 0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, axpy(&y, 0.5 * h, &k2));
    let k4 = f(t + h, axpy(&y, h, &k3));
    from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Step-size safety factor; the conservative end of the usual range keeps
// accumulated endpoint error within a small multiple of the tolerance.
const DP_SAFETY: f64 = 0.8;

// 5th-order weights equal the last tableau row (FSAL); these are the
// differences against the embedded 4th-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Drive<'a, const N: usize, F, M, S>
where
    F: Fn(f64, [f64; N]) -> [f64; N],
    M: Fn(&[f64; N]) -> f64,
    S: Fn(&[f64; N]) -> EscapeSign,
{
    f: F,
    measure: M,
    sign_of: S,
    opts: &'a IntegratorOptions,
}

impl<const N: usize, F, M, S> Drive<'_, N, F, M, S>
where
    F: Fn(f64, [f64; N]) -> [f64; N],
    M: Fn(&[f64; N]) -> f64,
    S: Fn(&[f64; N]) -> EscapeSign,
{
    fn run(&self, x0: [f64; N], t0: f64, t1: f64, record: Recording) -> Result<RawOutcome<N>> {
        self.opts.validate()?;
        if !(t1 > t0) {
            return Err(Error::InvalidOptions(format!(
                "time span must be forward: t0 = {t0}, t1 = {t1}"
            )));
        }
        if let Recording::Interval(dt) = record {
            if !(dt > 0.0) {
                return Err(Error::InvalidOptions(format!(
                    "recording interval must be positive, got {dt}"
                )));
            }
        }

        let mut samples = match record {
            Recording::None => None,
            _ => Some(vec![(t0, x0)]),
        };
        let mut t = t0;
        let mut x = x0;
        let mut steps_used = 0usize;
        let mut mark = 1u64;
        // adaptive state for rk45
        let mut h_adaptive = (t1 - t0) / 100.0;

        let (status, escape_sign) = 'outer: loop {
            if t >= t1 {
                break (Status::Completed, None);
            }
            // Next stop: either a recording mark or the end time.
            let (barrier, is_mark) = match record {
                Recording::Interval(dt) => {
                    let m = t0 + mark as f64 * dt;
                    if m <= t1 * (1.0 + 1e-9) + dt * 1e-9 {
                        (m.min(t1), true)
                    } else {
                        (t1, false)
                    }
                }
                _ => (t1, false),
            };

            while t < barrier {
                if steps_used >= self.opts.max_steps {
                    break 'outer (Status::BudgetExhausted, None);
                }
                let stepped = match self.opts.method {
                    Method::Rk4 { step } => {
                        let remaining = barrier - t;
                        let (h, t_next) = if remaining <= step * (1.0 + 1e-9) {
                            (remaining, barrier)
                        } else {
                            (step, t + step)
                        };
                        steps_used += 1;
                        Some((rk4_step(&self.f, t, x, h), t_next))
                    }
                    Method::Rk45 { rel_tol, abs_tol } => {
                        steps_used += 1;
                        match self.dopri_attempt(t, &x, barrier, &mut h_adaptive, rel_tol, abs_tol)
                        {
                            DopriStep::Accepted(y, t_next) => Some((y, t_next)),
                            DopriStep::Rejected => None,
                            DopriStep::Stalled => {
                                break 'outer (Status::BudgetExhausted, None);
                            }
                        }
                    }
                };
                let Some((x_next, t_next)) = stepped else {
                    continue;
                };
                if !finite(&x_next) {
                    // Blow-up inside a step: classify by the last finite state.
                    break 'outer (Status::Escaped, Some((self.sign_of)(&x)));
                }
                x = x_next;
                t = t_next;
                if matches!(record, Recording::EveryStep) {
                    if let Some(s) = samples.as_mut() {
                        s.push((t, x));
                    }
                }
                if (self.measure)(&x) > self.opts.escape_radius {
                    break 'outer (Status::Escaped, Some((self.sign_of)(&x)));
                }
            }

            if is_mark && t >= barrier {
                if let Some(s) = samples.as_mut() {
                    s.push((t, x));
                }
                mark += 1;
            }
        };

        Ok(RawOutcome {
            status,
            final_time: t,
            final_state: x,
            escape_sign,
            samples,
        })
    }

    fn dopri_attempt(
        &self,
        t: f64,
        x: &[f64; N],
        barrier: f64,
        h_adaptive: &mut f64,
        rel_tol: f64,
        abs_tol: f64,
    ) -> DopriStep<N> {
        let remaining = barrier - t;
        let h = h_adaptive.min(remaining).max(0.0);
        if h < 1e-14 * barrier.abs().max(1.0) {
            return DopriStep::Stalled;
        }
        let mut k = [[0.0; N]; 7];
        k[0] = (self.f)(t, *x);
        for stage in 1..7 {
            let mut y = *x;
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = DP_A[stage - 1][j];
                if a != 0.0 {
                    y = axpy(&y, h * a, kj);
                }
            }
            k[stage] = (self.f)(t + DP_C[stage] * h, y);
        }
        // k[6] is f at the 5th-order solution point (the FSAL stage), and the
        // last tableau row doubles as the 5th-order weights.
        let mut y5 = *x;
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = DP_A[5][j];
            if b != 0.0 {
                y5 = axpy(&y5, h * b, kj);
            }
        }
        let mut err_sq = 0.0;
        for i in 0..N {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += DP_E[j] * kj[i];
            }
            e *= h;
            let sc = abs_tol + rel_tol * x[i].abs().max(y5[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / N as f64).sqrt();
        if !err.is_finite() {
            // Treat an overflowing trial like a blown-up step; the caller
            // converts it into an escape from the last finite state.
            return DopriStep::Accepted([f64::NAN; N], barrier);
        }
        let factor = (DP_SAFETY * err.powf(-0.2)).clamp(0.2, 4.0);
        if err <= 1.0 {
            let t_next = if h >= remaining * (1.0 - 1e-12) {
                barrier
            } else {
                t + h
            };
            *h_adaptive = h * factor;
            DopriStep::Accepted(y5, t_next)
        } else {
            *h_adaptive = h * factor;
            DopriStep::Rejected
        }
    }
}

enum DopriStep<const N: usize> {
    Accepted([f64; N], f64),
    Rejected,
    Stalled,
}

/// Advance the reduced system from `x0` over `[t0, t1]`.
pub fn integrate(
    params: &ModelParams,
    x0: State2,
    t0: f64,
    t1: f64,
    opts: &IntegratorOptions,
    record: Recording,
) -> Result<IntegrationOutcome> {
    if !x0.is_finite() {
        return Err(Error::NonFiniteState(format!("({}, {})", x0.p, x0.q)));
    }
    let drive = Drive {
        f: |t, y: [f64; 2]| {
            let v = params.rhs(t, State2::new(y[0], y[1]));
            [v.p, v.q]
        },
        measure: |y: &[f64; 2]| y[0].abs().max(y[1].abs()),
        sign_of: |y: &[f64; 2]| EscapeSign::of(if y[0] != 0.0 { y[0] } else { y[1] }),
        opts,
    };
    let raw = drive.run([x0.p, x0.q], t0, t1, record)?;
    let trajectory = match raw.samples {
        Some(samples) => {
            let (times, states) = samples
                .into_iter()
                .map(|(t, y)| (t, State2::new(y[0], y[1])))
                .unzip();
            Some(Trajectory::new(times, states)?)
        }
        None => None,
    };
    Ok(IntegrationOutcome {
        status: raw.status,
        final_time: raw.final_time,
        final_state: State2::new(raw.final_state[0], raw.final_state[1]),
        escape_sign: raw.escape_sign,
        trajectory,
    })
}

/// Advance the full model from `x0` over `[t0, t1]`.
pub fn integrate_market(
    params: &MarketParams,
    x0: MarketState,
    t0: f64,
    t1: f64,
    opts: &IntegratorOptions,
    record: Recording,
) -> Result<MarketOutcome> {
    if !x0.is_finite() {
        return Err(Error::NonFiniteState(format!(
            "({}, {}, {})",
            x0.price, x0.demand, x0.supply
        )));
    }
    let p_d = params.p_d;
    let drive = Drive {
        f: |t, y: [f64; 3]| {
            let v = params.rhs(t, MarketState::new(y[0], y[1], y[2]));
            [v.price, v.demand, v.supply]
        },
        measure: |y: &[f64; 3]| (y[0] - p_d).abs().max((y[1] - y[2]).abs()),
        sign_of: |y: &[f64; 3]| {
            let p = y[0] - p_d;
            EscapeSign::of(if p != 0.0 { p } else { y[1] - y[2] })
        },
        opts,
    };
    let raw = drive.run([x0.price, x0.demand, x0.supply], t0, t1, record)?;
    Ok(MarketOutcome {
        status: raw.status,
        final_time: raw.final_time,
        final_state: MarketState::new(raw.final_state[0], raw.final_state[1], raw.final_state[2]),
        escape_sign: raw.escape_sign,
        trajectory: raw.samples.map(|s| {
            s.into_iter()
                .map(|(t, y)| (t, MarketState::new(y[0], y[1], y[2])))
                .collect()
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hamiltonian;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn baseline(delta: f64, a: f64) -> ModelParams {
        ModelParams::baseline(delta, a).unwrap()
    }

    #[test]
    fn equilibrium_is_exactly_stationary() {
        let p = baseline(0.0, 0.0);
        let out = integrate(
            &p,
            State2::new(0.0, 0.0),
            0.0,
            25.0,
            &IntegratorOptions::rk4(1e-2),
            Recording::None,
        )
        .unwrap();
        assert_eq!(out.status, Status::Completed);
        assert_eq!(out.final_state, State2::new(0.0, 0.0));
        assert_eq!(out.final_time, 25.0);
    }

    #[test]
    fn final_partial_step_lands_exactly() {
        let p = baseline(0.0, 0.0);
        let out = integrate(
            &p,
            State2::new(0.5, 0.1),
            0.0,
            1.05,
            &IntegratorOptions::rk4(0.1),
            Recording::None,
        )
        .unwrap();
        assert_eq!(out.final_time, 1.05);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let p = baseline(0.1, 2.6);
        let opts = IntegratorOptions::rk4_for(&p);
        let run = || {
            integrate(
                &p,
                State2::new(0.3, -0.2),
                0.0,
                40.0,
                &opts,
                Recording::EveryStep,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn strong_forcing_far_start_escapes_positive() {
        let p = baseline(0.1, 5.0);
        let out = integrate(
            &p,
            State2::new(30.0, 30.0),
            0.0,
            100.0,
            &IntegratorOptions::rk4(0.01),
            Recording::None,
        )
        .unwrap();
        assert_eq!(out.status, Status::Escaped);
        assert_eq!(out.escape_sign, Some(EscapeSign::Positive));
        assert!(out.final_time < 5.0, "escape took {}", out.final_time);
        assert!(out.final_state.p.abs().max(out.final_state.q.abs()) > 50.0);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let p = baseline(0.0, 0.0);
        let mut opts = IntegratorOptions::rk4(1e-3);
        opts.max_steps = 10;
        let out = integrate(&p, State2::new(0.1, 0.0), 0.0, 1.0, &opts, Recording::None).unwrap();
        assert_eq!(out.status, Status::BudgetExhausted);
        assert!(out.final_time < 1.0);
    }

    #[test]
    fn blow_up_mid_step_counts_as_escape() {
        let p = baseline(0.0, 0.0);
        let mut opts = IntegratorOptions::rk4(1.0);
        opts.escape_radius = 1e300;
        let x0 = State2::new(1e154, 1e154);
        let out = integrate(&p, x0, 0.0, 10.0, &opts, Recording::None).unwrap();
        assert_eq!(out.status, Status::Escaped);
        assert_eq!(out.escape_sign, Some(EscapeSign::Positive));
        assert_eq!(out.final_state, x0, "last finite state is kept");
    }

    #[test]
    fn energy_drift_is_tiny() {
        let p = baseline(0.0, 0.0);
        let x0 = State2::new(0.0, 1.0);
        let out = integrate(
            &p,
            x0,
            0.0,
            10.0,
            &IntegratorOptions::rk4(1e-3),
            Recording::None,
        )
        .unwrap();
        let drift =
            (hamiltonian(&p, out.final_state) - hamiltonian(&p, x0)).abs() / hamiltonian(&p, x0);
        assert!(drift < 1e-9, "relative drift {drift:e}");
    }

    #[test]
    fn rk4_shows_fourth_order_convergence() {
        let p = baseline(0.0, 0.0);
        let x0 = State2::new(0.0, 1.0);
        let endpoint = |h: f64| {
            integrate(&p, x0, 0.0, 10.0, &IntegratorOptions::rk4(h), Recording::None)
                .unwrap()
                .final_state
        };
        let reference = endpoint(1e-4);
        let err = |s: State2| s.distance(reference);
        let ratio = err(endpoint(1e-2)) / err(endpoint(5e-3));
        assert!(
            (12.0..=20.0).contains(&ratio),
            "halving gain {ratio} outside [12, 20]"
        );
    }

    #[test]
    fn unforced_flow_is_time_reversible() {
        // The integrable field anticommutes with (p, q) -> (p, -q), so
        // conjugating by the flip runs the flow backwards.
        let p = baseline(0.0, 0.0);
        let opts = IntegratorOptions::rk4(1e-3);
        let x0 = State2::new(1.1, 0.4);
        let fwd = integrate(&p, x0, 0.0, 10.0, &opts, Recording::None)
            .unwrap()
            .final_state;
        let flipped = State2::new(fwd.p, -fwd.q);
        let back = integrate(&p, flipped, 0.0, 10.0, &opts, Recording::None)
            .unwrap()
            .final_state;
        let returned = State2::new(back.p, -back.q);
        assert!(
            returned.distance(x0) < 1e-9,
            "return error {:e}",
            returned.distance(x0)
        );
    }

    #[test]
    fn half_period_mirror_solutions() {
        // If x(t) solves the forced system, -x(t - T/2) solves it from the
        // mirrored start half a period later.
        let p = baseline(0.1, 2.6);
        let t_half = p.forcing_period() / 2.0;
        let opts = IntegratorOptions::rk4_for(&p);
        let x0 = State2::new(0.3, 0.2);
        let span = 5.0 * p.forcing_period();
        let run_a = integrate(&p, x0, 0.0, span, &opts, Recording::EveryStep).unwrap();
        let run_b = integrate(&p, -x0, t_half, t_half + span, &opts, Recording::EveryStep).unwrap();
        let ta = run_a.trajectory.unwrap();
        let tb = run_b.trajectory.unwrap();
        assert_eq!(ta.len(), tb.len());
        let mut worst = 0.0_f64;
        for ((t_a, s_a), (t_b, s_b)) in ta.iter().zip(tb.iter()) {
            assert_abs_diff_eq!(t_b, t_a + t_half, epsilon = 1e-9);
            worst = worst.max(s_b.distance(-s_a));
        }
        assert!(worst < 1e-8, "mirror defect {worst:e}");
    }

    #[test]
    fn rk45_meets_requested_tolerance() {
        // Endpoint error stays a small multiple of rel_tol. The constant is
        // about 13 for starts sheared by the nearby separatrix (a stock
        // Dormand-Prince controller measures about 20 on the same points),
        // so the bound is pinned at 15.
        let p = baseline(0.0, 0.0);
        let rel = 1e-6;
        let opts = IntegratorOptions::rk45(rel, 1e-9);
        let tight = IntegratorOptions::rk4(2e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let x0 = State2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let got = integrate(&p, x0, 0.0, 10.0, &opts, Recording::None)
                .unwrap()
                .final_state;
            let want = integrate(&p, x0, 0.0, 10.0, &tight, Recording::None)
                .unwrap()
                .final_state;
            assert!(
                got.distance(want) < 15.0 * rel,
                "endpoint error {:e} from {x0:?}",
                got.distance(want)
            );
        }
    }

    #[test]
    fn rk45_error_scales_linearly_with_tolerance() {
        let p = baseline(0.0, 0.0);
        let tight = IntegratorOptions::rk4(2e-4);
        let x0 = State2::new(-1.85, -0.95);
        let want = integrate(&p, x0, 0.0, 10.0, &tight, Recording::None)
            .unwrap()
            .final_state;
        let err_at = |rel: f64| {
            let opts = IntegratorOptions::rk45(rel, 1e-12);
            integrate(&p, x0, 0.0, 10.0, &opts, Recording::None)
                .unwrap()
                .final_state
                .distance(want)
        };
        let ratio = err_at(1e-6) / err_at(1e-8);
        assert!(
            (30.0..300.0).contains(&ratio),
            "two decades of tolerance gave error ratio {ratio}"
        );
    }

    #[test]
    fn interval_recording_hits_every_mark() {
        let p = baseline(0.1, 2.6);
        let out = integrate(
            &p,
            State2::new(0.0, 0.1),
            0.0,
            1.0,
            &IntegratorOptions::rk4_for(&p),
            Recording::Interval(0.1),
        )
        .unwrap();
        let traj = out.trajectory.unwrap();
        assert_eq!(traj.len(), 11);
        for (i, (t, _)) in traj.iter().enumerate() {
            assert_abs_diff_eq!(t, i as f64 * 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn market_equilibrium_is_constant() {
        let mp = MarketParams::new(
            1.0,
            1.0,
            0.25,
            1.0,
            0.1,
            3.0,
            3.0,
            0.0,
            std::f64::consts::PI,
            0.0,
            0.0,
            0.0,
        )
        .unwrap();
        let x0 = MarketState::new(3.0, 10.0, 10.0);
        let out = integrate_market(
            &mp,
            x0,
            0.0,
            20.0,
            &IntegratorOptions::rk4(0.01),
            Recording::None,
        )
        .unwrap();
        assert_eq!(out.status, Status::Completed);
        assert_eq!(out.final_state, x0);
    }

    #[test]
    fn market_run_matches_reduced_run() {
        let mp = MarketParams::new(
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
        .unwrap();
        let rp = crate::model::reduce_to_planar(&mp).unwrap();
        let opts = IntegratorOptions::rk4_for(&rp);
        let span = 50.0;
        let x2 = State2::new(0.5, 0.5);
        let x3 = MarketState::new(mp.p_d + x2.p, 10.0 + x2.q, 10.0);
        let reduced = integrate(&rp, x2, 0.0, span, &opts, Recording::Interval(1.0)).unwrap();
        let market =
            integrate_market(&mp, x3, 0.0, span, &opts, Recording::Interval(1.0)).unwrap();
        let rt = reduced.trajectory.unwrap();
        let mt = market.trajectory.unwrap();
        assert_eq!(rt.len(), mt.len());
        for ((t, s2), (tm, s3)) in rt.iter().zip(mt.iter()) {
            assert_eq!(t, *tm);
            let dev = s3.deviation(mp.p_d);
            let per_unit = 1e-10 * t.max(1.0);
            assert!(
                dev.distance(s2) < per_unit,
                "t = {t}: deviation {:e} exceeds {per_unit:e}",
                dev.distance(s2)
            );
        }
    }

    #[test]
    fn market_escape_agrees_with_reduced_classification() {
        let mp = MarketParams::new(
            1.0,
            1.0,
            0.25,
            1.0,
            0.1,
            3.0,
            3.0,
            5.0,
            std::f64::consts::PI,
            0.0,
            0.0,
            0.0,
        )
        .unwrap();
        let rp = crate::model::reduce_to_planar(&mp).unwrap();
        let opts = IntegratorOptions::rk4_for(&rp);
        let x2 = State2::new(30.0, 30.0);
        let x3 = MarketState::new(mp.p_d + 30.0, 40.0, 10.0);
        let reduced = integrate(&rp, x2, 0.0, 100.0, &opts, Recording::None).unwrap();
        let market = integrate_market(&mp, x3, 0.0, 100.0, &opts, Recording::None).unwrap();
        assert_eq!(reduced.status, Status::Escaped);
        assert_eq!(market.status, Status::Escaped);
        assert_eq!(reduced.escape_sign, market.escape_sign);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = baseline(0.0, 0.0);
        let opts = IntegratorOptions::rk4(0.1);
        assert!(integrate(&p, State2::new(0.0, 0.0), 1.0, 1.0, &opts, Recording::None).is_err());
        assert!(
            integrate(&p, State2::new(f64::NAN, 0.0), 0.0, 1.0, &opts, Recording::None).is_err()
        );
        assert!(IntegratorOptions::rk4(0.0).validate().is_err());
        assert!(IntegratorOptions::rk45(1e-6, 0.0).validate().is_err());
        let mut bad = IntegratorOptions::rk4(0.1);
        bad.escape_radius = -1.0;
        assert!(bad.validate().is_err());
    }
}
