//! The stroboscopic period map of the forced system, orbit classification
//! under the map, and Newton refinement of periodic points.
//!
//! The map advances a section state by exactly one forcing period
//! `T = 2 pi / omega1` from the section phase. The vector field is
//! `T`-periodic, so every application integrates the same window
//! `[phase, phase + T]`; iterating the map therefore composes one fixed,
//! deterministic function.

use crate::error::{Error, Result};
use crate::integrator::{integrate, EscapeSign, IntegratorOptions, Recording, Status};
use crate::model::{ModelParams, State2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareOptions {
    /// Section time offset in `[0, T)`.
    pub phase: f64,
    /// Iterates discarded before cycle matching starts.
    pub transient: usize,
    /// Total iterate budget.
    pub max_iterations: usize,
    /// Largest cycle period tested.
    pub period_max: usize,
    /// Cycle-closing tolerance (Euclidean distance on the section).
    pub match_tol: f64,
    /// Consecutive returns to the anchor required to confirm a cycle.
    pub confirm_count: usize,
    pub integrator: IntegratorOptions,
}

/// Damping at or below this uses the long settling budget: attraction rates
/// scale with the damping, so weakly damped runs need far more iterates.
pub const LOW_DAMPING: f64 = 0.02;

impl PoincareOptions {
    /// Classification defaults: transient 200 / budget 1000, raised to
    /// 1000 / 4000 in the weakly damped regime.
    pub fn for_params(params: &ModelParams) -> Self {
        let (transient, max_iterations) = if params.delta <= LOW_DAMPING {
            (1000, 4000)
        } else {
            (200, 1000)
        };
        Self {
            phase: 0.0,
            transient,
            max_iterations,
            period_max: 8,
            match_tol: 1e-6,
            confirm_count: 5,
            integrator: IntegratorOptions::rk4_for(params),
        }
    }

    /// Basin-sweep defaults: a tighter 100 / 300 budget (escapes resolve in
    /// a few periods, so the budget concentrates on interior cells), with
    /// the same low-damping escalation.
    pub fn for_sweep(params: &ModelParams) -> Self {
        let mut opts = Self::for_params(params);
        if params.delta > LOW_DAMPING {
            opts.transient = 100;
            opts.max_iterations = 300;
        }
        opts
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let period = params.forcing_period();
        if !(self.phase >= 0.0 && self.phase < period) {
            return Err(Error::InvalidOptions(format!(
                "section phase must lie in [0, {period}), got {}",
                self.phase
            )));
        }
        if self.transient >= self.max_iterations {
            return Err(Error::InvalidOptions(format!(
                "transient ({}) must be below the iteration budget ({})",
                self.transient, self.max_iterations
            )));
        }
        if self.period_max == 0 {
            return Err(Error::InvalidOptions("period_max must be at least 1".into()));
        }
        if !(self.match_tol > 0.0) {
            return Err(Error::InvalidOptions(format!(
                "match tolerance must be positive, got {}",
                self.match_tol
            )));
        }
        if self.confirm_count == 0 {
            return Err(Error::InvalidOptions(
                "confirm_count must be at least 1".into(),
            ));
        }
        self.integrator.validate()
    }
}

/// One application of the period map: either a new section state or an
/// escape part-way through the period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SectionStep {
    Inside(State2),
    Escaped { sign: EscapeSign, time: f64 },
}

/// Iterates `x0, F(x0), ..., F^n(x0)`, truncated at escape.
#[derive(Debug, Clone, PartialEq)]
pub struct IteratedOrbit {
    pub states: Vec<State2>,
    /// Escape sign and the iterate at which it happened.
    pub escape: Option<(EscapeSign, usize)>,
}

/// Where an initial condition ends up under the period map.
#[derive(Debug, Clone, PartialEq)]
pub enum AttractorClass {
    Periodic {
        period: usize,
        /// The `period` cycle states on the section, in iteration order.
        cycle: Vec<State2>,
        iterations: usize,
    },
    Escape {
        sign: EscapeSign,
        iterations: usize,
    },
    Undecided {
        iterations: usize,
    },
}

impl AttractorClass {
    pub fn iterations(&self) -> usize {
        match self {
            AttractorClass::Periodic { iterations, .. }
            | AttractorClass::Escape { iterations, .. }
            | AttractorClass::Undecided { iterations } => *iterations,
        }
    }

    pub fn period(&self) -> Option<usize> {
        match self {
            AttractorClass::Periodic { period, .. } => Some(*period),
            _ => None,
        }
    }
}

fn map_step(params: &ModelParams, x: State2, opts: &PoincareOptions) -> Result<SectionStep> {
    let t0 = opts.phase;
    let t1 = opts.phase + params.forcing_period();
    let out = integrate(params, x, t0, t1, &opts.integrator, Recording::None)?;
    match out.status {
        Status::Completed => Ok(SectionStep::Inside(out.final_state)),
        Status::Escaped => Ok(SectionStep::Escaped {
            sign: out.escape_sign.expect("escaped outcome carries a sign"),
            time: out.final_time,
        }),
        Status::BudgetExhausted => Err(Error::InvalidOptions(
            "integrator step budget too small for one forcing period".into(),
        )),
    }
}

/// Advance a section state by exactly one forcing period.
pub fn poincare_map(params: &ModelParams, x: State2, opts: &PoincareOptions) -> Result<SectionStep> {
    opts.validate(params)?;
    map_step(params, x, opts)
}

/// Apply the map `n` times, recording every section state.
pub fn iterate_map(
    params: &ModelParams,
    x0: State2,
    n: usize,
    opts: &PoincareOptions,
) -> Result<IteratedOrbit> {
    opts.validate(params)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0);
    let mut x = x0;
    for it in 1..=n {
        match map_step(params, x, opts)? {
            SectionStep::Inside(next) => {
                x = next;
                states.push(x);
            }
            SectionStep::Escaped { sign, .. } => {
                return Ok(IteratedOrbit {
                    states,
                    escape: Some((sign, it)),
                });
            }
        }
    }
    Ok(IteratedOrbit {
        states,
        escape: None,
    })
}

/// Classify the asymptotic behavior of `x0` under the period map.
pub fn classify(params: &ModelParams, x0: State2, opts: &PoincareOptions) -> Result<AttractorClass> {
    opts.validate(params)?;
    if !x0.is_finite() {
        return Err(Error::NonFiniteState(format!("({}, {})", x0.p, x0.q)));
    }
    Ok(classify_unchecked(params, x0, opts))
}

/// Classification core; inputs are assumed valid. Basin sweeps call this
/// directly so per-cell validation does not sit on the hot path.
///
/// A period-`k` candidate anchors at a section state and must be revisited
/// within `match_tol` on `confirm_count` consecutive `k`-fold returns.
/// Requiring returns to a fixed anchor (rather than pairwise closeness of a
/// sliding window) rejects slowly contracting spirals around a fixed point,
/// which would otherwise masquerade as short cycles near resonant rotation
/// angles.
pub(crate) fn classify_unchecked(
    params: &ModelParams,
    x0: State2,
    opts: &PoincareOptions,
) -> AttractorClass {
    let k_max = opts.period_max;
    let cap = k_max + 1;
    let mut ring = vec![x0; cap];
    let mut anchors: Vec<Option<(usize, State2)>> = vec![None; cap];
    let mut hits = vec![0usize; cap];

    let mut x = x0;
    for it in 1..=opts.max_iterations {
        match map_step(params, x, opts).expect("options validated by caller") {
            SectionStep::Inside(next) => x = next,
            SectionStep::Escaped { sign, .. } => {
                return AttractorClass::Escape {
                    sign,
                    iterations: it,
                }
            }
        }
        ring[it % cap] = x;
        if it <= opts.transient {
            continue;
        }

        let mut confirmed: Option<usize> = None;
        for k in 1..=k_max.min(it) {
            match anchors[k] {
                Some((anchor_it, anchor)) => {
                    if (it - anchor_it) % k != 0 {
                        continue;
                    }
                    if x.distance(anchor) < opts.match_tol {
                        hits[k] += 1;
                        if hits[k] >= opts.confirm_count && confirmed.is_none() {
                            confirmed = Some(k);
                        }
                    } else {
                        anchors[k] = None;
                        hits[k] = 0;
                    }
                }
                None => {
                    let prev = ring[(it - k) % cap];
                    if x.distance(prev) < opts.match_tol {
                        anchors[k] = Some((it - k, prev));
                        hits[k] = 1;
                        if opts.confirm_count == 1 && confirmed.is_none() {
                            confirmed = Some(k);
                        }
                    }
                }
            }
        }

        if let Some(k) = confirmed {
            // the cycle is the last k section states, in iteration order
            let cycle: Vec<State2> = (0..k).map(|j| ring[(it - k + 1 + j) % cap]).collect();
            let (period, cycle) = reduce_to_minimal_period(cycle, opts.match_tol);
            return AttractorClass::Periodic {
                period,
                cycle,
                iterations: it,
            };
        }
    }
    AttractorClass::Undecided {
        iterations: opts.max_iterations,
    }
}

/// Divisor sub-periods must not inflate the reported period: a 6-cycle whose
/// states repeat every 3 is a period-3 cycle.
fn reduce_to_minimal_period(cycle: Vec<State2>, tol: f64) -> (usize, Vec<State2>) {
    let k = cycle.len();
    for d in 1..k {
        if k % d != 0 {
            continue;
        }
        let is_sub_period = (0..k).all(|j| cycle[j].distance(cycle[(j + d) % k]) < tol);
        if is_sub_period {
            return (d, cycle.into_iter().take(d).collect());
        }
    }
    (k, cycle)
}

const REFINE_TOL: f64 = 1e-10;
const REFINE_MAX_STEPS: usize = 50;
const JACOBIAN_REL_STEP: f64 = 1e-6;

/// Sharpen a period-`k` point by damped Newton on `F^k(x) - x` with a
/// finite-difference Jacobian. Returns the refined point and its residual.
pub fn refine_cycle(
    params: &ModelParams,
    guess: State2,
    k: usize,
    opts: &PoincareOptions,
) -> Result<(State2, f64)> {
    opts.validate(params)?;
    if k == 0 {
        return Err(Error::InvalidOptions("cycle period must be at least 1".into()));
    }
    let map_k = |x: State2, steps_done: usize| -> Result<State2> {
        let mut y = x;
        for _ in 0..k {
            match map_step(params, y, opts)? {
                SectionStep::Inside(next) => y = next,
                SectionStep::Escaped { .. } => {
                    return Err(Error::RefinementFailed {
                        steps: steps_done,
                        residual: f64::INFINITY,
                    })
                }
            }
        }
        Ok(y)
    };

    let mut x = guess;
    let mut residual = f64::INFINITY;
    for step in 0..REFINE_MAX_STEPS {
        let g = {
            let fx = map_k(x, step)?;
            State2::new(fx.p - x.p, fx.q - x.q)
        };
        residual = g.p.hypot(g.q);
        if residual < REFINE_TOL {
            return Ok((x, residual));
        }

        // finite-difference Jacobian of G = F^k - id
        let hp = JACOBIAN_REL_STEP * (1.0 + x.p.abs());
        let hq = JACOBIAN_REL_STEP * (1.0 + x.q.abs());
        let gp = {
            let fx = map_k(State2::new(x.p + hp, x.q), step)?;
            State2::new(
                (fx.p - (x.p + hp) - g.p) / hp,
                (fx.q - x.q - g.q) / hp,
            )
        };
        let gq = {
            let fx = map_k(State2::new(x.p, x.q + hq), step)?;
            State2::new(
                (fx.p - x.p - g.p) / hq,
                (fx.q - (x.q + hq) - g.q) / hq,
            )
        };
        let det = gp.p * gq.q - gq.p * gp.q;
        if det.abs() < 1e-300 || !det.is_finite() {
            return Err(Error::RefinementFailed {
                steps: step,
                residual,
            });
        }
        let dx = State2::new(
            (-g.p * gq.q + g.q * gq.p) / det,
            (-gp.p * g.q + gp.q * g.p) / det,
        );

        // backtracking damping: accept the first step that shrinks G
        let mut accepted = false;
        let mut lambda = 1.0;
        for _ in 0..8 {
            let trial = State2::new(x.p + lambda * dx.p, x.q + lambda * dx.q);
            if let Ok(fx) = map_k(trial, step) {
                let r = (fx.p - trial.p).hypot(fx.q - trial.q);
                if r < residual {
                    x = trial;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::RefinementFailed {
                steps: step,
                residual,
            });
        }
    }
    Err(Error::RefinementFailed {
        steps: REFINE_MAX_STEPS,
        residual,
    })
}
