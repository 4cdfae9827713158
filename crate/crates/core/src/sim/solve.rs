//! Private optimum, first-order condition, best responses, the damped
//! equilibrium iteration, and a mass-addition probe that measures how
//! best responses react when extra consumption enters the population.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::population::{social_terms, social_terms_shifted, AgentPopulation, SocialState};
use super::utility::ModelParams;
use super::SimError;

const GRID_POINTS: usize = 256;
const GOLDEN_MAX_ITERS: usize = 200;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizer of α·ln(x+ε) + β·ln(z−x+ε) on [0, z]:
/// x̂ = (α·z + ε·(α−β)) / (α+β), interior for any positive α, β.
pub fn private_optimum(z: f64, params: &ModelParams) -> Result<f64, SimError> {
    params.validate()?;
    if !z.is_finite() || z <= 0.0 {
        return Err(SimError::BadIncomes);
    }
    let e = params.floor;
    Ok((params.alpha * z + e * (params.alpha - params.beta)) / (params.alpha + params.beta))
}

/// ψ(x) = U_x − U_y + S'(x)·U_S evaluated against the population's
/// current profile; zero at an interior best response.
pub fn foc_residual(
    x: f64,
    z: f64,
    population: &AgentPopulation,
    params: &ModelParams,
) -> Result<f64, SimError> {
    params.validate()?;
    if !x.is_finite() || !z.is_finite() || x <= 0.0 || x >= z {
        return Err(SimError::ConsumptionOutOfRange { x, z });
    }
    let state = social_terms(x, population);
    let s = state.value(params);
    if 1.0 + s <= 0.0 {
        return Err(SimError::SocialTermUndefined { s });
    }
    let p = params.partials(x, z - x, s);
    Ok(p.u_x - p.u_y + state.slope(params) * p.u_s)
}

fn objective(
    x: f64,
    z: f64,
    population: &AgentPopulation,
    params: &ModelParams,
    mass: f64,
    level: f64,
) -> f64 {
    let state = social_terms_shifted(x, population, mass, level);
    params.utility(x, z - x, state.value(params))
}

fn golden_max(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let tol = tol.max(1e-13);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..GOLDEN_MAX_ITERS {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

fn shifted_best_response(
    z: f64,
    population: &AgentPopulation,
    params: &ModelParams,
    tol: f64,
    mass: f64,
    level: f64,
) -> f64 {
    let lo = params.floor;
    let hi = z - params.floor;
    if !(hi > lo) {
        // income below twice the floor: spend half of it
        return lo.min(z / 2.0);
    }
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let mut best_i = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..GRID_POINTS {
        let x = lo + step * i as f64;
        let v = objective(x, z, population, params, mass, level);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    if best_v == f64::NEG_INFINITY {
        // utility undefined everywhere (1+S ≤ 0 across the range): fall
        // back to the cheapest admissible point
        return lo;
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    golden_max(a, b, tol, |x| {
        objective(x, z, population, params, mass, level)
    })
}

/// Utility-maximizing consumption for an agent with income z taking the
/// population profile as given. Infallible: corner solutions land on the
/// floor margins and undefined utility falls back to the floor.
pub fn best_response(z: f64, population: &AgentPopulation, params: &ModelParams, tol: f64) -> f64 {
    shifted_best_response(z, population, params, tol, 0.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquilibriumOptions {
    /// Sup-norm convergence tolerance on the best-response residual.
    pub tol: f64,
    pub max_iters: usize,
    /// Step fraction λ toward the best response each sweep.
    pub damping: f64,
    /// Accuracy of each one-dimensional best-response search.
    pub br_tol: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> EquilibriumOptions {
        EquilibriumOptions {
            tol: super::DEFAULT_EQ_TOL,
            max_iters: 500,
            damping: super::DEFAULT_DAMPING,
            br_tol: 1e-10,
        }
    }
}

impl EquilibriumOptions {
    fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidParams(msg.to_string()));
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return bad("tol must be positive");
        }
        if !(self.br_tol > 0.0) || !self.br_tol.is_finite() {
            return bad("br_tol must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumState {
    pub population: AgentPopulation,
    /// Best-response sweeps performed.
    pub iterations: usize,
    /// Sup-norm distance between the profile and its best responses.
    pub residual: f64,
    pub converged: bool,
}

/// Damped best-response iteration x ← (1−λ)x + λ·BR(x), sweeping all
/// agents in parallel against the same profile. Returns the profile on
/// which the residual was measured, so one more sweep moves no agent by
/// more than the reported residual. Non-convergence is reported in the
/// state, not as an error.
pub fn equilibrium(
    population: &AgentPopulation,
    params: &ModelParams,
    options: &EquilibriumOptions,
) -> Result<EquilibriumState, SimError> {
    params.validate()?;
    options.validate()?;
    let mut pop = population.clone();
    let mut residual = f64::INFINITY;
    for iteration in 1..=options.max_iters {
        let br: Vec<f64> = pop
            .incomes()
            .par_iter()
            .map(|&z| best_response(z, &pop, params, options.br_tol))
            .collect();
        residual = pop
            .profile()
            .iter()
            .zip(&br)
            .map(|(x, b)| (x - b).abs())
            .fold(0.0, f64::max);
        if residual <= options.tol {
            return Ok(EquilibriumState {
                population: pop,
                iterations: iteration,
                residual,
                converged: true,
            });
        }
        let lambda = options.damping;
        let next: Vec<f64> = pop
            .profile()
            .iter()
            .zip(&br)
            .map(|(x, b)| (1.0 - lambda) * x + lambda * b)
            .collect();
        pop.set_profile(next)
            .expect("damped update stays within income bounds");
    }
    Ok(EquilibriumState {
        population: pop,
        iterations: options.max_iters,
        residual,
        converged: false,
    })
}

/// Extra consumption mass injected into the population: `mass` agents'
/// worth of weight all consuming `level`. The base weights are not
/// rescaled, so comparison and network inputs all weakly increase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileShift {
    pub mass: f64,
    pub level: f64,
}

/// First-order-condition response to a small uniform rise in population
/// consumption, split into the network channel (N and N_x move, status
/// inputs held) and the status channel (F, A, D move, network held).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SocialChannelShares {
    pub network_delta: f64,
    pub status_delta: f64,
    pub network_share: f64,
    pub status_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementarityReport {
    /// Best-response change per agent, ordered by income.
    pub deltas: Vec<f64>,
    pub mean_delta: f64,
    /// Channel decomposition against a low-consumption reference profile.
    pub low_consumption: SocialChannelShares,
    /// The same decomposition against a high-consumption profile.
    pub high_consumption: SocialChannelShares,
}

/// Recomputes every agent's best response after injecting `shift` into
/// the social terms, holding the equilibrium profile fixed otherwise.
pub fn complementarity_probe(
    state: &EquilibriumState,
    params: &ModelParams,
    shift: &ProfileShift,
    br_tol: f64,
) -> Result<ComplementarityReport, SimError> {
    params.validate()?;
    if !state.converged {
        return Err(SimError::NotConverged);
    }
    if !shift.mass.is_finite() || shift.mass < 0.0 || !shift.level.is_finite() || shift.level < 0.0
    {
        return Err(SimError::InvalidParams(
            "shift mass and level must be finite and non-negative".to_string(),
        ));
    }
    let pop = &state.population;
    let deltas: Vec<f64> = pop
        .incomes()
        .par_iter()
        .map(|&z| {
            let base = shifted_best_response(z, pop, params, br_tol, 0.0, 0.0);
            let moved = shifted_best_response(z, pop, params, br_tol, shift.mass, shift.level);
            moved - base
        })
        .collect();
    let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    Ok(ComplementarityReport {
        deltas,
        mean_delta,
        low_consumption: channel_shares(pop, params, 0.15, br_tol),
        high_consumption: channel_shares(pop, params, 0.85, br_tol),
    })
}

/// ψ with the status inputs taken from one state and the network inputs
/// from another, so each channel can move alone.
fn psi_mixed(
    params: &ModelParams,
    x: f64,
    y: f64,
    status: &SocialState,
    network: &SocialState,
) -> f64 {
    let s = params.c_n * network.network + params.c_b * status.advantage
        - params.c_a * status.disadvantage;
    let p = params.partials(x, y, s);
    let slope =
        params.c_n * network.network_dx + params.c_b * status.f_at + params.c_a * status.above;
    p.u_x - p.u_y + slope * p.u_s
}

fn channel_shares(
    pop: &AgentPopulation,
    params: &ModelParams,
    consumption_fraction: f64,
    br_tol: f64,
) -> SocialChannelShares {
    let profile: Vec<f64> = pop
        .incomes()
        .iter()
        .map(|z| z * consumption_fraction)
        .collect();
    let reference = AgentPopulation::from_parts(pop.incomes().to_vec(), pop.weights().to_vec(), profile)
        .expect("scaled profile stays within income bounds");
    let mid = reference.len() / 2;
    let z = reference.incomes()[mid];
    let x = shifted_best_response(z, &reference, params, br_tol, 0.0, 0.0);
    let y = z - x;

    let headroom = (1.0 - consumption_fraction) * reference.incomes()[0];
    let h = (headroom * 0.5).min(1e-4);
    let shifted_profile: Vec<f64> = reference.profile().iter().map(|v| v + h).collect();
    let shifted = reference
        .clone()
        .with_profile(shifted_profile)
        .expect("shifted profile stays within income bounds");

    let base = social_terms(x, &reference);
    let next = social_terms(x, &shifted);
    let psi_base = psi_mixed(params, x, y, &base, &base);
    let network_delta = psi_mixed(params, x, y, &base, &next) - psi_base;
    let status_delta = psi_mixed(params, x, y, &next, &base) - psi_base;
    let total = network_delta + status_delta;
    let (network_share, status_share) = if total != 0.0 {
        (network_delta / total, status_delta / total)
    } else {
        (f64::NAN, f64::NAN)
    };
    SocialChannelShares {
        network_delta,
        status_delta,
        network_share,
        status_share,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_social() -> ModelParams {
        ModelParams {
            gamma: 0.0,
            ..ModelParams::default()
        }
    }

    #[test]
    fn private_optimum_splits_income_by_preference_weight() {
        let equal = ModelParams {
            alpha: 1.0,
            beta: 1.0,
            ..ModelParams::default()
        };
        assert_eq!(private_optimum(10.0, &equal).unwrap(), 5.0);

        let skewed = ModelParams {
            alpha: 3.0,
            beta: 1.0,
            ..ModelParams::default()
        };
        assert!((private_optimum(8.0, &skewed).unwrap() - 6.0).abs() < 1e-6);

        assert_eq!(
            private_optimum(-1.0, &equal).unwrap_err(),
            SimError::BadIncomes
        );
    }

    #[test]
    fn foc_vanishes_at_the_private_optimum_when_social_weights_are_zero() {
        let params = ModelParams {
            c_n: 0.0,
            c_a: 0.0,
            c_b: 0.0,
            ..ModelParams::default()
        };
        let pop = AgentPopulation::uniform_grid(2.0, 10.0, 11).unwrap();
        let z = 7.0;
        let x_hat = private_optimum(z, &params).unwrap();
        let psi = foc_residual(x_hat, z, &pop, &params).unwrap();
        assert!(psi.abs() < 1e-10, "psi = {psi}");

        assert!(matches!(
            foc_residual(8.0, 7.0, &pop, &params),
            Err(SimError::ConsumptionOutOfRange { .. })
        ));
    }

    #[test]
    fn comparison_weights_collapse_when_up_and_down_match() {
        let params = ModelParams {
            c_n: 0.0,
            c_a: 0.3,
            c_b: 0.3,
            ..ModelParams::default()
        };
        let pop = AgentPopulation::uniform_grid(2.0, 10.0, 7).unwrap();
        // S'(x) = c·(F + mass above) = c for any x when c_a = c_b = c
        for x in [0.3, 2.0, 4.9] {
            let slope = social_terms(x, &pop).slope(&params);
            assert!((slope - 0.3).abs() < 1e-12, "slope = {slope}");
        }
    }

    #[test]
    fn best_response_matches_private_optimum_without_social_term() {
        let params = no_social();
        let pop = AgentPopulation::uniform_grid(2.0, 10.0, 9).unwrap();
        for z in [2.0, 4.5, 10.0] {
            let br = best_response(z, &pop, &params, 1e-10);
            let x_hat = private_optimum(z, &params).unwrap();
            assert!((br - x_hat).abs() < 1e-6, "z = {z}: {br} vs {x_hat}");
        }
    }

    #[test]
    fn equilibrium_without_social_term_converges_in_two_sweeps() {
        let params = ModelParams {
            alpha: 3.0,
            beta: 1.0,
            gamma: 0.0,
            ..ModelParams::default()
        };
        let pop = AgentPopulation::uniform_grid(2.0, 10.0, 9).unwrap();
        let options = EquilibriumOptions {
            damping: 1.0,
            ..EquilibriumOptions::default()
        };
        let state = equilibrium(&pop, &params, &options).unwrap();
        assert!(state.converged);
        assert!(state.iterations <= 2, "iterations = {}", state.iterations);
        for (&x, &z) in state.population.profile().iter().zip(pop.incomes()) {
            let x_hat = private_optimum(z, &params).unwrap();
            assert!((x - x_hat).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_mass_probe_changes_nothing() {
        let params = ModelParams::default();
        let pop = AgentPopulation::uniform_grid(2.0, 10.0, 9).unwrap();
        let state = equilibrium(&pop, &params, &EquilibriumOptions::default()).unwrap();
        assert!(state.converged);
        let shift = ProfileShift {
            mass: 0.0,
            level: 3.0,
        };
        let report = complementarity_probe(&state, &params, &shift, 1e-10).unwrap();
        assert!(report.deltas.iter().all(|&d| d == 0.0));
        assert_eq!(report.mean_delta, 0.0);

        let unconverged = EquilibriumState {
            converged: false,
            ..state
        };
        assert_eq!(
            complementarity_probe(&unconverged, &params, &shift, 1e-10).unwrap_err(),
            SimError::NotConverged
        );
    }
}
