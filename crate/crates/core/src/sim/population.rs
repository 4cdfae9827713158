//! Weighted income distribution, the consumption profile attached to it,
//! and the social terms induced by the profile's empirical distribution.

use serde::Serialize;

use super::utility::ModelParams;
use super::SimError;

/// A finite population of agents: strictly increasing incomes, positive
/// weights summing to one, and a consumption profile with 0 ≤ x_i ≤ z_i.
/// Agents are kept sorted by income, so any input ordering yields the
/// same population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentPopulation {
    incomes: Vec<f64>,
    weights: Vec<f64>,
    profile: Vec<f64>,
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

impl AgentPopulation {
    /// Builds a population from parallel arrays, sorting the triples by
    /// income. Incomes must be finite, positive, and pairwise distinct.
    pub fn from_parts(
        incomes: Vec<f64>,
        weights: Vec<f64>,
        profile: Vec<f64>,
    ) -> Result<AgentPopulation, SimError> {
        if incomes.is_empty() {
            return Err(SimError::EmptyPopulation);
        }
        if weights.len() != incomes.len() || profile.len() != incomes.len() {
            return Err(SimError::ProfileLength {
                expected: incomes.len(),
                found: weights.len().min(profile.len()),
            });
        }
        let mut order: Vec<usize> = (0..incomes.len()).collect();
        order.sort_by(|&a, &b| incomes[a].total_cmp(&incomes[b]));
        let incomes: Vec<f64> = order.iter().map(|&i| incomes[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
        let profile: Vec<f64> = order.iter().map(|&i| profile[i]).collect();

        for window in incomes.windows(2) {
            if !(window[0] < window[1]) {
                return Err(SimError::BadIncomes);
            }
        }
        if !(incomes[0] > 0.0) || !incomes.iter().all(|z| z.is_finite()) {
            return Err(SimError::BadIncomes);
        }
        let sum: f64 = weights.iter().sum();
        if !weights.iter().all(|w| w.is_finite() && *w > 0.0)
            || (sum - 1.0).abs() > WEIGHT_SUM_TOL
        {
            return Err(SimError::BadWeights { found: sum });
        }
        for (&x, &z) in profile.iter().zip(&incomes) {
            if !x.is_finite() || x < 0.0 || x > z {
                return Err(SimError::ProfileOutOfBounds { x, z });
            }
        }
        Ok(AgentPopulation {
            incomes,
            weights,
            profile,
        })
    }

    /// Equal-weight population with incomes evenly spaced on
    /// [z_min, z_max] and every agent initially spending half its income.
    pub fn uniform_grid(z_min: f64, z_max: f64, points: usize) -> Result<AgentPopulation, SimError> {
        if points == 0 {
            return Err(SimError::EmptyPopulation);
        }
        if !(z_min > 0.0) || !z_max.is_finite() || (points > 1 && !(z_min < z_max)) {
            return Err(SimError::BadIncomes);
        }
        let incomes: Vec<f64> = if points == 1 {
            vec![z_min]
        } else {
            let step = (z_max - z_min) / (points - 1) as f64;
            (0..points).map(|i| z_min + step * i as f64).collect()
        };
        let weights = vec![1.0 / points as f64; points];
        let profile = incomes.iter().map(|z| z / 2.0).collect();
        AgentPopulation::from_parts(incomes, weights, profile)
    }

    pub fn len(&self) -> usize {
        self.incomes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn incomes(&self) -> &[f64] {
        &self.incomes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// Replaces the consumption profile, re-checking 0 ≤ x_i ≤ z_i.
    pub fn set_profile(&mut self, profile: Vec<f64>) -> Result<(), SimError> {
        if profile.len() != self.incomes.len() {
            return Err(SimError::ProfileLength {
                expected: self.incomes.len(),
                found: profile.len(),
            });
        }
        for (&x, &z) in profile.iter().zip(&self.incomes) {
            if !x.is_finite() || x < 0.0 || x > z {
                return Err(SimError::ProfileOutOfBounds { x, z });
            }
        }
        self.profile = profile;
        Ok(())
    }

    pub fn with_profile(mut self, profile: Vec<f64>) -> Result<AgentPopulation, SimError> {
        self.set_profile(profile)?;
        Ok(self)
    }

    /// Weighted mean consumption m = Σ w_i x_i.
    pub fn mean_consumption(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.profile)
            .map(|(w, x)| w * x)
            .sum()
    }
}

/// Distribution statistics of one consumption level x against a profile.
/// Ties sit on the weakly-below side: F counts mass at or below x, so
/// advantage = x·F − a and disadvantage = d − x·(1−F) are both
/// non-negative by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SocialState {
    /// F(x): population mass with consumption ≤ x.
    pub f_at: f64,
    /// Mass with consumption strictly above x.
    pub above: f64,
    /// a(x) = Σ w_i x_i over x_i ≤ x.
    pub a_below: f64,
    /// d(x) = Σ w_i x_i over x_i > x.
    pub d_above: f64,
    /// A(x) = x·F(x) − a(x) ≥ 0.
    pub advantage: f64,
    /// D(x) = d(x) − x·(1 − F(x)) ≥ 0.
    pub disadvantage: f64,
    /// Mean population consumption m entering the network term.
    pub mean_consumption: f64,
    /// N(x, m).
    pub network: f64,
    /// ∂N/∂x at (x, m).
    pub network_dx: f64,
}

impl SocialState {
    /// S = c_N·N + c_b·A − c_a·D. Can fall below −1 when disadvantage
    /// dominates; the utility guards that case.
    pub fn value(&self, params: &ModelParams) -> f64 {
        params.c_n * self.network + params.c_b * self.advantage
            - params.c_a * self.disadvantage
    }

    /// ∂S/∂x = c_N·N_x + c_b·F(x) + c_a·(1 − F(x)), with the strictly-
    /// above mass summed directly rather than as 1 − F.
    pub fn slope(&self, params: &ModelParams) -> f64 {
        params.c_n * self.network_dx + params.c_b * self.f_at + params.c_a * self.above
    }
}

/// Social terms of consuming x against the population's current profile.
pub fn social_terms(x: f64, population: &AgentPopulation) -> SocialState {
    social_terms_shifted(x, population, 0.0, 0.0)
}

/// Social terms after adding an extra atom of consumption mass at `level`.
/// The base weights are not rescaled: total mass becomes 1 + mass and the
/// network mean becomes m + mass·level, so every comparison input is
/// weakly increasing in the added mass.
pub fn social_terms_shifted(
    x: f64,
    population: &AgentPopulation,
    mass: f64,
    level: f64,
) -> SocialState {
    let mut f_at = 0.0;
    let mut above = 0.0;
    let mut a_below = 0.0;
    let mut d_above = 0.0;
    let levels = population.profile.iter().zip(&population.weights);
    for (&xi, &wi) in levels.chain(std::iter::once((&level, &mass))) {
        if xi <= x {
            f_at += wi;
            a_below += wi * xi;
        } else {
            above += wi;
            d_above += wi * xi;
        }
    }
    let mean_consumption = a_below + d_above;
    SocialState {
        f_at,
        above,
        a_below,
        d_above,
        advantage: x * f_at - a_below,
        disadvantage: d_above - x * above,
        mean_consumption,
        network: ((1.0 + x) * (1.0 + mean_consumption)).sqrt(),
        network_dx: 0.5 * ((1.0 + mean_consumption) / (1.0 + x)).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_agents() -> AgentPopulation {
        AgentPopulation::from_parts(
            vec![2.0, 4.0, 6.0],
            vec![1.0 / 3.0; 3],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap()
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        let dup = AgentPopulation::from_parts(
            vec![2.0, 2.0],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        );
        assert_eq!(dup.unwrap_err(), SimError::BadIncomes);

        let heavy = AgentPopulation::from_parts(
            vec![2.0, 4.0],
            vec![0.7, 0.7],
            vec![1.0, 1.0],
        );
        assert!(matches!(heavy.unwrap_err(), SimError::BadWeights { .. }));

        let overspent = AgentPopulation::from_parts(
            vec![2.0, 4.0],
            vec![0.5, 0.5],
            vec![3.0, 1.0],
        );
        assert!(matches!(
            overspent.unwrap_err(),
            SimError::ProfileOutOfBounds { .. }
        ));

        assert_eq!(
            AgentPopulation::from_parts(vec![], vec![], vec![]).unwrap_err(),
            SimError::EmptyPopulation
        );
    }

    #[test]
    fn agents_are_sorted_by_income_regardless_of_input_order() {
        let shuffled = AgentPopulation::from_parts(
            vec![6.0, 2.0, 4.0],
            vec![1.0 / 3.0; 3],
            vec![3.0, 1.0, 2.0],
        )
        .unwrap();
        assert_eq!(shuffled, three_agents());
    }

    #[test]
    fn uniform_grid_spans_the_income_range() {
        let pop = AgentPopulation::uniform_grid(2.0, 10.0, 5).unwrap();
        assert_eq!(pop.incomes(), &[2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(pop.profile(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((pop.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let single = AgentPopulation::uniform_grid(3.0, 3.0, 1).unwrap();
        assert_eq!(single.incomes(), &[3.0]);
    }

    #[test]
    fn social_terms_split_mass_at_the_evaluation_point() {
        let pop = three_agents();

        // below every consumption level: only disadvantage
        let low = social_terms(0.5, &pop);
        assert_eq!(low.f_at, 0.0);
        assert_eq!(low.advantage, 0.0);
        assert!((low.disadvantage - (2.0 - 0.5)).abs() < 1e-12);

        // above every level: only advantage
        let high = social_terms(5.0, &pop);
        assert!((high.f_at - 1.0).abs() < 1e-12);
        assert_eq!(high.d_above, 0.0);
        assert!((high.advantage - (5.0 - 2.0)).abs() < 1e-12);

        // at an atom: the tie counts as weakly below
        let mid = social_terms(2.0, &pop);
        assert!((mid.f_at - 2.0 / 3.0).abs() < 1e-12);
        assert!((mid.advantage - 1.0 / 3.0).abs() < 1e-12);
        assert!((mid.disadvantage - 1.0 / 3.0).abs() < 1e-12);
        assert!((mid.mean_consumption - 2.0).abs() < 1e-12);
    }

    #[test]
    fn added_atom_mass_is_extensive() {
        let pop = three_agents();
        let base = social_terms(2.5, &pop);
        let shifted = social_terms_shifted(2.5, &pop, 0.5, 4.0);
        assert!((shifted.mean_consumption - (base.mean_consumption + 2.0)).abs() < 1e-12);
        assert!((shifted.d_above - (base.d_above + 2.0)).abs() < 1e-12);
        assert!((shifted.above - (base.above + 0.5)).abs() < 1e-12);
        assert_eq!(shifted.f_at, base.f_at);
        assert_eq!(shifted.advantage, base.advantage);
        assert!(shifted.disadvantage > base.disadvantage);
    }
}
