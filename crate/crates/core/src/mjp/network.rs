//! Reaction networks with mass-action style hazards.

/// A Markov jump process on `S` species driven by `R` reactions.
///
/// The same hazard function serves the exact simulator (evaluated at integer
/// counts) and the linear noise approximation (evaluated at real-valued
/// means).
pub trait ReactionNetwork<const S: usize, const R: usize>: Sync {
    /// Change in species counts caused by each reaction, one row per reaction.
    fn stoichiometry(&self) -> [[i64; S]; R];
    /// Reaction rates at state `u`.
    fn hazards(&self, u: &[f64; S]) -> [f64; R];
    /// `∂h_r/∂u_j`, one row per reaction.
    fn hazard_jacobian(&self, u: &[f64; S]) -> [[f64; S]; R];
}

/// Predator–prey system: prey birth `c1·u1`, predation `c2·u1·u2`
/// (prey → predator), predator death `c3·u2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LotkaVolterra {
    pub c: [f64; 3],
}

impl ReactionNetwork<2, 3> for LotkaVolterra {
    fn stoichiometry(&self) -> [[i64; 2]; 3] {
        [[1, 0], [-1, 1], [0, -1]]
    }
    fn hazards(&self, u: &[f64; 2]) -> [f64; 3] {
        let [c1, c2, c3] = self.c;
        [c1 * u[0], c2 * u[0] * u[1], c3 * u[1]]
    }
    fn hazard_jacobian(&self, u: &[f64; 2]) -> [[f64; 2]; 3] {
        let [c1, c2, c3] = self.c;
        [[c1, 0.0], [c2 * u[1], c2 * u[0]], [0.0, c3]]
    }
}

/// One species with constant immigration `c1` and linear death `c2·u`.
/// Its LNA mean and variance have closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmigrationDeath {
    pub c1: f64,
    pub c2: f64,
}

impl ImmigrationDeath {
    /// LNA mean and variance after time `t` from `(z0, v0)`.
    pub fn moments(&self, z0: f64, v0: f64, t: f64) -> (f64, f64) {
        let a = self.c1 / self.c2;
        let b = z0 - a;
        let e1 = (-self.c2 * t).exp();
        let e2 = e1 * e1;
        (a + b * e1, v0 * e2 + a * (1.0 - e2) + b * (e1 - e2))
    }
}

impl ReactionNetwork<1, 2> for ImmigrationDeath {
    fn stoichiometry(&self) -> [[i64; 1]; 2] {
        [[1], [-1]]
    }
    fn hazards(&self, u: &[f64; 1]) -> [f64; 2] {
        [self.c1, self.c2 * u[0]]
    }
    fn hazard_jacobian(&self, _u: &[f64; 1]) -> [[f64; 1]; 2] {
        [[0.0], [self.c2]]
    }
}

/// A single switch between off (0) and on (1): on at rate `a` while off,
/// off at rate `b` while on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateSwitch {
    pub a: f64,
    pub b: f64,
}

impl TwoStateSwitch {
    /// Probability of being on at time `t` when starting from `start`.
    pub fn prob_on(&self, start: u64, t: f64) -> f64 {
        let r = self.a + self.b;
        let stationary = self.a / r;
        let p0 = if start == 1 { 1.0 } else { 0.0 };
        stationary + (p0 - stationary) * (-r * t).exp()
    }
}

impl ReactionNetwork<1, 2> for TwoStateSwitch {
    fn stoichiometry(&self) -> [[i64; 1]; 2] {
        [[1], [-1]]
    }
    fn hazards(&self, u: &[f64; 1]) -> [f64; 2] {
        [self.a * (1.0 - u[0]), self.b * u[0]]
    }
    fn hazard_jacobian(&self, _u: &[f64; 1]) -> [[f64; 1]; 2] {
        [[-self.a], [self.b]]
    }
}
