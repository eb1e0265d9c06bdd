//! Annealed (mean-field) theory of message passing under the ε-process.
//!
//! All maps use `f = (m v - 1)/(v^s - 1)`. `p` denotes the average belief in
//! the correct symbol; upward messages iterate `p' = F_up(p)` from the leaves,
//! downward messages `q' = F_down(q, p)` from the root.

mod phase;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rhm::RhmParams;

pub use phase::{inference_verdict, phase_diagram, PhaseCell, PhaseDiagramConfig};

pub const BISECTION_TOL: f64 = 1e-12;
pub const BISECTION_MAX_ITER: usize = 200;
pub const BRACKET_MARGIN: f64 = 1e-9;

/// Parameters entering the closed-form maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub v: f64,
    pub s: i32,
    pub m: f64,
    pub f: f64,
    /// `F'(1) < 1`, decided in integers: `F'(1) = s m (v-1)/(v^s - 1)`.
    pub bistable: bool,
}

impl MeanField {
    pub fn new(params: &RhmParams) -> Self {
        let slope_num = params.s() as u128 * params.m() as u128 * (params.v() as u128 - 1);
        MeanField {
            v: params.v() as f64,
            s: params.s() as i32,
            m: params.m() as f64,
            f: params.f_exact(),
            bistable: slope_num < params.tuple_space() as u128 - 1,
        }
    }

    fn mv1(&self) -> f64 {
        self.m * self.v - 1.0
    }

    /// Upward map `F(p) = (p^s + f (m-1)/(mv-1) (1 - p^s)) / (p^s + f (1 - p^s))`.
    pub fn f_up(&self, p: f64) -> f64 {
        let ps = p.powi(self.s);
        let c = self.f * (self.m - 1.0) / self.mv1();
        (ps + c * (1.0 - ps)) / (ps + self.f * (1.0 - ps))
    }

    /// `F'(p) = m(v-1)/(mv-1) * f s p^(s-1) / (p^s + f(1-p^s))^2`.
    pub fn f_up_derivative(&self, p: f64) -> f64 {
        let ps = p.powi(self.s);
        let den = ps + self.f * (1.0 - ps);
        self.m * (self.v - 1.0) / self.mv1() * self.f * self.s as f64 * p.powi(self.s - 1) / (den * den)
    }

    /// Downward map for a child given the parent's downward belief `q` and the
    /// siblings' upward belief `p`.
    pub fn f_down(&self, q: f64, p: f64) -> f64 {
        let ps1 = p.powi(self.s - 1);
        let k = self.f * (self.m - q) / self.mv1();
        let num = q * ps1 + k * (1.0 - ps1);
        num / (num + (self.v - 1.0) * k)
    }

    /// `F'(1) = f s m (v-1)/(mv-1)`; the map is bistable iff this is below 1.
    pub fn slope_at_one(&self) -> f64 {
        self.f_up_derivative(1.0)
    }

    pub fn is_bistable(&self) -> bool {
        self.bistable
    }

    /// Initial leaf belief `1 - ε + ε/v`.
    pub fn leaf_belief(&self, eps: f64) -> f64 {
        1.0 - eps + eps / self.v
    }

    /// Upward and downward layer profiles at noise `eps` for a depth-`depth` tree.
    pub fn iterate_profiles(&self, eps: f64, depth: usize) -> MeanFieldState {
        let mut p_up = Vec::with_capacity(depth + 1);
        p_up.push(self.leaf_belief(eps));
        for l in 0..depth {
            p_up.push(self.f_up(p_up[l]));
        }
        let mut p_down = vec![0.0; depth + 1];
        p_down[depth] = 1.0 / self.v;
        for l in (0..depth).rev() {
            p_down[l] = self.f_down(p_down[l + 1], p_up[l]);
        }
        let p = p_up.iter().zip(&p_down).map(|(&u, &d)| combine_marginal(u, d, self.v)).collect();
        MeanFieldState { eps, p_up, p_down, p }
    }

    /// `depth`-fold iterate of the upward map from the leaf belief.
    pub fn class_belief(&self, eps: f64, depth: usize) -> f64 {
        (0..depth).fold(self.leaf_belief(eps), |p, _| self.f_up(p))
    }

    pub fn fixed_points(&self) -> FixedPointReport {
        let stability = |p: f64| {
            if self.f_up_derivative(p).abs() < 1.0 {
                Stability::Attractive
            } else {
                Stability::Repulsive
            }
        };
        let uniform = 1.0 / self.v;
        let mut points = vec![
            FixedPoint { p: uniform, stability: stability(uniform) },
            FixedPoint { p: 1.0, stability: stability(1.0) },
        ];
        let slope_at_one = self.slope_at_one();
        let interior = if self.bistable { self.interior_fixed_point() } else { None };
        if let Some(p) = interior {
            points.insert(1, FixedPoint { p, stability: stability(p) });
        }
        FixedPointReport { points, slope_at_one, bistable: self.bistable, interior }
    }

    /// Root of `F(p) - p` on `(1/v, 1)` by bisection.
    fn interior_fixed_point(&self) -> Option<f64> {
        let g = |p: f64| self.f_up(p) - p;
        let (mut lo, mut hi) = (1.0 / self.v + BRACKET_MARGIN, 1.0 - BRACKET_MARGIN);
        let (glo, ghi) = (g(lo), g(hi));
        if glo.signum() == ghi.signum() {
            return None;
        }
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..BISECTION_MAX_ITER {
            mid = 0.5 * (lo + hi);
            let gm = g(mid);
            if gm == 0.0 || (gm.abs() < BISECTION_TOL && hi - lo <= f64::EPSILON) {
                break;
            }
            if gm.signum() == glo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(mid)
    }

    /// Infinite-depth critical noise: the ε whose leaf belief sits on the
    /// separatrix, `ε* = (1 - p*) v/(v - 1)`.
    pub fn critical_epsilon(&self) -> Result<f64> {
        let report = self.fixed_points();
        let p = report.interior.ok_or(Error::NotBistable { slope: report.slope_at_one })?;
        Ok((1.0 - p) * self.v / (self.v - 1.0))
    }

    /// Finite-depth critical noise on a grid: the smallest positive grid ε at
    /// which the class belief after `depth` upward steps no longer exceeds
    /// the leaf belief. `None` if inference holds on the whole grid.
    pub fn critical_epsilon_finite(&self, depth: usize, grid: &[f64]) -> Result<Option<f64>> {
        if !self.is_bistable() {
            return Err(Error::NotBistable { slope: self.slope_at_one() });
        }
        Ok(grid.iter().copied().find(|&eps| !inference_verdict(self.class_belief(eps, depth), eps, self.v)))
    }
}

/// Marginal of the correct value from averaged upward and downward beliefs.
pub fn combine_marginal(p_up: f64, p_down: f64, v: f64) -> f64 {
    let a = p_up * p_down;
    a / (a + (1.0 - p_up) * (1.0 - p_down) / (v - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub eps: f64,
    pub p_up: Vec<f64>,
    pub p_down: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Attractive,
    Repulsive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub p: f64,
    pub stability: Stability,
}

/// Fixed points in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub points: Vec<FixedPoint>,
    pub slope_at_one: f64,
    pub bistable: bool,
    /// The separatrix, present only in the bistable regime.
    pub interior: Option<f64>,
}

/// `(p, F(p))` on `n` evenly spaced points of `[1/v, 1]`.
pub fn iteration_map(mf: &MeanField, n: usize) -> Vec<(f64, f64)> {
    let lo = 1.0 / mf.v;
    (0..n)
        .map(|i| {
            let p = if n == 1 { lo } else { lo + (1.0 - lo) * i as f64 / (n - 1) as f64 };
            (p, mf.f_up(p))
        })
        .collect()
}
