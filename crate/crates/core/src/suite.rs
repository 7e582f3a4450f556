//! Built-in problem instances.
//!
//! * `examp1` .. `examp5`: one-dimensional illustrative games (three
//!   quadratics, the null-Hessian vaccine game, a cubic).
//! * `nodescent`: a game where the untruncated Newton direction is not a
//!   descent direction for player 1 at the origin.
//! * `facility1d`, `facility2d`: competitive facility location with
//!   proximity-share objectives.
//! * `quadratic:<seed>:<n1>x<n2>`: random strictly convex quadratic games.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NepError, Result};
use crate::linalg::{lu_solve, DenseMatrix};
use crate::problem::NepProblem;

fn s(x: &[f64]) -> f64 {
    x[0]
}

/// Builds one of the five illustrative one-dimensional games.
pub fn make_example(id: usize) -> Result<NepProblem> {
    let p = match id {
        1 => NepProblem::new(
            "examp1",
            1,
            1,
            |a, b| s(a) * s(a) + s(a) * s(b) - 5.0 * s(a),
            |a, b| 1.5 * s(b) * s(b) - s(a) * s(b) - s(b),
        )?
        .with_grad1(|a, b| vec![2.0 * s(a) + s(b) - 5.0])
        .with_grad2(|a, b| vec![3.0 * s(b) - s(a) - 1.0])
        .with_hess11(|_, _| DenseMatrix::scalar(2.0))
        .with_hess22(|_, _| DenseMatrix::scalar(3.0))
        .with_hess12_f1(|_, _| DenseMatrix::scalar(1.0))
        .with_hess21_f2(|_, _| DenseMatrix::scalar(-1.0)),
        2 => NepProblem::new(
            "examp2",
            1,
            1,
            |a, b| s(a) * s(a) / 4.0 + s(a) * s(b) - 5.0 * s(a),
            |a, b| s(b) * s(b) / 6.0 - s(a) * s(b) - s(b),
        )?
        .with_grad1(|a, b| vec![s(a) / 2.0 + s(b) - 5.0])
        .with_grad2(|a, b| vec![s(b) / 3.0 - s(a) - 1.0])
        .with_hess11(|_, _| DenseMatrix::scalar(0.5))
        .with_hess22(|_, _| DenseMatrix::scalar(1.0 / 3.0))
        .with_hess12_f1(|_, _| DenseMatrix::scalar(1.0))
        .with_hess21_f2(|_, _| DenseMatrix::scalar(-1.0)),
        3 => NepProblem::new(
            "examp3",
            1,
            1,
            |a, b| s(a) * s(a) + s(a) * s(b) - 5.0 * s(a),
            |a, b| -1.5 * s(b) * s(b) - s(a) * s(b) - s(b),
        )?
        .with_grad1(|a, b| vec![2.0 * s(a) + s(b) - 5.0])
        .with_grad2(|a, b| vec![-3.0 * s(b) - s(a) - 1.0])
        .with_hess11(|_, _| DenseMatrix::scalar(2.0))
        .with_hess22(|_, _| DenseMatrix::scalar(-3.0))
        .with_hess12_f1(|_, _| DenseMatrix::scalar(1.0))
        .with_hess21_f2(|_, _| DenseMatrix::scalar(-1.0)),
        4 => NepProblem::new(
            "examp4",
            1,
            1,
            |a, b| -s(a) * (0.6 - s(b)),
            |a, b| s(b) * (0.7 - s(a)),
        )?
        .with_grad1(|_, b| vec![s(b) - 0.6])
        .with_grad2(|a, _| vec![0.7 - s(a)])
        .with_hess11(|_, _| DenseMatrix::scalar(0.0))
        .with_hess22(|_, _| DenseMatrix::scalar(0.0))
        .with_hess12_f1(|_, _| DenseMatrix::scalar(1.0))
        .with_hess21_f2(|_, _| DenseMatrix::scalar(-1.0)),
        5 => NepProblem::new(
            "examp5",
            1,
            1,
            |a, b| s(a).powi(3) * s(b).powi(2) / 3.0 + s(a) * s(a) / 2.0,
            |a, b| s(a).powi(2) * s(b).powi(3) / 3.0 + s(b) * s(b) / 2.0,
        )?
        .with_grad1(|a, b| vec![s(a) * s(a) * s(b) * s(b) + s(a)])
        .with_grad2(|a, b| vec![s(a) * s(a) * s(b) * s(b) + s(b)])
        .with_hess11(|a, b| DenseMatrix::scalar(2.0 * s(a) * s(b) * s(b) + 1.0))
        .with_hess22(|a, b| DenseMatrix::scalar(2.0 * s(a) * s(a) * s(b) + 1.0))
        .with_hess12_f1(|a, b| DenseMatrix::scalar(2.0 * s(a) * s(a) * s(b)))
        .with_hess21_f2(|a, b| DenseMatrix::scalar(2.0 * s(a) * s(b) * s(b))),
        _ => return Err(NepError::UnknownProblem(format!("examp{id}"))),
    };
    Ok(p)
}

/// `f1 = x1^2/2 + (x2^2 + 2 x2 + 1) x1`, `f2 = (x2 + 2)^2 / 2`. At the
/// origin the full Newton direction is `(3, -2)` and is uphill for player 1
/// at the predicted point.
pub fn make_nondescent_example() -> NepProblem {
    NepProblem::new(
        "nodescent",
        1,
        1,
        |a, b| 0.5 * s(a) * s(a) + (s(b) * s(b) + 2.0 * s(b) + 1.0) * s(a),
        |_, b| 0.5 * (s(b) + 2.0).powi(2),
    )
    .expect("static dimensions")
    .with_grad1(|a, b| vec![s(a) + s(b) * s(b) + 2.0 * s(b) + 1.0])
    .with_grad2(|_, b| vec![s(b) + 2.0])
    .with_hess11(|_, _| DenseMatrix::scalar(1.0))
    .with_hess22(|_, _| DenseMatrix::scalar(1.0))
    .with_hess12_f1(|_, b| DenseMatrix::scalar(2.0 * s(b) + 2.0))
    .with_hess21_f2(|_, _| DenseMatrix::scalar(0.0))
}

/// Clients and per-player profits of a facility location game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityInstance {
    pub dim: usize,
    pub clients: Vec<Vec<f64>>,
    pub profits1: Vec<f64>,
    pub profits2: Vec<f64>,
}

impl FacilityInstance {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(NepError::InvalidConfig("facility dimension must be positive".into()));
        }
        if self.clients.is_empty() {
            return Err(NepError::InvalidConfig("facility instance needs at least one client".into()));
        }
        if self.clients.iter().any(|z| z.len() != self.dim) {
            return Err(NepError::InvalidConfig("client coordinates do not match dimension".into()));
        }
        if self.profits1.len() != self.clients.len() || self.profits2.len() != self.clients.len() {
            return Err(NepError::InvalidConfig("profit lists must match client count".into()));
        }
        if self.profits1.iter().chain(&self.profits2).any(|&b| !(b > 0.0)) {
            return Err(NepError::InvalidConfig("profits must be positive".into()));
        }
        Ok(())
    }

    /// Three clients at 1, -1, 3 with unit profits.
    pub fn line_three_clients() -> Self {
        Self {
            dim: 1,
            clients: vec![vec![1.0], vec![-1.0], vec![3.0]],
            profits1: vec![1.0; 3],
            profits2: vec![1.0; 3],
        }
    }

    /// Four clients on the unit circle axes with asymmetric profits.
    pub fn plane_four_clients() -> Self {
        Self {
            dim: 2,
            clients: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            profits1: vec![1.0, 2.0, 1.0, 1.0],
            profits2: vec![1.0, 2.0, 2.0, 3.0],
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Expected lost revenue of the player at `own` against `other`:
/// `sum_j b_j |own - z_j|^2 / (|own - z_j|^2 + |other - z_j|^2)`.
/// NaN where both facilities sit on the same client.
fn facility_cost(clients: &[Vec<f64>], profits: &[f64], own: &[f64], other: &[f64]) -> f64 {
    clients
        .iter()
        .zip(profits)
        .map(|(z, b)| {
            let a = sq_dist(own, z);
            b * a / (a + sq_dist(other, z))
        })
        .sum()
}

fn facility_gradient(clients: &[Vec<f64>], profits: &[f64], own: &[f64], other: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; own.len()];
    for (z, b) in clients.iter().zip(profits) {
        let a = sq_dist(own, z);
        let c = sq_dist(other, z);
        let w = b * 2.0 * c / ((a + c) * (a + c));
        for (gk, (xk, zk)) in g.iter_mut().zip(own.iter().zip(z)) {
            *gk += w * (xk - zk);
        }
    }
    g
}

/// Facility location game. Gradients are analytic; all Hessian blocks are
/// forward differences of the analytic gradients.
pub fn make_facility(instance: &FacilityInstance) -> Result<NepProblem> {
    instance.validate()?;
    let name = format!("facility{}d", instance.dim);
    let (c1, b1) = (instance.clients.clone(), instance.profits1.clone());
    let (c2, b2) = (instance.clients.clone(), instance.profits2.clone());
    let (gc1, gb1) = (c1.clone(), b1.clone());
    let (gc2, gb2) = (c2.clone(), b2.clone());
    Ok(NepProblem::new(
        name,
        instance.dim,
        instance.dim,
        move |x1, x2| facility_cost(&c1, &b1, x1, x2),
        move |x1, x2| facility_cost(&c2, &b2, x2, x1),
    )?
    .with_grad1(move |x1, x2| facility_gradient(&gc1, &gb1, x1, x2))
    .with_grad2(move |x1, x2| facility_gradient(&gc2, &gb2, x2, x1)))
}

pub fn make_facility_2d() -> NepProblem {
    make_facility(&FacilityInstance::plane_four_clients()).expect("valid built-in instance")
}

/// `f_i = x_i^T A_i x_i / 2 + (B_i x_{-i} - c_i)^T x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticNep {
    pub a1: DenseMatrix,
    pub a2: DenseMatrix,
    /// n1 x n2
    pub b1: DenseMatrix,
    /// n2 x n1
    pub b2: DenseMatrix,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl QuadraticNep {
    pub fn n1(&self) -> usize {
        self.c1.len()
    }

    pub fn n2(&self) -> usize {
        self.c2.len()
    }

    /// `[A1, B1; B2, A2]`.
    pub fn full_matrix(&self) -> DenseMatrix {
        let (n1, n2) = (self.n1(), self.n2());
        DenseMatrix::from_fn(n1 + n2, n1 + n2, |i, j| match (i < n1, j < n1) {
            (true, true) => self.a1[(i, j)],
            (true, false) => self.b1[(i, j - n1)],
            (false, true) => self.b2[(i - n1, j)],
            (false, false) => self.a2[(i - n1, j - n1)],
        })
    }

    /// The unique stationary point, from a dense solve of the full system.
    pub fn equilibrium(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let rhs: Vec<f64> = self.c1.iter().chain(&self.c2).copied().collect();
        let mut x = lu_solve(&self.full_matrix(), &rhs)?;
        let x2 = x.split_off(self.n1());
        Ok((x, x2))
    }

    pub fn to_problem(&self, name: impl Into<String>) -> NepProblem {
        let q1 = self.clone();
        let q2 = self.clone();
        let g1 = self.clone();
        let g2 = self.clone();
        let (a1, a2, b1, b2) = (self.a1.clone(), self.a2.clone(), self.b1.clone(), self.b2.clone());
        NepProblem::new(
            name,
            self.n1(),
            self.n2(),
            move |x1, x2| q1.f1(x1, x2),
            move |x1, x2| q2.f2(x1, x2),
        )
        .expect("generator guarantees positive dimensions")
        .with_grad1(move |x1, x2| g1.grad1(x1, x2))
        .with_grad2(move |x1, x2| g2.grad2(x1, x2))
        .with_hess11(move |_, _| a1.clone())
        .with_hess22(move |_, _| a2.clone())
        .with_hess12_f1(move |_, _| b1.clone())
        .with_hess21_f2(move |_, _| b2.clone())
    }

    fn f1(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let ax = self.a1.mul_vec(x1).expect("dims");
        let bx = self.b1.mul_vec(x2).expect("dims");
        x1.iter()
            .enumerate()
            .map(|(i, &v)| 0.5 * v * ax[i] + (bx[i] - self.c1[i]) * v)
            .sum()
    }

    fn f2(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let ax = self.a2.mul_vec(x2).expect("dims");
        let bx = self.b2.mul_vec(x1).expect("dims");
        x2.iter()
            .enumerate()
            .map(|(i, &v)| 0.5 * v * ax[i] + (bx[i] - self.c2[i]) * v)
            .sum()
    }

    fn grad1(&self, x1: &[f64], x2: &[f64]) -> Vec<f64> {
        let ax = self.a1.mul_vec(x1).expect("dims");
        let bx = self.b1.mul_vec(x2).expect("dims");
        (0..self.n1()).map(|i| ax[i] + bx[i] - self.c1[i]).collect()
    }

    fn grad2(&self, x1: &[f64], x2: &[f64]) -> Vec<f64> {
        let ax = self.a2.mul_vec(x2).expect("dims");
        let bx = self.b2.mul_vec(x1).expect("dims");
        (0..self.n2()).map(|i| ax[i] + bx[i] - self.c2[i]).collect()
    }
}

const MAX_GENERATION_ATTEMPTS: usize = 100;

/// Minimum `sigma_min / sigma_max` accepted for the full matrix.
const FULL_MATRIX_MIN_RCOND: f64 = 1e-8;

fn random_spd(rng: &mut ChaCha8Rng, n: usize, conditioning: f64) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = g.to_nalgebra().qr().q();
    let eigs: Vec<f64> = (0..n)
        .map(|i| match (n, i) {
            (1, _) => rng.random_range(1.0..=conditioning),
            (_, 0) => 1.0,
            (_, 1) => conditioning,
            _ => rng.random_range(1.0..=conditioning),
        })
        .collect();
    let m = DenseMatrix::from_fn(n, n, |i, j| (0..n).map(|k| q[(i, k)] * eigs[k] * q[(j, k)]).sum());
    m.symmetrized()
}

/// Random strictly convex quadratic game. `A_i` are SPD with eigenvalues in
/// `[1, spd_conditioning]`; `B_i` and `c_i` are uniform on `[-1, 1]`. The
/// coupling blocks are redrawn until the full matrix is well away from
/// singular.
pub fn random_quadratic_nep(n1: usize, n2: usize, seed: u64, spd_conditioning: f64) -> Result<QuadraticNep> {
    if n1 == 0 || n2 == 0 {
        return Err(NepError::InvalidConfig("player dimensions must be at least 1".into()));
    }
    if !(spd_conditioning >= 1.0) {
        return Err(NepError::InvalidConfig(format!(
            "spd conditioning must be at least 1, got {spd_conditioning}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a1 = random_spd(&mut rng, n1, spd_conditioning);
    let a2 = random_spd(&mut rng, n2, spd_conditioning);
    let c1: Vec<f64> = (0..n1).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c2: Vec<f64> = (0..n2).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let b1 = DenseMatrix::from_fn(n1, n2, |_, _| rng.random_range(-1.0..1.0));
        let b2 = DenseMatrix::from_fn(n2, n1, |_, _| rng.random_range(-1.0..1.0));
        let q = QuadraticNep { a1: a1.clone(), a2: a2.clone(), b1, b2, c1: c1.clone(), c2: c2.clone() };
        let full = q.full_matrix();
        if full.min_singular_value() >= FULL_MATRIX_MIN_RCOND * full.spectral_norm() {
            return Ok(q);
        }
    }
    Err(NepError::GenerationFailure(MAX_GENERATION_ATTEMPTS))
}

/// Conditioning used for `quadratic:` identifiers.
pub const DEFAULT_QUADRATIC_CONDITIONING: f64 = 10.0;

/// Resolves a problem identifier as accepted by the command line.
pub fn resolve_problem(id: &str) -> Result<NepProblem> {
    let unknown = || NepError::UnknownProblem(id.to_string());
    match id {
        "examp1" | "examp2" | "examp3" | "examp4" | "examp5" => make_example(id[5..].parse().map_err(|_| unknown())?),
        "nodescent" => Ok(make_nondescent_example()),
        "facility1d" => make_facility(&FacilityInstance::line_three_clients()),
        "facility2d" => Ok(make_facility_2d()),
        _ => {
            let rest = id.strip_prefix("quadratic:").ok_or_else(unknown)?;
            let (seed, dims) = rest.split_once(':').ok_or_else(unknown)?;
            let (n1, n2) = dims.split_once('x').ok_or_else(unknown)?;
            let seed: u64 = seed.parse().map_err(|_| unknown())?;
            let n1: usize = n1.parse().map_err(|_| unknown())?;
            let n2: usize = n2.parse().map_err(|_| unknown())?;
            if n1 == 0 || n2 == 0 {
                return Err(unknown());
            }
            Ok(random_quadratic_nep(n1, n2, seed, DEFAULT_QUADRATIC_CONDITIONING)?.to_problem(id))
        }
    }
}

/// Conventional starting point for a built-in problem: `(-5, 1)` for the
/// illustrative games, `(2, 1)` for the 1D facility game, `((2, 3), (-3, 2))`
/// for the 2D one, and `(-5 * 1, 1)` for random quadratics.
pub fn default_start(problem: &NepProblem) -> (Vec<f64>, Vec<f64>) {
    match problem.name() {
        "facility1d" => (vec![2.0], vec![1.0]),
        "facility2d" => (vec![2.0, 3.0], vec![-3.0, 2.0]),
        _ => (vec![-5.0; problem.n1()], vec![1.0; problem.n2()]),
    }
}
