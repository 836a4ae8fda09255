//! Finite-horizon LQR tracking used to smooth projected trajectory targets.
//!
//! Dynamics (per axis, time step `d`):
//!
//! ```text
//! p[t+1] = p[t] + d v[t] + d^2 a[t]
//! v[t+1] = v[t] + d a[t]
//! ```
//!
//! Cost: sum over t = 1..T of |p[t] - target[t]|^2 plus `eta` times the
//! squared accelerations. The x and y axes decouple and are solved
//! independently by a backward Riccati recursion with an affine tracking
//! term; the result is the exact global minimizer.

use crate::geom::Vec2;

/// Planned trajectory: states at t = 1..T and the accelerations applied on
/// each transition. Satisfies the dynamics exactly from the initial state.
#[derive(Clone, Debug)]
pub struct LqrPlan {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub accelerations: Vec<Vec2>,
}

impl LqrPlan {
    /// Tracking-plus-acceleration cost of this plan against `targets`.
    pub fn cost(&self, targets: &[Vec2], eta: f64) -> f64 {
        let track: f64 = self
            .positions
            .iter()
            .zip(targets)
            .map(|(p, t)| (*p - *t).norm2())
            .sum();
        let accel: f64 = self.accelerations.iter().map(|a| a.norm2()).sum();
        track + eta * accel
    }
}

type M2 = [[f64; 2]; 2];
type V2 = [f64; 2];

fn mat_mul(a: M2, b: M2) -> M2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_t(a: M2) -> M2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn mat_vec(a: M2, v: V2) -> V2 {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

fn outer(a: V2, b: V2) -> M2 {
    [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
}

fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Exact minimizer of the tracking cost for one axis. Returns the feedback
/// gains `(K_t, k_t)` for t = 0..T-1.
fn backward_pass(targets: &[f64], d: f64, eta: f64) -> Vec<(V2, f64)> {
    let horizon = targets.len();
    let a_mat: M2 = [[1.0, d], [0.0, 1.0]];
    let b_vec: V2 = [d * d, d];
    let mut p_mat: M2 = [[0.0; 2]; 2];
    let mut q_vec: V2 = [0.0; 2];
    let mut gains = vec![([0.0; 2], 0.0); horizon];
    for t in (0..horizon).rev() {
        // Fold the stage cost at t+1 into the value function.
        let target = targets[t];
        let pt: M2 = [
            [p_mat[0][0] + 1.0, p_mat[0][1]],
            [p_mat[1][0], p_mat[1][1]],
        ];
        let qt: V2 = [q_vec[0] - 2.0 * target, q_vec[1]];

        let ptb = mat_vec(pt, b_vec);
        let s = eta + dot(b_vec, ptb);
        // K = -B' P A / s ; k = -B' q / (2 s)
        let bpa = mat_vec(mat_t(a_mat), ptb); // (B' P A)' = A' P' B = A' P B
        let k_gain: V2 = [-bpa[0] / s, -bpa[1] / s];
        let k_aff = -dot(b_vec, qt) / (2.0 * s);
        gains[t] = (k_gain, k_aff);

        // M = A + B K ; m = B k
        let m_mat: M2 = [
            [
                a_mat[0][0] + b_vec[0] * k_gain[0],
                a_mat[0][1] + b_vec[0] * k_gain[1],
            ],
            [
                a_mat[1][0] + b_vec[1] * k_gain[0],
                a_mat[1][1] + b_vec[1] * k_gain[1],
            ],
        ];
        let m_vec: V2 = [b_vec[0] * k_aff, b_vec[1] * k_aff];

        // P <- eta K'K + M' P M
        let mut p_next = mat_mul(mat_t(m_mat), mat_mul(pt, m_mat));
        let kk = outer(k_gain, k_gain);
        for i in 0..2 {
            for j in 0..2 {
                p_next[i][j] += eta * kk[i][j];
            }
        }
        // q <- 2 eta k K' + 2 M' P m + M' q
        let ptm = mat_vec(pt, m_vec);
        let mt = mat_t(m_mat);
        let mut q_next = mat_vec(mt, qt);
        let two_mptm = mat_vec(mt, ptm);
        q_next[0] += 2.0 * (eta * k_aff * k_gain[0] + two_mptm[0]);
        q_next[1] += 2.0 * (eta * k_aff * k_gain[1] + two_mptm[1]);

        p_mat = p_next;
        q_vec = q_next;
    }
    gains
}

/// Smooth `targets` (positions for t = 1..T) from initial position `p0` and
/// velocity `v0`. `eta` penalizes acceleration. Returns the exact global
/// minimizer of the tracking cost under the double-integrator dynamics.
pub fn lqr_smooth(p0: Vec2, v0: Vec2, targets: &[Vec2], dt: f64, eta: f64) -> LqrPlan {
    let horizon = targets.len();
    if horizon == 0 {
        return LqrPlan {
            positions: Vec::new(),
            velocities: Vec::new(),
            accelerations: Vec::new(),
        };
    }
    let tx: Vec<f64> = targets.iter().map(|t| t.x).collect();
    let ty: Vec<f64> = targets.iter().map(|t| t.y).collect();
    let gx = backward_pass(&tx, dt, eta);
    let gy = backward_pass(&ty, dt, eta);

    let mut plan = LqrPlan {
        positions: Vec::with_capacity(horizon),
        velocities: Vec::with_capacity(horizon),
        accelerations: Vec::with_capacity(horizon),
    };
    let (mut px, mut vx) = (p0.x, v0.x);
    let (mut py, mut vy) = (p0.y, v0.y);
    for t in 0..horizon {
        let ax = dot(gx[t].0, [px, vx]) + gx[t].1;
        let ay = dot(gy[t].0, [py, vy]) + gy[t].1;
        px = px + dt * vx + dt * dt * ax;
        vx += dt * ax;
        py = py + dt * vy + dt * dt * ay;
        vy += dt * ay;
        plan.accelerations.push(Vec2::new(ax, ay));
        plan.positions.push(Vec2::new(px, py));
        plan.velocities.push(Vec2::new(vx, vy));
    }
    plan
}
