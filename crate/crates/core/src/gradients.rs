//! Spatial delay gradients.
//!
//! The delay of a multipath component (MPC) is the distance between the
//! receiving agent and a virtual anchor divided by the speed of light. Its
//! gradient with respect to the agent, the transmitting node, or both at once
//! (monostatic) follows from the VA Jacobian, which is a rotation by twice
//! the effective wall angle composed with `Q` reflections.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geometry::{Point, VirtualAnchor, GEOMETRY_EPS};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Unit vector `[cos φ, sin φ]`.
#[inline]
pub fn unit(phi: f64) -> Vector2<f64> {
    Vector2::new(phi.cos(), phi.sin())
}

/// Rotation matrix by `angle`.
pub fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Propagation delay from a VA to the agent in seconds.
pub fn mpc_delay(agent: &Point, va: &VirtualAnchor) -> f64 {
    (agent - va.position).norm() / SPEED_OF_LIGHT
}

/// Jacobian `∂p_VA / ∂p_source` of a VA position with respect to the
/// position of its physical node.
pub fn va_jacobian(va: &VirtualAnchor) -> Matrix2<f64> {
    let flip = if va.order() % 2 == 0 {
        Matrix2::identity()
    } else {
        Matrix2::new(1.0, 0.0, 0.0, -1.0)
    };
    (rotation(2.0 * va.effective_angle) * flip).transpose()
}

/// One deterministic multipath component as seen by agent `agent`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpc {
    pub va: VirtualAnchor,
    /// Delay in seconds.
    pub delay: f64,
    /// Angle of `p_agent − p_VA`.
    pub angle: f64,
    /// Index of the receiving agent.
    pub agent: usize,
    /// Index of the node the VA belongs to.
    pub node: usize,
}

impl Mpc {
    pub fn new(agent_pos: &Point, agent: usize, va: VirtualAnchor) -> Result<Self> {
        let d = agent_pos - va.position;
        let distance = d.norm();
        if distance < GEOMETRY_EPS {
            return Err(Error::DegenerateGeometry { distance });
        }
        Ok(Self {
            delay: distance / SPEED_OF_LIGHT,
            angle: d.y.atan2(d.x),
            node: va.parent,
            va,
            agent,
        })
    }

    /// Path length in meters.
    pub fn distance(&self) -> f64 {
        self.delay * SPEED_OF_LIGHT
    }

    /// Direction `(−1)^Q φ + 2ν` of the anchor-side term.
    fn mirrored_angle(&self) -> f64 {
        let sign = if self.va.order() % 2 == 0 { 1.0 } else { -1.0 };
        sign * self.angle + 2.0 * self.va.effective_angle
    }
}

/// Gradient of the delay of `va` at `agent_pos` with respect to the position
/// of node `wrt`, where `agent` is the receiving agent and `node` the VA's
/// physical node. Nodes not involved in the link get a zero gradient.
pub fn delay_gradient(
    va: &VirtualAnchor,
    agent_pos: &Point,
    wrt: usize,
    agent: usize,
    node: usize,
) -> Result<Vector2<f64>> {
    let mpc = Mpc::new(agent_pos, agent, va.clone())?;
    let mut h = Vector2::zeros();
    if wrt == agent {
        h += unit(mpc.angle);
    }
    if wrt == node {
        h -= unit(mpc.mirrored_angle());
    }
    Ok(h / SPEED_OF_LIGHT)
}

/// Gradient with respect to the receiving agent: `e(φ)/c`.
pub fn gradient_agent(mpc: &Mpc) -> Vector2<f64> {
    unit(mpc.angle) / SPEED_OF_LIGHT
}

/// Gradient with respect to the transmitting node: `−e((−1)^Q φ + 2ν)/c`.
pub fn gradient_anchor(mpc: &Mpc) -> Vector2<f64> {
    -unit(mpc.mirrored_angle()) / SPEED_OF_LIGHT
}

/// Gradient of a monostatic MPC, where transmitter and receiver are the same
/// moving node. Requires at least one reflection.
pub fn gradient_mono(mpc: &Mpc) -> Result<Vector2<f64>> {
    if mpc.va.order() == 0 {
        return Err(Error::InvalidParameter(
            "monostatic gradient needs a reflected component (Q >= 1)".into(),
        ));
    }
    Ok((unit(mpc.angle) - unit(mpc.mirrored_angle())) / SPEED_OF_LIGHT)
}

/// The same monostatic gradient written as magnitude times direction, split
/// by the parity of the VA order.
pub fn gradient_mono_parity(mpc: &Mpc) -> Result<Vector2<f64>> {
    use std::f64::consts::FRAC_PI_2;
    if mpc.va.order() == 0 {
        return Err(Error::InvalidParameter(
            "monostatic gradient needs a reflected component (Q >= 1)".into(),
        ));
    }
    let nu = mpc.va.effective_angle;
    let phi = mpc.angle;
    let h = if mpc.va.order() % 2 == 0 {
        unit(phi + nu - FRAC_PI_2) * (2.0 * nu.sin())
    } else {
        unit(nu - FRAC_PI_2) * (2.0 * (nu - phi).sin())
    };
    Ok(h / SPEED_OF_LIGHT)
}

/// Which node a gradient matrix differentiates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientRole {
    /// Receiving agent (`G_T`).
    Agent,
    /// Transmitting node (`G_R`).
    Anchor,
    /// Transmitter and receiver are the same moving node (`G_M`).
    Monostatic,
}

/// Transposed gradients stacked row by row, one row per MPC (units s/m).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    pub rows: DMatrix<f64>,
    pub role: GradientRole,
}

impl GradientMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }
}

pub fn stack_gradients(mpcs: &[Mpc], role: GradientRole) -> Result<GradientMatrix> {
    let mut rows = DMatrix::zeros(mpcs.len(), 2);
    for (k, mpc) in mpcs.iter().enumerate() {
        let h = match role {
            GradientRole::Agent => gradient_agent(mpc),
            GradientRole::Anchor => gradient_anchor(mpc),
            GradientRole::Monostatic => gradient_mono(mpc)?,
        };
        rows[(k, 0)] = h.x;
        rows[(k, 1)] = h.y;
    }
    Ok(GradientMatrix { rows, role })
}

/// Place per-node gradient blocks into a `K × 2N` Jacobian; nodes without a
/// block get zero columns. Blocks for the same node are summed.
pub fn assemble_jacobian(blocks: &[(usize, &GradientMatrix)], num_nodes: usize) -> DMatrix<f64> {
    let k = blocks.first().map_or(0, |(_, g)| g.nrows());
    let mut h = DMatrix::zeros(k, 2 * num_nodes);
    for (node, g) in blocks {
        assert_eq!(g.nrows(), k, "gradient blocks must share the MPC count");
        let mut cols = h.columns_mut(2 * node, 2);
        cols += &g.rows;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_vas, mirror_point, Floorplan};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    const C: f64 = SPEED_OF_LIGHT;

    fn va_with(position: Point, walls: Vec<usize>, nu: f64) -> VirtualAnchor {
        VirtualAnchor { position, source: position, parent: 1, walls, effective_angle: nu }
    }

    fn mpc_at_angle(phi: f64, walls: Vec<usize>, nu: f64) -> Mpc {
        let va = va_with(Point::new(0.0, 0.0), walls, nu);
        Mpc::new(&Point::new(phi.cos() * 3.0, phi.sin() * 3.0), 0, va).unwrap()
    }

    #[test]
    fn delay_examples() {
        let va = VirtualAnchor::physical(Point::new(3.0, 4.0), 1);
        assert_abs_diff_eq!(mpc_delay(&Point::new(0.0, 0.0), &va), 5.0 / C, epsilon = 1e-24);
        assert!((5.0 / C - 1.6678e-8).abs() < 1e-12);
        assert_eq!(mpc_delay(&Point::new(3.0, 4.0), &va), 0.0);
        let va = VirtualAnchor::physical(Point::new(10.0, 7.0 + C * 1e-9), 1);
        assert_abs_diff_eq!(mpc_delay(&Point::new(10.0, 7.0), &va), 1e-9, epsilon = 1e-20);
    }

    #[test]
    fn jacobian_examples() {
        let q0 = VirtualAnchor::physical(Point::new(1.0, 1.0), 0);
        assert_abs_diff_eq!(va_jacobian(&q0), Matrix2::identity());
        let q1 = va_with(Point::new(1.0, -1.0), vec![0], 0.0);
        assert_abs_diff_eq!(va_jacobian(&q1).transpose(), Matrix2::new(1.0, 0.0, 0.0, -1.0));
        let q2 = va_with(Point::new(1.0, 1.0), vec![0, 1], 0.0);
        assert_abs_diff_eq!(va_jacobian(&q2), Matrix2::identity());
    }

    /// Composes two mirror maps across parallel walls numerically (by
    /// differencing images of unit displacements) and compares with the
    /// closed-form Jacobian.
    #[test]
    fn jacobian_matches_composed_mirrors() {
        let plan = Floorplan::rectangle(0.0, 0.0, 10.0, 7.2).unwrap();
        let p = Point::new(3.0, 2.0);
        for va in build_vas(p, 0, &plan, 2) {
            let image = |x: Point| {
                va.walls.iter().fold(x, |acc, &w| mirror_point(&acc, &plan.walls()[w]))
            };
            let base = image(p);
            let jx = image(p + Vector2::new(1.0, 0.0)) - base;
            let jy = image(p + Vector2::new(0.0, 1.0)) - base;
            let numeric = Matrix2::from_columns(&[jx, jy]);
            assert_abs_diff_eq!(numeric, va_jacobian(&va), epsilon = 1e-12);
            let det = va_jacobian(&va).determinant();
            assert_abs_diff_eq!(det, if va.order() % 2 == 0 { 1.0 } else { -1.0 }, epsilon = 1e-12);
        }
    }

    #[test]
    fn general_gradient_examples() {
        let va = va_with(Point::new(0.0, 0.0), vec![], 0.0);
        let agent = Point::new(2.0, 0.0);
        let h = delay_gradient(&va, &agent, 0, 0, 1).unwrap();
        assert_abs_diff_eq!(h, Vector2::new(1.0 / C, 0.0), epsilon = 1e-24);
        let h = delay_gradient(&va, &agent, 1, 0, 1).unwrap();
        assert_abs_diff_eq!(h, -unit(0.0) / C, epsilon = 1e-24);
        let h = delay_gradient(&va, &agent, 5, 0, 1).unwrap();
        assert_eq!(h, Vector2::zeros());
        // monostatic, parallel walls
        let va = va_with(Point::new(0.0, 0.0), vec![0, 2], 0.0);
        let h = delay_gradient(&va, &Point::new(1.0, 2.0), 0, 0, 0).unwrap();
        assert_abs_diff_eq!(h, Vector2::zeros(), epsilon = 1e-24);
    }

    #[test]
    fn coincident_agent_is_degenerate() {
        let va = va_with(Point::new(1.0, 1.0), vec![], 0.0);
        assert!(matches!(
            delay_gradient(&va, &Point::new(1.0, 1.0), 0, 0, 1),
            Err(Error::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn agent_gradient_examples() {
        assert_abs_diff_eq!(gradient_agent(&mpc_at_angle(FRAC_PI_2, vec![], 0.0)), Vector2::new(0.0, 1.0 / C), epsilon = 1e-24);
        assert_abs_diff_eq!(gradient_agent(&mpc_at_angle(PI, vec![], 0.0)), Vector2::new(-1.0 / C, 0.0), epsilon = 1e-24);
        for phi in [0.1, 1.3, -2.9, 3.0] {
            assert_abs_diff_eq!(gradient_agent(&mpc_at_angle(phi, vec![], 0.0)).norm(), 1.0 / C, epsilon = 1e-24);
        }
    }

    #[test]
    fn anchor_gradient_los() {
        let m = mpc_at_angle(0.7, vec![], 0.0);
        assert_abs_diff_eq!(gradient_anchor(&m), unit(0.7 + PI) / C, epsilon = 1e-22);
    }

    /// Reverse link: mirror the agent instead of the anchor and read off the
    /// direction from the agent's VA to the anchor.
    #[test]
    fn anchor_gradient_equals_reverse_link() {
        let plan = Floorplan::rectangle(0.0, 0.0, 10.0, 7.2).unwrap();
        let anchor = Point::new(2.0, 1.0);
        let agent = Point::new(6.0, 3.0);
        let va = build_vas(anchor, 1, &plan, 1).into_iter().find(|v| v.walls == [0]).unwrap();
        let m = Mpc::new(&agent, 0, va).unwrap();
        let agent_image = mirror_point(&agent, &plan.walls()[0]);
        let d = anchor - agent_image;
        let expected = unit(d.y.atan2(d.x)) / C;
        assert_abs_diff_eq!(gradient_anchor(&m), expected, epsilon = 1e-22);
        assert_abs_diff_eq!(gradient_anchor(&m).norm(), 1.0 / C, epsilon = 1e-24);
    }

    #[test]
    fn monostatic_specials() {
        // single reflection with the wall perpendicular to the path
        for phi in [0.3, -1.2, 2.5] {
            let m = mpc_at_angle(phi, vec![0], phi + FRAC_PI_2);
            assert_abs_diff_eq!(gradient_mono(&m).unwrap(), unit(phi) * 2.0 / C, epsilon = 1e-22);
            let m = mpc_at_angle(phi, vec![0], phi - FRAC_PI_2);
            assert_abs_diff_eq!(gradient_mono(&m).unwrap(), unit(phi) * 2.0 / C, epsilon = 1e-22);
            // rectangular corner
            for nu in [FRAC_PI_2, -FRAC_PI_2] {
                let m = mpc_at_angle(phi, vec![0, 1], nu);
                assert_abs_diff_eq!(gradient_mono(&m).unwrap(), unit(phi) * 2.0 / C, epsilon = 1e-22);
            }
            let m = mpc_at_angle(phi, vec![0, 2], 0.0);
            assert_abs_diff_eq!(gradient_mono(&m).unwrap(), Vector2::zeros(), epsilon = 1e-24);
        }
        assert!(gradient_mono(&mpc_at_angle(0.3, vec![], 0.0)).is_err());
    }

    #[test]
    fn stacked_rows() {
        let mpcs: Vec<Mpc> = [0.1, 1.0, 2.0].iter().map(|&p| mpc_at_angle(p, vec![], 0.0)).collect();
        let g = stack_gradients(&mpcs[..1], GradientRole::Agent).unwrap();
        assert_eq!(g.rows.shape(), (1, 2));
        assert_abs_diff_eq!(g.rows[(0, 0)], 0.1f64.cos() / C);
        let g = stack_gradients(&mpcs, GradientRole::Agent).unwrap();
        for r in 0..3 {
            assert_abs_diff_eq!(g.rows.row(r).norm(), 1.0 / C, epsilon = 1e-24);
        }
    }

    #[test]
    fn cooperative_block_layout() {
        let mpcs: Vec<Mpc> = [0.1, 1.0].iter().map(|&p| mpc_at_angle(p, vec![0], 0.4)).collect();
        let gt = stack_gradients(&mpcs, GradientRole::Agent).unwrap();
        let gr = stack_gradients(&mpcs, GradientRole::Anchor).unwrap();
        let h = assemble_jacobian(&[(2, &gt), (0, &gr)], 3);
        assert_eq!(h.shape(), (2, 6));
        assert_eq!(h.columns(4, 2), gt.rows);
        assert_eq!(h.columns(0, 2), gr.rows);
        assert!(h.columns(2, 2).iter().all(|&v| v == 0.0));
    }
}
