//! Articulated planar dynamics and the contact integrator.
//!
//! Equations of motion are assembled per step from the partial velocities of
//! each body (trunk, two thighs, two shanks):
//!
//! ```text
//! M(q) q̈ = Σ Jᵢᵀ mᵢ (g − bᵢ) + τ + Σ J_footᵀ F_contact
//! ```
//!
//! where `bᵢ` is the velocity-product (centripetal) acceleration of body `i`.
//! Time stepping is a kick-drift-kick scheme; contact springs are treated
//! implicitly in the first half kick and contact damping and friction
//! implicitly in both, which keeps the stiff ground stable at the 2 ms step.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};

use super::payload::{effective_inertia, MassProperties, PayloadState};
use super::terrain::TerrainProfile;
use super::{ContactReport, FootContact, RobotModel, RobotState, SimConfig, SimError, NUM_DOF, NUM_JOINTS};

type Vec7 = SVector<f64, NUM_DOF>;
type Mat7 = SMatrix<f64, NUM_DOF, NUM_DOF>;
type Jac = SMatrix<f64, 2, NUM_DOF>;

/// Index of the pitch coordinate.
const PITCH: usize = 2;

fn hip_dof(leg: usize) -> usize {
    3 + 2 * leg
}

fn rot(angle: f64, local: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = libm::sincos(angle);
    Vector2::new(c * local.x - s * local.y, s * local.x + c * local.y)
}

/// d/dθ of `rot(θ, r)`.
fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

#[derive(Debug, Clone, Copy)]
struct PointKinematics {
    pos: Vector2<f64>,
    jac: Jac,
    /// Acceleration of the point when q̈ = 0.
    bias: Vector2<f64>,
}

impl PointKinematics {
    fn velocity(&self, v: &Vec7) -> Vector2<f64> {
        self.jac * v
    }
}

/// A point `hip_x` along the trunk, then `along_thigh` down the thigh and
/// `along_shank` down the shank of `leg`. With both lengths zero this is a
/// point fixed on the trunk.
fn chain_point(q: &Vec7, v: &Vec7, leg: usize, hip_x: f64, along_thigh: f64, along_shank: f64) -> PointKinematics {
    let h = hip_dof(leg);
    let trunk_angle = q[PITCH];
    let thigh_angle = trunk_angle + q[h];
    let shank_angle = thigh_angle + q[h + 1];
    let u0 = rot(trunk_angle, Vector2::new(hip_x, 0.0));
    let u1 = rot(thigh_angle, Vector2::new(0.0, -along_thigh));
    let u2 = rot(shank_angle, Vector2::new(0.0, -along_shank));

    let mut jac = Jac::zeros();
    jac[(0, 0)] = 1.0;
    jac[(1, 1)] = 1.0;
    jac.set_column(PITCH, &perp(u0 + u1 + u2));
    jac.set_column(h, &perp(u1 + u2));
    jac.set_column(h + 1, &perp(u2));

    let w0 = v[PITCH];
    let w1 = w0 + v[h];
    let w2 = w1 + v[h + 1];
    let bias = -(u0 * (w0 * w0) + u1 * (w1 * w1) + u2 * (w2 * w2));
    PointKinematics { pos: Vector2::new(q[0], q[1]) + u0 + u1 + u2, jac, bias }
}

/// Angular partial velocities of the trunk, a thigh and a shank.
fn angular_rows(leg: usize) -> [Vec7; 3] {
    let h = hip_dof(leg);
    let mut trunk = Vec7::zeros();
    trunk[PITCH] = 1.0;
    let mut thigh = trunk;
    thigh[h] = 1.0;
    let mut shank = thigh;
    shank[h + 1] = 1.0;
    [trunk, thigh, shank]
}

struct Assembly {
    mass: Mat7,
    /// Gravity, joint torques and velocity-product terms.
    force: Vec7,
    feet: [PointKinematics; 2],
}

#[derive(Debug, Clone, Copy)]
struct ContactTerm {
    depth: f64,
    normal: Vector2<f64>,
    tangent: Vector2<f64>,
    normal_damping: f64,
    friction_damping: f64,
}

/// Terrain, robot and integrator settings that stay fixed during an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub model: RobotModel,
    pub cfg: SimConfig,
    pub terrain: TerrainProfile,
}

impl World {
    pub fn new(model: RobotModel, cfg: SimConfig, terrain: TerrainProfile) -> Result<Self, SimError> {
        model.validate()?;
        cfg.validate()?;
        terrain.validate()?;
        Ok(Self { model, cfg, terrain })
    }

    /// Applies `f` to every rigid body: `(mass, pitch inertia, CoM kinematics, angular row)`.
    fn for_each_body(
        &self,
        props: &MassProperties,
        q: &Vec7,
        v: &Vec7,
        mut f: impl FnMut(f64, f64, &PointKinematics, &Vec7),
    ) {
        let [l1, l2] = self.model.link_lengths;
        let [m1, m2] = self.model.link_masses;
        let trunk = chain_point(q, v, 0, props.com_x, 0.0, 0.0);
        f(props.mass, props.inertia, &trunk, &angular_rows(0)[0]);
        for (leg, hip_x) in self.model.hip_offsets.iter().enumerate() {
            let rows = angular_rows(leg);
            let thigh = chain_point(q, v, leg, *hip_x, 0.5 * l1, 0.0);
            f(m1, m1 * l1 * l1 / 12.0, &thigh, &rows[1]);
            let shank = chain_point(q, v, leg, *hip_x, l1, 0.5 * l2);
            f(m2, m2 * l2 * l2 / 12.0, &shank, &rows[2]);
        }
    }

    fn feet(&self, q: &Vec7, v: &Vec7) -> [PointKinematics; 2] {
        let [l1, l2] = self.model.link_lengths;
        [0, 1].map(|leg| chain_point(q, v, leg, self.model.hip_offsets[leg], l1, l2))
    }

    fn assemble(&self, props: &MassProperties, q: &Vec7, v: &Vec7, torques: &[f64; NUM_JOINTS]) -> Assembly {
        let gravity = Vector2::new(0.0, -self.cfg.gravity);
        let mut mass = Mat7::zeros();
        let mut force = Vec7::zeros();
        self.for_each_body(props, q, v, |m, inertia, point, omega| {
            let jt = point.jac.transpose();
            mass += (jt * point.jac) * m;
            mass += (omega * omega.transpose()) * inertia;
            force += jt * ((gravity - point.bias) * m);
        });
        for (j, tau) in torques.iter().enumerate() {
            mass[(3 + j, 3 + j)] += self.model.joint_armature;
            force[3 + j] += tau;
        }
        Assembly { mass, force, feet: self.feet(q, v) }
    }

    fn contact_term(&self, foot: &PointKinematics, v: &Vec7) -> Option<ContactTerm> {
        if !self.cfg.contacts_enabled {
            return None;
        }
        let geom = self.terrain.penetration(foot.pos.x, foot.pos.y)?;
        let normal = Vector2::new(geom.normal[0], geom.normal[1]);
        let tangent = Vector2::new(normal.y, -normal.x);
        let vel = foot.velocity(v);
        let normal_force = self.cfg.contact_stiffness * geom.depth - self.cfg.contact_damping * normal.dot(&vel);
        if normal_force <= 0.0 {
            return None;
        }
        let slip = tangent.dot(&vel).abs().max(self.cfg.friction_slip_velocity);
        Some(ContactTerm {
            depth: geom.depth,
            normal,
            tangent,
            normal_damping: self.cfg.contact_damping,
            friction_damping: self.cfg.friction_mu * normal_force / slip,
        })
    }

    /// Solves one half kick of length `h`. `lookahead` is the drift length the
    /// contact spring anticipates (the full step in the first kick, zero in
    /// the second). Returns the new velocity and per-foot contact forces.
    fn kick(
        &self,
        asm: &Assembly,
        contacts: &mut [Option<ContactTerm>; 2],
        v: &Vec7,
        h: f64,
        lookahead: f64,
    ) -> Result<(Vec7, [Vector2<f64>; 2]), SimError> {
        let k = self.cfg.contact_stiffness;
        loop {
            let mut lhs = asm.mass;
            let mut rhs = asm.force;
            for (term, foot) in contacts.iter().zip(&asm.feet) {
                let Some(c) = term else { continue };
                let nn = c.normal * c.normal.transpose();
                let tt = c.tangent * c.tangent.transpose();
                let damping: Matrix2<f64> = nn * (c.normal_damping + lookahead * k) + tt * c.friction_damping;
                let jt = foot.jac.transpose();
                let implicit = jt * damping * foot.jac;
                lhs += implicit * h;
                rhs += jt * (c.normal * (k * c.depth)) - implicit * v;
            }
            if self.cfg.fixed_base {
                for i in 0..3 {
                    lhs.row_mut(i).fill(0.0);
                    lhs.column_mut(i).fill(0.0);
                    lhs[(i, i)] = 1.0;
                    rhs[i] = 0.0;
                }
            }
            let accel = match lhs.cholesky() {
                Some(chol) => chol.solve(&rhs),
                None => lhs.lu().solve(&rhs).ok_or(SimError::NonFiniteState { time: f64::NAN })?,
            };
            let v_new = v + accel * h;

            let mut forces = [Vector2::zeros(); 2];
            let mut dropped = false;
            for (i, (term, foot)) in contacts.iter_mut().zip(&asm.feet).enumerate() {
                let Some(c) = term else { continue };
                let vel = foot.velocity(&v_new);
                let vn = c.normal.dot(&vel);
                let fn_ = k * (c.depth - lookahead * vn) - c.normal_damping * vn;
                if fn_ < 0.0 {
                    *term = None;
                    dropped = true;
                    continue;
                }
                forces[i] = c.normal * fn_ - c.tangent * (c.friction_damping * c.tangent.dot(&vel));
            }
            if !dropped {
                return Ok((v_new, forces));
            }
        }
    }

    fn limit_joints(&self, q: &mut Vec7, v: &mut Vec7) {
        for (j, lim) in self.model.joint_limits.iter().enumerate() {
            let i = 3 + j;
            if q[i] <= lim[0] {
                q[i] = lim[0];
                v[i] = v[i].max(0.0);
            } else if q[i] >= lim[1] {
                q[i] = lim[1];
                v[i] = v[i].min(0.0);
            }
        }
    }

    /// One physics step of length `cfg.dt_physics` under constant joint torques.
    pub fn step(
        &self,
        state: &RobotState,
        torques: &[f64; NUM_JOINTS],
        payload: &PayloadState,
    ) -> Result<(RobotState, ContactReport), SimError> {
        let dt = self.cfg.dt_physics;
        let h = 0.5 * dt;
        let props = effective_inertia(&self.model, payload);
        let mut q = Vec7::from(state.positions());
        let v = Vec7::from(state.velocities());

        let asm = self.assemble(&props, &q, &v, torques);
        let mut contacts = asm.feet.map(|f| self.contact_term(&f, &v));
        let (mut v_half, _) = self.kick(&asm, &mut contacts, &v, h, dt)?;

        q += v_half * dt;
        self.limit_joints(&mut q, &mut v_half);

        let asm = self.assemble(&props, &q, &v_half, torques);
        let mut contacts = asm.feet.map(|f| self.contact_term(&f, &v_half));
        let (mut v_new, forces) = self.kick(&asm, &mut contacts, &v_half, h, 0.0)?;
        self.limit_joints(&mut q, &mut v_new);

        let time = state.time + dt;
        let next = RobotState::from_coordinates(&q.into(), &v_new.into(), time);
        if !next.is_finite() {
            return Err(SimError::NonFiniteState { time });
        }
        let mut report = ContactReport::default();
        for (i, foot) in report.feet.iter_mut().enumerate() {
            if let Some(c) = contacts[i] {
                *foot = FootContact { in_contact: true, grf: [forces[i].x, forces[i].y], penetration: c.depth };
            }
        }
        Ok((next, report))
    }

    /// World-frame foot positions and velocities, front first.
    pub fn foot_kinematics(&self, state: &RobotState) -> [([f64; 2], [f64; 2]); 2] {
        let q = Vec7::from(state.positions());
        let v = Vec7::from(state.velocities());
        self.feet(&q, &v).map(|f| {
            let vel = f.velocity(&v);
            ([f.pos.x, f.pos.y], [vel.x, vel.y])
        })
    }

    /// Base height above the terrain directly below the trunk origin.
    pub fn base_height(&self, state: &RobotState) -> f64 {
        state.base_pos[1] - self.terrain.height(state.base_pos[0])
    }
}

/// Kinetic plus gravitational potential energy, J.
pub fn mechanical_energy(world: &World, payload: &PayloadState, state: &RobotState) -> f64 {
    let props = effective_inertia(&world.model, payload);
    let q = Vec7::from(state.positions());
    let v = Vec7::from(state.velocities());
    let mut mass = Mat7::zeros();
    let mut potential = 0.0;
    world.for_each_body(&props, &q, &v, |m, inertia, point, omega| {
        mass += (point.jac.transpose() * point.jac) * m;
        mass += (omega * omega.transpose()) * inertia;
        potential += m * world.cfg.gravity * point.pos.y;
    });
    for j in 0..NUM_JOINTS {
        mass[(3 + j, 3 + j)] += world.model.joint_armature;
    }
    0.5 * v.dot(&(mass * v)) + potential
}
