//! Geometric multipath channels, user mobility and blockage dynamics.
//!
//! Every link is a sum of `n_paths` rays. A ray contributes its complex gain
//! times the array response(s) at its departure/arrival angles. The first ray
//! of a BS–user or RIS–user link follows the geometric line between the two
//! nodes; the remaining rays take angles drawn uniformly in [−π/2, π/2].
//! Ray powers decay geometrically and are normalized to sum to one, and each
//! link is scaled by a log-distance pathloss.
//!
//! The BS–RIS link `G` is static and LoS-dominant (Rician with factor
//! `ris_rician_factor`). User links fade over slots through a first-order
//! autoregressive update of their ray gains, see [`ChannelProcess`].

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{self, SimRng};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("user {user} sits at zero distance from the {node}")]
    ZeroDistance { user: usize, node: &'static str },
    #[error("expected {expected} users, got {got}")]
    UserCount { expected: usize, got: usize },
    #[error("invalid blockage model: {0}")]
    InvalidBlockage(String),
}

/// Axis-aligned rectangle users move in, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl AreaBounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.x_min..=self.x_max).contains(&p[0]) && (self.y_min..=self.y_max).contains(&p[1])
    }

    /// Maps a position to [0, 1]² (clamped).
    pub fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        [
            ((p[0] - self.x_min) / (self.x_max - self.x_min)).clamp(0.0, 1.0),
            ((p[1] - self.y_min) / (self.y_max - self.y_min)).clamp(0.0, 1.0),
        ]
    }
}

impl Default for AreaBounds {
    fn default() -> Self {
        Self { x_min: 10.0, x_max: 50.0, y_min: -20.0, y_max: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub n_bs_antennas: usize,
    pub n_ris_elements: usize,
    pub n_users: usize,
    pub n_paths: usize,
    /// Inter-element spacing in wavelengths, shared by BS and RIS arrays.
    pub element_spacing: f64,
    pub area_bounds: AreaBounds,
    pub pathloss_exponent_los: f64,
    pub pathloss_exponent_nlos: f64,
    /// Pathloss at 1 m, dB.
    pub reference_pathloss_db: f64,
    /// Power ratio between consecutive rays.
    pub path_power_decay: f64,
    pub bs_position: [f64; 2],
    /// Direction the BS array broadside faces, radians from +x.
    pub bs_heading: f64,
    pub ris_position: [f64; 2],
    pub ris_heading: f64,
    /// LoS-to-scatter power ratio of the BS–RIS link.
    pub ris_rician_factor: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            n_bs_antennas: 8,
            n_ris_elements: 8,
            n_users: 4,
            n_paths: 10,
            element_spacing: 0.5,
            area_bounds: AreaBounds::default(),
            pathloss_exponent_los: 2.0,
            pathloss_exponent_nlos: 3.5,
            reference_pathloss_db: 0.0,
            path_power_decay: 0.7,
            bs_position: [0.0, 0.0],
            bs_heading: 0.0,
            ris_position: [30.0, 30.0],
            ris_heading: -FRAC_PI_2,
            ris_rician_factor: 10.0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::InvalidGeometry(m.to_string()));
        if self.n_bs_antennas == 0 || self.n_ris_elements == 0 || self.n_users == 0 {
            return bad("N, M and K must all be at least 1");
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if !(self.element_spacing > 0.0) {
            return bad("element_spacing must be positive");
        }
        let a = &self.area_bounds;
        if !(a.x_max > a.x_min && a.y_max > a.y_min) {
            return bad("area bounds are empty");
        }
        if !(self.path_power_decay > 0.0 && self.path_power_decay <= 1.0) {
            return bad("path_power_decay must lie in (0, 1]");
        }
        if !(self.pathloss_exponent_los >= 0.0 && self.pathloss_exponent_nlos >= 0.0) {
            return bad("pathloss exponents must be non-negative");
        }
        if !(self.ris_rician_factor >= 0.0) {
            return bad("ris_rician_factor must be non-negative");
        }
        Ok(())
    }

    /// Normalized ray powers, strongest first.
    pub fn path_powers(&self) -> Vec<f64> {
        normalized_powers(self.n_paths, self.path_power_decay)
    }

    /// Amplitude factor of the log-distance pathloss at `distance` meters.
    pub fn pathloss_amplitude(&self, distance: f64, exponent: f64) -> f64 {
        let loss_db = self.reference_pathloss_db + 10.0 * exponent * distance.log10();
        10f64.powf(-loss_db / 20.0)
    }
}

fn normalized_powers(n: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|l| decay.powi(l as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub position: [f64; 2],
    /// Meters per slot.
    pub velocity: [f64; 2],
    /// True when the direct BS–user path is obstructed (NLoS).
    pub physically_blocked: bool,
}

/// One slot's channels for all users.
///
/// Row `k` of `h_d` is h_{d,k} (length N), `g` is the M×N BS→RIS matrix and
/// row `k` of `h_r` is h_{r,k} (length M).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_d: Array2<C64>,
    pub g: Array2<C64>,
    pub h_r: Array2<C64>,
    pub blocked: Vec<bool>,
}

impl ChannelRealization {
    pub fn n_users(&self) -> usize {
        self.h_d.nrows()
    }
    pub fn n_bs(&self) -> usize {
        self.h_d.ncols()
    }
    pub fn n_ris(&self) -> usize {
        self.g.nrows()
    }

    pub fn is_finite(&self) -> bool {
        let fin = |z: &C64| z.re.is_finite() && z.im.is_finite();
        self.h_d.iter().all(fin) && self.g.iter().all(fin) && self.h_r.iter().all(fin)
    }

    /// All-zero channels with the given dimensions.
    pub fn zeros(n: usize, m: usize, k: usize) -> Self {
        Self {
            h_d: Array2::zeros((k, n)),
            g: Array2::zeros((m, n)),
            h_r: Array2::zeros((k, m)),
            blocked: vec![false; k],
        }
    }
}

/// Uniform-linear-array steering vector, element i = exp(j·2π·spacing·i·sin(angle)).
pub fn array_response(angle: f64, n: usize, spacing: f64) -> Array1<C64> {
    let step = 2.0 * PI * spacing * angle.sin();
    Array1::from_shape_fn(n, |i| C64::from_polar(1.0, step * i as f64))
}

/// A single propagation ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub departure: f64,
    pub arrival: f64,
    pub gain: C64,
}

/// Σ gain · a(departure) over rays, for links ending at a single-antenna node.
pub fn ray_vector(rays: &[Ray], n: usize, spacing: f64) -> Array1<C64> {
    let mut out = Array1::<C64>::zeros(n);
    for ray in rays {
        out.scaled_add(ray.gain, &array_response(ray.departure, n, spacing));
    }
    out
}

/// Σ gain · a_M(arrival) a_N(departure)ᴴ over rays.
pub fn ray_matrix(rays: &[Ray], m: usize, n: usize, spacing: f64) -> Array2<C64> {
    let mut out = Array2::<C64>::zeros((m, n));
    for ray in rays {
        let rx = array_response(ray.arrival, m, spacing);
        let tx = array_response(ray.departure, n, spacing);
        for i in 0..m {
            for j in 0..n {
                out[[i, j]] += ray.gain * rx[i] * tx[j].conj();
            }
        }
    }
    out
}

/// Angle of `to` as seen from an array at `from` facing `heading`, wrapped to (−π, π].
fn relative_angle(from: [f64; 2], heading: f64, to: [f64; 2]) -> f64 {
    let raw = (to[1] - from[1]).atan2(to[0] - from[0]) - heading;
    let wrapped = raw.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn complex_gaussian(rng: &mut SimRng, power: f64) -> C64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

fn uniform_angle(rng: &mut SimRng) -> f64 {
    rng.random_range(-FRAC_PI_2..=FRAC_PI_2)
}

/// Rays of one user link: ray 0 follows geometry, the rest are scatterers.
#[derive(Debug, Clone, PartialEq)]
struct UserLink {
    scatter_angles: Vec<f64>,
    gains: Vec<C64>,
}

impl UserLink {
    fn draw(rng: &mut SimRng, powers: &[f64]) -> Self {
        let scatter_angles = (1..powers.len()).map(|_| uniform_angle(rng)).collect();
        let gains = powers.iter().map(|&p| complex_gaussian(rng, p)).collect();
        Self { scatter_angles, gains }
    }

    fn fade(&mut self, rng: &mut SimRng, powers: &[f64], rho: f64) {
        let innovation = (1.0 - rho * rho).max(0.0).sqrt();
        for (g, &p) in self.gains.iter_mut().zip(powers) {
            *g = *g * rho + complex_gaussian(rng, p) * innovation;
        }
    }

    fn vector(&self, los_angle: f64, n: usize, spacing: f64, amplitude: f64) -> Array1<C64> {
        let mut out = Array1::<C64>::zeros(n);
        let angles = std::iter::once(los_angle).chain(self.scatter_angles.iter().copied());
        for (angle, &gain) in angles.zip(&self.gains) {
            out.scaled_add(gain * amplitude, &array_response(angle, n, spacing));
        }
        out
    }
}

/// Time-correlated channel state for one episode.
///
/// Scatterer angles are fixed at construction; ray gains evolve with
/// [`ChannelProcess::advance_fading`]. [`ChannelProcess::realize`] composes
/// the links for the current user positions and blockage flags.
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    geometry: GeometryConfig,
    powers: Vec<f64>,
    direct: Vec<UserLink>,
    reflected: Vec<UserLink>,
    g: Array2<C64>,
    rng: SimRng,
}

impl ChannelProcess {
    pub fn new(geometry: &GeometryConfig, seed: u64) -> Result<Self, ChannelError> {
        geometry.validate()?;
        let mut rng = seed::rng(seed);
        let powers = geometry.path_powers();
        let direct = (0..geometry.n_users).map(|_| UserLink::draw(&mut rng, &powers)).collect();
        let reflected =
            (0..geometry.n_users).map(|_| UserLink::draw(&mut rng, &powers)).collect();
        let g = bs_ris_matrix(geometry, &mut rng)?;
        Ok(Self { geometry: geometry.clone(), powers, direct, reflected, g, rng })
    }

    pub fn geometry(&self) -> &GeometryConfig {
        &self.geometry
    }

    /// AR(1) update of every user-link ray gain with correlation `rho`.
    pub fn advance_fading(&mut self, rho: f64) {
        for link in self.direct.iter_mut().chain(self.reflected.iter_mut()) {
            link.fade(&mut self.rng, &self.powers, rho);
        }
    }

    pub fn realize(&self, users: &[UserState]) -> Result<ChannelRealization, ChannelError> {
        let geo = &self.geometry;
        if users.len() != geo.n_users {
            return Err(ChannelError::UserCount { expected: geo.n_users, got: users.len() });
        }
        let (n, m, k) = (geo.n_bs_antennas, geo.n_ris_elements, geo.n_users);
        let mut h_d = Array2::<C64>::zeros((k, n));
        let mut h_r = Array2::<C64>::zeros((k, m));
        for (u, user) in users.iter().enumerate() {
            let d_bs = distance(geo.bs_position, user.position);
            if d_bs <= 0.0 {
                return Err(ChannelError::ZeroDistance { user: u, node: "BS" });
            }
            let d_ris = distance(geo.ris_position, user.position);
            if d_ris <= 0.0 {
                return Err(ChannelError::ZeroDistance { user: u, node: "RIS" });
            }
            let exponent = if user.physically_blocked {
                geo.pathloss_exponent_nlos
            } else {
                geo.pathloss_exponent_los
            };
            let amp_d = geo.pathloss_amplitude(d_bs, exponent);
            let aod = relative_angle(geo.bs_position, geo.bs_heading, user.position);
            h_d.row_mut(u)
                .assign(&self.direct[u].vector(aod, n, geo.element_spacing, amp_d));

            let amp_r = geo.pathloss_amplitude(d_ris, geo.pathloss_exponent_los);
            let aod_r = relative_angle(geo.ris_position, geo.ris_heading, user.position);
            h_r.row_mut(u)
                .assign(&self.reflected[u].vector(aod_r, m, geo.element_spacing, amp_r));
        }
        Ok(ChannelRealization {
            h_d,
            g: self.g.clone(),
            h_r,
            blocked: users.iter().map(|u| u.physically_blocked).collect(),
        })
    }
}

fn bs_ris_matrix(geo: &GeometryConfig, rng: &mut SimRng) -> Result<Array2<C64>, ChannelError> {
    let d = distance(geo.bs_position, geo.ris_position);
    if d <= 0.0 {
        return Err(ChannelError::InvalidGeometry("BS and RIS are co-located".into()));
    }
    let amp = geo.pathloss_amplitude(d, geo.pathloss_exponent_los);
    let kappa = geo.ris_rician_factor;
    let los_power = kappa / (1.0 + kappa);
    let scatter_powers = if geo.n_paths > 1 {
        normalized_powers(geo.n_paths - 1, geo.path_power_decay)
    } else {
        Vec::new()
    };
    let mut rays = Vec::with_capacity(geo.n_paths);
    let los_phase = rng.random_range(0.0..2.0 * PI);
    // With a single ray the LoS component carries all the power.
    let los_amp = if geo.n_paths > 1 { los_power.sqrt() } else { 1.0 };
    rays.push(Ray {
        departure: relative_angle(geo.bs_position, geo.bs_heading, geo.ris_position),
        arrival: relative_angle(geo.ris_position, geo.ris_heading, geo.bs_position),
        gain: C64::from_polar(los_amp * amp, los_phase),
    });
    for p in scatter_powers {
        let departure = uniform_angle(rng);
        let arrival = uniform_angle(rng);
        let gain = complex_gaussian(rng, p / (1.0 + kappa)) * amp;
        rays.push(Ray { departure, arrival, gain });
    }
    Ok(ray_matrix(&rays, geo.n_ris_elements, geo.n_bs_antennas, geo.element_spacing))
}

/// Draws a channel realization for fixed user states; pure in (geometry, users, seed).
pub fn generate_channels(
    geometry: &GeometryConfig,
    users: &[UserState],
    seed: u64,
) -> Result<ChannelRealization, ChannelError> {
    ChannelProcess::new(geometry, seed)?.realize(users)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityModel {
    /// Std of the Gaussian position jitter per step, meters.
    pub jitter_std: f64,
    /// Std of the velocity random walk per slot, meters/slot.
    pub velocity_walk_std: f64,
    /// Speed cap, meters/slot.
    pub max_speed: f64,
}

impl Default for MobilityModel {
    fn default() -> Self {
        Self { jitter_std: 0.01, velocity_walk_std: 0.002, max_speed: 0.05 }
    }
}

/// Folds `x` into `[lo, hi]` by mirror reflection; returns the value and
/// whether an odd number of reflections happened.
fn reflect(x: f64, lo: f64, hi: f64) -> (f64, bool) {
    let width = hi - lo;
    let period = 2.0 * width;
    let y = (x - lo).rem_euclid(period);
    let crossings = ((x - lo) / width).floor() as i64;
    if y > width {
        (lo + period - y, crossings.rem_euclid(2) == 1)
    } else {
        (lo + y, crossings.rem_euclid(2) == 1)
    }
}

/// Advances user positions by `dt` slots with jitter, reflection at the area
/// edges and a bounded velocity random walk.
pub fn step_mobility(
    users: &[UserState],
    bounds: &AreaBounds,
    dt: f64,
    model: &MobilityModel,
    seed: u64,
) -> Vec<UserState> {
    let mut rng = seed::rng(seed);
    users
        .iter()
        .map(|u| {
            let mut pos = [0.0; 2];
            let mut vel = u.velocity;
            let lims = [(bounds.x_min, bounds.x_max), (bounds.y_min, bounds.y_max)];
            for axis in 0..2 {
                let jitter: f64 = if model.jitter_std > 0.0 {
                    model.jitter_std * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                } else {
                    0.0
                };
                let raw = u.position[axis] + u.velocity[axis] * dt + jitter;
                let (p, flipped) = reflect(raw, lims[axis].0, lims[axis].1);
                pos[axis] = p;
                if flipped {
                    vel[axis] = -vel[axis];
                }
            }
            if model.velocity_walk_std > 0.0 {
                for v in vel.iter_mut() {
                    let step: f64 = StandardNormal.sample(&mut rng);
                    *v += model.velocity_walk_std * dt.sqrt() * step;
                }
            }
            let speed = vel[0].hypot(vel[1]);
            if speed > model.max_speed && speed > 0.0 {
                let s = model.max_speed / speed;
                vel = [vel[0] * s, vel[1] * s];
            }
            UserState { position: pos, velocity: vel, physically_blocked: u.physically_blocked }
        })
        .collect()
}

/// Two-state Markov chain over LoS/NLoS, advanced once per macro-slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockageModel {
    pub p_block: f64,
    pub p_unblock: f64,
}

impl Default for BlockageModel {
    fn default() -> Self {
        Self { p_block: 0.2, p_unblock: 0.4 }
    }
}

impl BlockageModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if ok(self.p_block) && ok(self.p_unblock) {
            Ok(())
        } else {
            Err(ChannelError::InvalidBlockage(format!(
                "probabilities must lie in [0, 1], got p_block={} p_unblock={}",
                self.p_block, self.p_unblock
            )))
        }
    }

    /// Long-run blocked fraction; 0 when the chain never leaves LoS.
    pub fn stationary_blocked(&self) -> f64 {
        let s = self.p_block + self.p_unblock;
        if s > 0.0 {
            self.p_block / s
        } else {
            0.0
        }
    }
}

pub fn step_blockage(users: &[UserState], model: &BlockageModel, seed: u64) -> Vec<UserState> {
    let mut rng = seed::rng(seed);
    users
        .iter()
        .map(|u| {
            let draw: f64 = rng.random();
            let blocked = if u.physically_blocked {
                draw >= model.p_unblock
            } else {
                draw < model.p_block
            };
            UserState { physically_blocked: blocked, ..u.clone() }
        })
        .collect()
}

/// Places `n_users` uniformly in the area with random headings and blockage
/// drawn from the chain's stationary distribution.
pub fn spawn_users(
    geometry: &GeometryConfig,
    blockage: &BlockageModel,
    mobility: &MobilityModel,
    seed: u64,
) -> Vec<UserState> {
    let mut rng = seed::rng(seed);
    let b = &geometry.area_bounds;
    let p_blocked = blockage.stationary_blocked();
    (0..geometry.n_users)
        .map(|_| {
            let x = rng.random_range(b.x_min..=b.x_max);
            let y = rng.random_range(b.y_min..=b.y_max);
            let heading = rng.random_range(0.0..2.0 * PI);
            let speed = rng.random_range(0.0..=mobility.max_speed);
            let blocked = rng.random::<f64>() < p_blocked;
            UserState {
                position: [x, y],
                velocity: [speed * heading.cos(), speed * heading.sin()],
                physically_blocked: blocked,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use proptest::prelude::*;

    fn still_user(x: f64, y: f64, blocked: bool) -> UserState {
        UserState { position: [x, y], velocity: [0.0, 0.0], physically_blocked: blocked }
    }

    #[test]
    fn broadside_response_is_all_ones() {
        let a = array_response(0.0, 4, 0.5);
        for z in a.iter() {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn endfire_two_elements_alternate() {
        let a = array_response(FRAC_PI_2, 2, 0.5);
        assert_abs_diff_eq!(a[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn phase_progression_is_linear() {
        let a = array_response(PI / 6.0, 3, 0.5);
        // 2π·0.5·2·sin(π/6) = π
        assert_abs_diff_eq!(a[2].re, -1.0, epsilon = 1e-12);
        let mut rng = seed::rng(7);
        for _ in 0..100 {
            let angle = rng.random_range(-PI..PI);
            let a = array_response(angle, 6, 0.5);
            let step = 2.0 * PI * 0.5 * angle.sin();
            for (i, z) in a.iter().enumerate() {
                let expected = C64::from_polar(1.0, step * i as f64);
                assert_abs_diff_eq!((z - expected).norm(), 0.0, epsilon = 1e-12);
            }
            // phase(i) = i·phase(1) modulo 2π
            for i in 0..6 {
                let lhs = a[1].powu(i as u32);
                assert_abs_diff_eq!((lhs - a[i]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn steering_entries_have_unit_magnitude(angle in -10.0f64..10.0, n in 1usize..64, d in 0.05f64..2.0) {
            let a = array_response(angle, n, d);
            prop_assert!((a[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_unit_ray_at_broadside() {
        let rays = [Ray { departure: 0.0, arrival: 0.0, gain: C64::new(1.0, 0.0) }];
        let h = ray_vector(&rays, 5, 0.5);
        for z in h.iter() {
            assert_abs_diff_eq!((z - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let geo = GeometryConfig::default();
        let users = spawn_users(&geo, &BlockageModel::default(), &MobilityModel::default(), 3);
        let a = generate_channels(&geo, &users, 11).unwrap();
        let b = generate_channels(&geo, &users, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        assert_eq!(a.h_d.dim(), (4, 8));
        assert_eq!(a.g.dim(), (8, 8));
        assert_eq!(a.h_r.dim(), (4, 8));
        assert_eq!(a.blocked, users.iter().map(|u| u.physically_blocked).collect::<Vec<_>>());
        let c = generate_channels(&geo, &users, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn doubling_distance_quarters_power() {
        let geo = GeometryConfig {
            n_users: 1,
            pathloss_exponent_los: 2.0,
            area_bounds: AreaBounds { x_min: -100.0, x_max: 100.0, y_min: -100.0, y_max: 100.0 },
            ..GeometryConfig::default()
        };
        let near = [still_user(10.0, 5.0, false)];
        let far = [still_user(20.0, 10.0, false)];
        let (mut p_near, mut p_far) = (0.0, 0.0);
        for s in 0..10_000u64 {
            let a = generate_channels(&geo, &near, s).unwrap();
            let b = generate_channels(&geo, &far, s).unwrap();
            p_near += a.h_d.iter().map(|z| z.norm_sqr()).sum::<f64>();
            p_far += b.h_d.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        assert_abs_diff_eq!(p_far / p_near, 0.25, epsilon = 1e-6);
    }

    #[test]
    fn zero_distance_is_rejected() {
        let geo = GeometryConfig { n_users: 1, ..GeometryConfig::default() };
        let users = [still_user(0.0, 0.0, false)];
        assert!(matches!(
            generate_channels(&geo, &users, 0),
            Err(ChannelError::ZeroDistance { user: 0, node: "BS" })
        ));
    }

    #[test]
    fn wrong_user_count_is_rejected() {
        let geo = GeometryConfig::default();
        let users = [still_user(20.0, 0.0, false)];
        assert!(matches!(
            generate_channels(&geo, &users, 0),
            Err(ChannelError::UserCount { expected: 4, got: 1 })
        ));
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let geo = GeometryConfig { n_paths: 0, ..GeometryConfig::default() };
        assert!(geo.validate().is_err());
        let geo = GeometryConfig { element_spacing: 0.0, ..GeometryConfig::default() };
        assert!(geo.validate().is_err());
    }

    #[test]
    fn fading_is_correlated_and_seeded() {
        let geo = GeometryConfig::default();
        let users = spawn_users(&geo, &BlockageModel::default(), &MobilityModel::default(), 1);
        let mut p = ChannelProcess::new(&geo, 5).unwrap();
        let mut q = ChannelProcess::new(&geo, 5).unwrap();
        let h0 = p.realize(&users).unwrap();
        p.advance_fading(0.95);
        q.advance_fading(0.95);
        let h1 = p.realize(&users).unwrap();
        assert_eq!(h1, q.realize(&users).unwrap());
        assert_ne!(h0.h_d, h1.h_d);
        assert_eq!(h0.g, h1.g);
        // rho = 1 freezes the gains
        let before = p.realize(&users).unwrap();
        p.advance_fading(1.0);
        assert_eq!(before, p.realize(&users).unwrap());
    }

    #[test]
    fn still_users_without_jitter_stay_put() {
        let model = MobilityModel { jitter_std: 0.0, velocity_walk_std: 0.0, max_speed: 1.0 };
        let users = vec![still_user(20.0, 3.0, false), still_user(45.0, -7.0, true)];
        let next = step_mobility(&users, &AreaBounds::default(), 10.0, &model, 9);
        assert_eq!(next, users);
    }

    #[test]
    fn outward_motion_reflects_inside() {
        let model = MobilityModel { jitter_std: 0.0, velocity_walk_std: 0.0, max_speed: 10.0 };
        let bounds = AreaBounds::default();
        let users = vec![UserState {
            position: [50.0, 0.0],
            velocity: [2.0, 0.0],
            physically_blocked: false,
        }];
        let next = step_mobility(&users, &bounds, 1.0, &model, 0);
        assert_abs_diff_eq!(next[0].position[0], 48.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next[0].velocity[0], -2.0, epsilon = 1e-12);
        assert!(bounds.contains(next[0].position));
    }

    #[test]
    fn long_walks_stay_in_bounds() {
        let geo = GeometryConfig::default();
        let model = MobilityModel { jitter_std: 0.5, velocity_walk_std: 0.3, max_speed: 3.0 };
        let mut users = spawn_users(&geo, &BlockageModel::default(), &model, 4);
        for step in 0..10_000u64 {
            users = step_mobility(&users, &geo.area_bounds, 1.0, &model, seed::derive(99, step));
            for u in &users {
                assert!(geo.area_bounds.contains(u.position), "step {step}: {:?}", u.position);
            }
        }
    }

    #[test]
    fn absorbing_blockage_chain_keeps_flags() {
        let users = vec![still_user(20.0, 0.0, true), still_user(30.0, 0.0, false)];
        let model = BlockageModel { p_block: 0.0, p_unblock: 0.0 };
        for s in 0..100 {
            assert_eq!(step_blockage(&users, &model, s), users);
        }
    }

    #[test]
    fn certain_blockage_blocks_everyone() {
        let users: Vec<_> = (0..5).map(|i| still_user(20.0 + i as f64, 0.0, false)).collect();
        let next = step_blockage(&users, &BlockageModel { p_block: 1.0, p_unblock: 0.0 }, 3);
        assert!(next.iter().all(|u| u.physically_blocked));
    }

    #[test]
    fn blockage_chain_reaches_stationary_fraction() {
        let model = BlockageModel { p_block: 0.2, p_unblock: 0.4 };
        let mut users = vec![still_user(20.0, 0.0, false)];
        let mut blocked = 0usize;
        let steps = 100_000u64;
        for s in 0..steps {
            users = step_blockage(&users, &model, seed::derive(2024, s));
            blocked += users[0].physically_blocked as usize;
        }
        let frac = blocked as f64 / steps as f64;
        assert!((frac - 1.0 / 3.0).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn blockage_validation() {
        assert!(BlockageModel { p_block: 1.5, p_unblock: 0.0 }.validate().is_err());
        assert!(BlockageModel::default().validate().is_ok());
    }
}
