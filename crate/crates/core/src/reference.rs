//! Exact solutions and predicted quantities.
//!
//! `psi_m(tau, x)` is the heat kernel for `m = 1` and the Barenblatt profile
//! `tau^(-d beta) (K - kappa tau^(-2 beta) |x|^2)_+^(1/(m-1))` for `m > 1`,
//! with `beta = 1/(2 + d(m-1))`, `kappa = beta (m-1) / (2m)` and `K` fixing
//! unit mass. Under `rho_t = Lap rho^m` the profile simply advances `tau`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mollifier::Dimension;
use crate::point::Point;

/// Beyond this many variances the heat kernel is below `e^-46 ~ 1e-20` of
/// its peak and is treated as zero when a finite support is needed.
const HEAT_TAIL: f64 = 46.0;

pub fn beta(m: f64, d: Dimension) -> f64 {
    1.0 / (2.0 + d.as_f64() * (m - 1.0))
}

pub fn kappa(m: f64, d: Dimension) -> f64 {
    0.5 * beta(m, d) * (m - 1.0) / m
}

/// Surface measure of the unit sphere: 2 on the line, `2 pi` in the plane.
fn sphere_area(d: Dimension) -> f64 {
    match d {
        Dimension::One => 2.0,
        Dimension::Two => 2.0 * PI,
    }
}

/// `(4 pi tau)^(-d/2) exp(-|x|^2 / (4 tau))`.
pub fn heat_kernel(tau: f64, d: Dimension, x: Point) -> f64 {
    (4.0 * PI * tau).powf(-0.5 * d.as_f64()) * (-x.norm_sq() / (4.0 * tau)).exp()
}

/// Unit-mass Barenblatt profile; panics on `m <= 1`.
pub fn barenblatt(m: f64, tau: f64, d: Dimension, x: Point) -> f64 {
    assert!(m > 1.0, "Barenblatt profile needs m > 1");
    let b = beta(m, d);
    let k = barenblatt_k(m, d);
    let inner = k - kappa(m, d) * tau.powf(-2.0 * b) * x.norm_sq();
    if inner <= 0.0 {
        0.0
    } else {
        tau.powf(-d.as_f64() * b) * inner.powf(1.0 / (m - 1.0))
    }
}

/// Radius of the support of `psi_m(tau, .)`: `tau^beta sqrt(K / kappa)`.
pub fn barenblatt_radius(m: f64, tau: f64, d: Dimension) -> f64 {
    tau.powf(beta(m, d)) * (barenblatt_k(m, d) / kappa(m, d)).sqrt()
}

/// Mass of `(K - kappa |y|^2)_+^(1/(m-1))`, which is also the mass of the
/// profile at any `tau`.
fn profile_mass(m: f64, d: Dimension, k: f64) -> f64 {
    let q = 1.0 / (m - 1.0);
    let kap = kappa(m, d);
    let r = (k / kap).sqrt();
    let dm1 = d.get() as i32 - 1;
    let f = |s: f64| (k - kap * s * s).max(0.0).powf(q) * s.powi(dm1);
    let scale = k.powf(q) * r.powi(d.get() as i32);
    sphere_area(d) * quadrature::integrate(f, 0.0, r, 1e-15 * scale).integral
}

fn memo() -> &'static Mutex<HashMap<(u64, usize), f64>> {
    static MEMO: OnceLock<Mutex<HashMap<(u64, usize), f64>>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// The constant `K(m, d)` giving the Barenblatt profile unit mass, found by
/// bracketing and Brent's method on the quadrature mass. Memoized.
pub fn barenblatt_k(m: f64, d: Dimension) -> f64 {
    assert!(m > 1.0, "Barenblatt constant needs m > 1");
    let key = (m.to_bits(), d.get());
    if let Some(&k) = memo().lock().unwrap().get(&key) {
        return k;
    }
    let (mut lo, mut hi) = (1.0, 1.0);
    while profile_mass(m, d, hi) < 1.0 {
        hi *= 2.0;
    }
    while profile_mass(m, d, lo) > 1.0 {
        lo *= 0.5;
    }
    let mut conv = SimpleConvergency {
        eps: 1e-15,
        max_iter: 200,
    };
    let k = find_root_brent(lo, hi, |k| profile_mass(m, d, k) - 1.0, &mut conv)
        .expect("mass is continuous and increasing in K");
    memo().lock().unwrap().insert(key, k);
    k
}

/// `psi_m(tau, x)` for any `m >= 1`.
pub fn fundamental(m: f64, tau: f64, d: Dimension, x: Point) -> f64 {
    if m == 1.0 {
        heat_kernel(tau, d, x)
    } else {
        barenblatt(m, tau, d, x)
    }
}

/// Radius outside which `psi_m(tau, .)` vanishes (or is below `1e-20` of its
/// peak for the heat kernel).
pub fn fundamental_radius(m: f64, tau: f64, d: Dimension) -> f64 {
    if m == 1.0 {
        (4.0 * tau * HEAT_TAIL).sqrt()
    } else {
        barenblatt_radius(m, tau, d)
    }
}

/// Steady state of `rho_t = Lap rho^2 + div(x rho)` in the plane:
/// `psi_2(1/4, x)`.
pub fn fp_steady_state(x: Point) -> f64 {
    barenblatt(2.0, 0.25, Dimension::Two, x)
}

/// Scale `tau(t)` such that `psi_m(tau(t), .)` solves
/// `rho_t = Lap rho^m + div(x rho)` from `psi_m(tau0, .)`.
///
/// From `grad psi^m = -(beta / tau) psi x` one gets `tau' = 1 - tau / beta`,
/// so `tau(t) = beta + (tau0 - beta) e^(-t / beta)`.
pub fn fp_tau(m: f64, d: Dimension, tau0: f64, t: f64) -> f64 {
    let b = beta(m, d);
    b + (tau0 - b) * (-t / b).exp()
}

/// `|| grad psi_m(tau, .)^m ||_{L^1}`, using `grad psi^m = -(beta/tau) psi x`.
pub fn grad_power_l1(m: f64, tau: f64, d: Dimension) -> f64 {
    let b = beta(m, d);
    let r = fundamental_radius(m, tau, d);
    let di = d.get() as i32;
    let f = |s: f64| fundamental(m, tau, d, Point::on_line(s)) * s.powi(di);
    let first_moment = sphere_area(d) * quadrature::integrate(f, 0.0, r, 1e-13).integral;
    b / tau * first_moment
}

/// Second-moment growth rate `dM2/dt = 2 d M - 2 chi M^2` for linear
/// diffusion with `W = 2 chi log|x|`. In the plane with `chi = 1/(4 pi)`
/// this is `4M (1 - M / (8 pi))`.
pub fn ks_second_moment_slope(mass: f64, d: Dimension, chi: f64) -> f64 {
    2.0 * d.as_f64() * mass - 2.0 * chi * mass * mass
}

/// One self-similar profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `psi_1(tau, .)`.
    Heat { tau: f64 },
    /// `psi_m(tau, .)`, `m > 1`.
    Barenblatt { m: f64, tau: f64 },
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let (m, tau) = match *self {
            Profile::Heat { tau } => (1.0, tau),
            Profile::Barenblatt { m, tau } => (m, tau),
        };
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::config("initial.tau", format!("must be positive, got {tau}")));
        }
        if let Profile::Barenblatt { .. } = self {
            if !(m > 1.0 && m.is_finite()) {
                return Err(Error::config("initial.m", format!("Barenblatt profile needs m > 1, got {m}")));
            }
        }
        Ok(())
    }

    fn m(&self) -> f64 {
        match *self {
            Profile::Heat { .. } => 1.0,
            Profile::Barenblatt { m, .. } => m,
        }
    }

    fn tau(&self) -> f64 {
        match *self {
            Profile::Heat { tau } | Profile::Barenblatt { tau, .. } => tau,
        }
    }

    pub fn eval(&self, d: Dimension, x: Point) -> f64 {
        fundamental(self.m(), self.tau(), d, x)
    }

    pub fn radius(&self, d: Dimension) -> f64 {
        fundamental_radius(self.m(), self.tau(), d)
    }

    pub fn with_tau(&self, tau: f64) -> Profile {
        match *self {
            Profile::Heat { .. } => Profile::Heat { tau },
            Profile::Barenblatt { m, .. } => Profile::Barenblatt { m, tau },
        }
    }

    /// Same profile after time `t` of `rho_t = Lap rho^m`.
    pub fn diffused(&self, t: f64) -> Profile {
        self.with_tau(self.tau() + t)
    }

    /// Same profile after time `t` of `rho_t = Lap rho^m + div(x rho)`.
    pub fn confined(&self, d: Dimension, t: f64) -> Profile {
        self.with_tau(fp_tau(self.m(), d, self.tau(), t))
    }
}

/// A weighted translate `weight * psi(x - center)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub center: Vec2,
    #[serde(flatten)]
    pub profile: Profile,
}

fn one() -> f64 {
    1.0
}

/// Plain coordinate pair for configs; `[x]` or `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vec2(pub Point);

impl From<Vec<f64>> for Vec2 {
    fn from(v: Vec<f64>) -> Self {
        Vec2(Point::new(v.first().copied().unwrap_or(0.0), v.get(1).copied().unwrap_or(0.0)))
    }
}

impl From<Vec2> for Vec<f64> {
    fn from(v: Vec2) -> Self {
        vec![v.0.x, v.0.y]
    }
}

/// Weighted sum of translated profiles, the initial data of every preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSum {
    pub bumps: Vec<Bump>,
}

impl ProfileSum {
    pub fn single(profile: Profile) -> Self {
        ProfileSum {
            bumps: vec![Bump {
                weight: 1.0,
                center: Vec2::default(),
                profile,
            }],
        }
    }

    pub fn validate(&self, d: Dimension) -> Result<()> {
        if self.bumps.is_empty() {
            return Err(Error::config("initial.bumps", "at least one bump is required"));
        }
        for b in &self.bumps {
            b.profile.validate()?;
            if !(b.weight >= 0.0 && b.weight.is_finite()) {
                return Err(Error::config("initial.bumps.weight", format!("must be non-negative, got {}", b.weight)));
            }
            if d == Dimension::One && b.center.0.y != 0.0 {
                return Err(Error::config("initial.bumps.center", "1-D centers take a single coordinate"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, d: Dimension, x: Point) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.weight * b.profile.eval(d, x - b.center.0))
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.bumps.iter().map(|b| b.weight).sum()
    }

    /// Smallest `R` such that the density vanishes outside the ball `|x| <= R`
    /// (up to the heat-kernel tail).
    pub fn radius(&self, d: Dimension) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.center.0.norm() + b.profile.radius(d))
            .fold(0.0, f64::max)
    }

    pub fn map_profiles(&self, f: impl Fn(&Profile) -> Profile) -> Self {
        ProfileSum {
            bumps: self
                .bumps
                .iter()
                .map(|b| Bump {
                    profile: f(&b.profile),
                    ..*b
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn mass_2d(f: impl Fn(Point) -> f64, r: f64, n: usize) -> f64 {
        simpson(|y| simpson(|x| f(Point::new(x, y)), -r, r, n), -r, r, n)
    }

    /// `K` from the Beta-function closed form of the profile mass.
    fn k_closed_form(m: f64, d: Dimension) -> f64 {
        let q = 1.0 / (m - 1.0);
        let h = 0.5 * d.as_f64();
        let b = gamma(h) * gamma(q + 1.0) / gamma(h + q + 1.0);
        let c = sphere_area(d) * kappa(m, d).powf(-h) * 0.5 * b;
        c.powf(-1.0 / (q + h))
    }

    #[test]
    fn heat_kernel_values() {
        assert_relative_eq!(
            heat_kernel(0.0625, Dimension::One, Point::ZERO),
            std::f64::consts::FRAC_2_SQRT_PI,
            max_relative = 1e-15
        );
        let m = simpson(|x| heat_kernel(0.0625, Dimension::One, Point::on_line(x)), -6.0, 6.0, 4000);
        assert!((m - 1.0).abs() < 1e-8);
        let m2 = mass_2d(|p| heat_kernel(0.1, Dimension::Two, p), 4.0, 400);
        assert!((m2 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn heat_semigroup() {
        let (t1, t2) = (0.05, 0.08);
        let h = 0.005;
        for &x in &[0.0, 0.3, -0.7] {
            let conv: f64 = (-800..=800)
                .map(|k| {
                    let y = k as f64 * h;
                    heat_kernel(t1, Dimension::One, Point::on_line(x - y)) * heat_kernel(t2, Dimension::One, Point::on_line(y)) * h
                })
                .sum();
            assert!((conv - heat_kernel(t1 + t2, Dimension::One, Point::on_line(x))).abs() < 1e-5);
        }
    }

    #[test]
    fn exponents() {
        assert_relative_eq!(beta(2.0, Dimension::One), 1.0 / 3.0);
        assert_relative_eq!(kappa(2.0, Dimension::One), 1.0 / 12.0);
        assert_relative_eq!(beta(2.0, Dimension::Two), 0.25);
        assert_relative_eq!(kappa(3.0, Dimension::One), 0.25 * 2.0 / 3.0 / 2.0 * 1.0, max_relative = 1e-15);
    }

    #[test]
    fn k_for_m2_line_by_hand() {
        // (4/3) K^(3/2) kappa^(-1/2) = 1 with kappa = 1/12
        let by_hand = (0.75 / 12f64.sqrt()).powf(2.0 / 3.0);
        assert_relative_eq!(barenblatt_k(2.0, Dimension::One), by_hand, max_relative = 1e-10);
        assert!((barenblatt_k(2.0, Dimension::One) - 0.36057).abs() < 1e-5);
    }

    #[test]
    fn k_matches_beta_closed_form() {
        for &(m, d) in &[
            (2.0, Dimension::One),
            (3.0, Dimension::One),
            (2.0, Dimension::Two),
            (3.0, Dimension::Two),
            (1.5, Dimension::One),
        ] {
            assert_relative_eq!(barenblatt_k(m, d), k_closed_form(m, d), max_relative = 1e-10);
        }
        assert_relative_eq!(barenblatt_k(2.0, Dimension::Two), 1.0 / (8.0 * PI).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn k_mass_is_increasing() {
        let ks = [0.1, 0.2, 0.4, 0.8, 1.6];
        for d in [Dimension::One, Dimension::Two] {
            let masses: Vec<f64> = ks.iter().map(|&k| profile_mass(3.0, d, k)).collect();
            assert!(masses.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn barenblatt_has_unit_mass_at_every_tau() {
        for &tau in &[0.5, 1.0, 2.0] {
            let r = barenblatt_radius(3.0, tau, Dimension::One);
            let m = quadrature::integrate(|x| barenblatt(3.0, tau, Dimension::One, Point::on_line(x)), -r, r, 1e-12).integral;
            assert!((m - 1.0).abs() < 1e-8, "tau {tau}: {m}");
        }
        let r = barenblatt_radius(2.0, 0.25, Dimension::Two);
        let m = mass_2d(fp_steady_state, r, 800);
        assert!((m - 1.0).abs() < 1e-5, "{m}");
    }

    #[test]
    fn barenblatt_support() {
        let r = barenblatt_radius(2.0, 0.0625, Dimension::One);
        assert_eq!(barenblatt(2.0, 0.0625, Dimension::One, Point::on_line(r * 1.0001)), 0.0);
        assert!(barenblatt(2.0, 0.0625, Dimension::One, Point::on_line(r * 0.999)) > 0.0);
        assert_relative_eq!(
            fp_steady_state(Point::ZERO),
            2.0 * barenblatt_k(2.0, Dimension::Two),
            max_relative = 1e-14
        );
        assert_eq!(fp_steady_state(Point::new(3.0, 0.0)), 0.0);
    }

    /// Residual of `rho_t - Lap rho^m - c div(x rho)` by centred differences.
    fn residual(rho: impl Fn(f64, Point) -> f64, m: f64, c: f64, t: f64, x: Point, d: Dimension) -> f64 {
        let h = 1e-4;
        let dt = (rho(t + h, x) - rho(t - h, x)) / (2.0 * h);
        let pw = |p: Point| rho(t, p).powf(m);
        let flux = |p: Point| p * rho(t, p);
        let mut lap = 0.0;
        let mut div = 0.0;
        for k in 0..d.get() {
            let mut e = Point::ZERO;
            *e.coord_mut(k) = h;
            lap += (pw(x + e) - 2.0 * pw(x) + pw(x - e)) / (h * h);
            div += (flux(x + e).coord(k) - flux(x - e).coord(k)) / (2.0 * h);
        }
        dt - lap - c * div
    }

    #[test]
    fn barenblatt_solves_porous_medium() {
        for &(m, d) in &[(2.0, Dimension::One), (3.0, Dimension::One), (2.0, Dimension::Two)] {
            let rho = |t: f64, x: Point| barenblatt(m, 0.0625 + t, d, x);
            for &x in &[0.05, 0.2] {
                let r = residual(rho, m, 0.0, 0.02, Point::new(x, 0.5 * x * (d.get() - 1) as f64), d);
                assert!(r.abs() < 1e-4 * rho(0.02, Point::ZERO).powf(m), "m {m}: residual {r}");
            }
        }
    }

    #[test]
    fn fokker_planck_time_change() {
        let d = Dimension::Two;
        assert_relative_eq!(fp_tau(2.0, d, 0.15, 0.0), 0.15);
        assert_relative_eq!(fp_tau(2.0, d, 0.15, 1.2), 0.25 - 0.1 * (-4.8f64).exp(), max_relative = 1e-15);
        let rho = |t: f64, x: Point| barenblatt(2.0, fp_tau(2.0, d, 0.15, t), d, x);
        for &x in &[Point::new(0.1, 0.0), Point::new(0.2, -0.3)] {
            let r = residual(rho, 2.0, 1.0, 0.3, x, d);
            assert!(r.abs() < 1e-4, "residual {r}");
        }
        // Ornstein-Uhlenbeck for m = 1
        let ou = |t: f64, x: Point| heat_kernel(fp_tau(1.0, Dimension::One, 0.1, t), Dimension::One, x);
        let r = residual(ou, 1.0, 1.0, 0.4, Point::on_line(0.3), Dimension::One);
        assert!(r.abs() < 1e-5, "residual {r}");
    }

    #[test]
    fn virial_slopes() {
        let chi = 1.0 / (4.0 * PI);
        let d = Dimension::Two;
        assert!(ks_second_moment_slope(8.0 * PI, d, chi).abs() < 1e-12);
        assert_relative_eq!(ks_second_moment_slope(7.0 * PI, d, chi), 3.5 * PI, max_relative = 1e-14);
        assert_relative_eq!(ks_second_moment_slope(9.0 * PI, d, chi), -4.5 * PI, max_relative = 1e-14);
        assert_relative_eq!(ks_second_moment_slope(1.0, Dimension::One, 1.5), -1.0);
    }

    #[test]
    fn gradient_power_norm() {
        // heat kernel: int |x| psi / (2 tau) = 2 sqrt(tau/pi) / (2 tau)
        let tau = 0.0625;
        let exact = 1.0 / (PI * tau).sqrt();
        assert_relative_eq!(grad_power_l1(1.0, tau, Dimension::One), exact, max_relative = 1e-9);
        // m = 2, d = 1: psi^2 rises monotonically to 2 psi(0)^2 and back
        let peak = barenblatt(2.0, tau, Dimension::One, Point::ZERO);
        assert_relative_eq!(grad_power_l1(2.0, tau, Dimension::One), 2.0 * peak * peak, max_relative = 1e-9);
    }

    #[test]
    fn profile_sums() {
        let s = ProfileSum {
            bumps: vec![
                Bump {
                    weight: 0.3,
                    center: Vec2(Point::on_line(-1.0)),
                    profile: Profile::Heat { tau: 0.0225 },
                },
                Bump {
                    weight: 0.7,
                    center: Vec2(Point::on_line(1.0)),
                    profile: Profile::Heat { tau: 0.0225 },
                },
            ],
        };
        s.validate(Dimension::One).unwrap();
        assert_relative_eq!(s.total_weight(), 1.0);
        let at = s.eval(Dimension::One, Point::on_line(1.0));
        assert_relative_eq!(at, 0.7 * heat_kernel(0.0225, Dimension::One, Point::ZERO) + 0.3 * heat_kernel(0.0225, Dimension::One, Point::on_line(2.0)));
        assert!(s.radius(Dimension::One) > 1.0);
        let bad = ProfileSum::single(Profile::Barenblatt { m: 1.0, tau: 0.1 });
        assert!(bad.validate(Dimension::One).is_err());
    }
}
