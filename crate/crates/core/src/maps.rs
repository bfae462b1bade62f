//! Pointwise constitutive maps of the string system.
//!
//! Everything here is radial: a map sends chi to (chi/|chi|) f(|chi|) for a
//! strictly increasing scalar profile f, so rotations commute with every map
//! and inverses reduce to scalar root finding. The central objects are
//!
//! * the link between contact-force magnitude and the transformed variable
//!   w = kappa/|kappa| + kappa/sqrt(|kappa|) (and its eps-regularized
//!   counterpart), together with its inverse,
//! * the vector maps recovering the contact force from w,
//! * the unit-ball shrink (vector soft threshold) that removes the flux
//!   discontinuity,
//! * the regularized flux tau = eps*kappa + kappa/sqrt(eps+|kappa|^2) and its
//!   globally Lipschitz inverse,
//! * the coupling fluxes A, B, D on gamma = (v, w) and the quadratic
//!   recession of B.
//!
//! eps = 0 is an explicit sentinel selecting the closed-form limit maps; it
//! is never reached by taking the eps > 0 code path to a small value.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Vec3;

/// Below this magnitude a direction chi/|chi| is taken to be zero; all maps
/// vanish there anyway.
const DIRECTION_FLOOR: f64 = 1e-300;

/// Regularization strength, either in (0,1] or the exact-zero limit sentinel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsParam(f64);

impl EpsParam {
    pub fn new(eps: f64) -> Result<Self> {
        if eps == 0.0 {
            return Ok(EpsParam(0.0));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Domain {
                what: "EpsParam",
                value: eps,
            });
        }
        Ok(EpsParam(eps))
    }

    /// The eps = 0 sentinel selecting the limit maps.
    pub fn limit() -> Self {
        EpsParam(0.0)
    }

    pub fn is_limit(&self) -> bool {
        self.0 == 0.0
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// The merged unknown gamma = (v, w) in R^6.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gamma {
    pub v: Vec3,
    pub w: Vec3,
}

impl Gamma {
    pub fn new(v: Vec3, w: Vec3) -> Self {
        Gamma { v, w }
    }

    pub fn zero() -> Self {
        Gamma {
            v: Vec3::zeros(),
            w: Vec3::zeros(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.w.norm_squared()).sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.v.norm_squared() + self.w.norm_squared()
    }

    pub fn dot(&self, other: &Gamma) -> f64 {
        self.v.dot(&other.v) + self.w.dot(&other.w)
    }

    pub fn scale(&self, c: f64) -> Gamma {
        Gamma {
            v: self.v * c,
            w: self.w * c,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Gamma {
            v: Vec3::new(a[0], a[1], a[2]),
            w: Vec3::new(a[3], a[4], a[5]),
        }
    }
}

/// A, B and D evaluated together at one gamma.
#[derive(Clone, Copy, Debug)]
pub struct FluxMaps {
    /// A(gamma) = (v, w - H*(w)); the quantity under the time derivative.
    pub time_flux: Gamma,
    /// B(gamma) = (H(w), v); the quantity under the space derivative.
    pub space_flux: Gamma,
    /// D(gamma) = (0, H(w)); the extra eps-dissipative term.
    pub diffusion_flux: Gamma,
}

fn radial(chi: Vec3, magnitude: f64) -> Vec3 {
    let m = chi.norm();
    if m < DIRECTION_FLOOR {
        Vec3::zeros()
    } else {
        chi * (magnitude / m)
    }
}

/// Safeguarded Newton with a bisection fallback on a strictly increasing
/// profile. The bracket \[0, hi\] must enclose the root.
fn invert_increasing(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    target: f64,
    hi0: f64,
    tol: f64,
    what: &'static str,
) -> Result<f64> {
    if target <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0f64;
    let mut hi = hi0;
    // Defensive expansion; the callers' brackets are provable enclosures.
    let mut guard = 0;
    while f(hi) < target {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::NoConvergence { what, target });
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let fx = f(x) - target;
    if fx.abs() <= tol * 10.0 {
        return Ok(x);
    }
    Err(Error::NoConvergence { what, target })
}

// ---------------------------------------------------------------------------
// Scalar profiles linking |kappa| and |w|
// ---------------------------------------------------------------------------

/// |w| as a function of the contact-force magnitude: 1 + sqrt(k) in the
/// limit, k/sqrt(eps + k^2) + sqrt(k) for eps > 0.
pub fn w_mag_from_kappa_mag(k: f64, eps: EpsParam) -> f64 {
    if eps.is_limit() {
        1.0 + k.sqrt()
    } else {
        let e = eps.value();
        k / (e + k * k).sqrt() + k.sqrt()
    }
}

/// Inverse of [`w_mag_from_kappa_mag`]. In the limit this is (y-1)^2 for
/// y >= 1, continued by zero below; for eps > 0 it is computed by
/// safeguarded Newton on the strictly increasing profile.
pub fn kappa_mag_from_w_mag(y: f64, eps: EpsParam) -> Result<f64> {
    if y < 0.0 {
        return Err(Error::Domain {
            what: "kappa_mag_from_w_mag",
            value: y,
        });
    }
    if eps.is_limit() {
        return Ok(if y >= 1.0 { (y - 1.0) * (y - 1.0) } else { 0.0 });
    }
    let e = eps.value();
    let f = |r: f64| r / (e + r * r).sqrt() + r.sqrt();
    let df = |r: f64| {
        let d = e * (e + r * r).powf(-1.5);
        if r > 0.0 {
            d + 0.5 / r.sqrt()
        } else {
            f64::INFINITY
        }
    };
    // f(r) >= sqrt(r), so the root is at most y^2.
    invert_increasing(
        f,
        df,
        y,
        y * y + 1.0,
        1e-13 * (1.0 + y),
        "kappa_mag_from_w_mag",
    )
}

/// Shorthand for the limit inverse h0^{-1}(r) = (r-1)^2 (r >= 1, zero below).
pub fn h0_inverse(r: f64) -> Result<f64> {
    kappa_mag_from_w_mag(r, EpsParam::limit())
}

// ---------------------------------------------------------------------------
// Vector maps on w
// ---------------------------------------------------------------------------

/// Contact force recovered from the transformed variable (H_eps, or H_0 for
/// the limit sentinel).
pub fn contact_force(w: Vec3, eps: EpsParam) -> Result<Vec3> {
    let mag = kappa_mag_from_w_mag(w.norm(), eps)?;
    Ok(radial(w, mag))
}

/// Radial square root of [`contact_force`] (H*_eps / H*_0): subtracting it
/// from w leaves the (regularized) unit tangent.
pub fn contact_force_sqrt(w: Vec3, eps: EpsParam) -> Result<Vec3> {
    let mag = kappa_mag_from_w_mag(w.norm(), eps)?;
    Ok(radial(w, mag.sqrt()))
}

/// Vector soft threshold at unit radius: 0 inside the closed unit ball,
/// w - w/|w| outside. Coincides with [`contact_force_sqrt`] at eps = 0.
pub fn unit_shrink(w: Vec3) -> Vec3 {
    let m = w.norm();
    if m <= 1.0 {
        Vec3::zeros()
    } else {
        w * ((m - 1.0) / m)
    }
}

/// Transformed variable built from the contact force:
/// w = kappa/sqrt(eps+|kappa|^2) + kappa/sqrt(|kappa|), with the limit form
/// kappa/|kappa| + kappa/sqrt(|kappa|); zero maps to zero.
pub fn w_from_contact_force(kappa: Vec3, eps: EpsParam) -> Vec3 {
    radial(kappa, w_mag_from_kappa_mag(kappa.norm(), eps))
}

// ---------------------------------------------------------------------------
// Regularized flux tau(kappa) and its inverse G
// ---------------------------------------------------------------------------

/// tau = eps*kappa + kappa/sqrt(eps + |kappa|^2). For the limit sentinel this
/// degenerates to the discontinuous unit-direction flux kappa/|kappa|.
pub fn regularized_flux(kappa: Vec3, eps: EpsParam) -> Vec3 {
    let k = kappa.norm();
    if eps.is_limit() {
        return radial(kappa, if k > 0.0 { 1.0 } else { 0.0 });
    }
    let e = eps.value();
    kappa * e + radial(kappa, k / (e + k * k).sqrt())
}

fn flux_profile(k: f64, e: f64) -> f64 {
    e * k + k / (e + k * k).sqrt()
}

fn flux_profile_deriv(k: f64, e: f64) -> f64 {
    e + e * (e + k * k).powf(-1.5)
}

/// Inverse of [`regularized_flux`]: the globally Lipschitz map recovering
/// kappa from tau, by safeguarded Newton on the strictly increasing radial
/// profile. Requires eps > 0.
pub fn contact_force_from_flux(tau: Vec3, eps: EpsParam) -> Result<Vec3> {
    if eps.is_limit() {
        return Err(Error::Domain {
            what: "contact_force_from_flux(eps)",
            value: 0.0,
        });
    }
    let e = eps.value();
    let y = tau.norm();
    if y == 0.0 {
        return Ok(Vec3::zeros());
    }
    // eps*k <= profile(k), so the root is at most y/eps.
    let mag = invert_increasing(
        |k| flux_profile(k, e),
        |k| flux_profile_deriv(k, e),
        y,
        y / e + 1.0,
        1e-13 * (1.0 + y),
        "contact_force_from_flux",
    )?;
    Ok(radial(tau, mag))
}

/// The interval that contains every eigenvalue of the Jacobian of the flux
/// inverse: \[1/(eps + eps^{-1/2}), 1/eps\].
pub fn flux_jacobian_eigen_bounds(eps: EpsParam) -> (f64, f64) {
    let e = eps.value();
    (1.0 / (e + 1.0 / e.sqrt()), 1.0 / e)
}

/// Largest eigenvalue of the flux-inverse Jacobian at the given state,
/// eps^{-1} / (1 + (eps + |kappa|^2)^{-3/2}); used for step-size control.
pub fn flux_inverse_lipschitz(kappa_norm: f64, eps: f64) -> f64 {
    (1.0 / eps) / (1.0 + (eps + kappa_norm * kappa_norm).powf(-1.5))
}

/// Central finite-difference Jacobian of the flux inverse at tau.
pub fn flux_inverse_jacobian_fd(tau: Vec3, eps: EpsParam, delta: f64) -> Result<Matrix3<f64>> {
    let mut j = Matrix3::zeros();
    for col in 0..3 {
        let mut dp = tau;
        let mut dm = tau;
        dp[col] += delta;
        dm[col] -= delta;
        let gp = contact_force_from_flux(dp, eps)?;
        let gm = contact_force_from_flux(dm, eps)?;
        let d = (gp - gm) / (2.0 * delta);
        for row in 0..3 {
            j[(row, col)] = d[row];
        }
    }
    Ok(j)
}

// ---------------------------------------------------------------------------
// Coupling fluxes on gamma = (v, w)
// ---------------------------------------------------------------------------

/// A(gamma) = (v, w - H*(w)); sublinear, so its quadratic recession vanishes.
pub fn time_flux(gamma: &Gamma, eps: EpsParam) -> Result<Gamma> {
    Ok(Gamma {
        v: gamma.v,
        w: gamma.w - contact_force_sqrt(gamma.w, eps)?,
    })
}

/// B(gamma) = (H(w), v).
pub fn space_flux(gamma: &Gamma, eps: EpsParam) -> Result<Gamma> {
    Ok(Gamma {
        v: contact_force(gamma.w, eps)?,
        w: gamma.v,
    })
}

/// D(gamma) = (0, H(w)).
pub fn diffusion_flux(gamma: &Gamma, eps: EpsParam) -> Result<Gamma> {
    Ok(Gamma {
        v: Vec3::zeros(),
        w: contact_force(gamma.w, eps)?,
    })
}

/// All three coupling maps at once.
pub fn flux_maps(gamma: &Gamma, eps: EpsParam) -> Result<FluxMaps> {
    let kappa = contact_force(gamma.w, eps)?;
    let sqrt = contact_force_sqrt(gamma.w, eps)?;
    Ok(FluxMaps {
        time_flux: Gamma {
            v: gamma.v,
            w: gamma.w - sqrt,
        },
        space_flux: Gamma {
            v: kappa,
            w: gamma.v,
        },
        diffusion_flux: Gamma {
            v: Vec3::zeros(),
            w: kappa,
        },
    })
}

/// Quadratic recession of the space flux: B_inf(v, w) = (w |w|, 0).
pub fn space_flux_recession(gamma: &Gamma) -> Gamma {
    Gamma {
        v: gamma.w * gamma.w.norm(),
        w: Vec3::zeros(),
    }
}

/// Sampled sup of |H_eps - H_0| and |H*_eps - H*_0| over a fixed random
/// sample (radii up to 1e3), for eps in {1e-1, 1e-2, 1e-3}. The same sample
/// serves all three eps, so the pointwise monotonicity of the differences
/// carries over to the sampled suprema.
pub fn sampled_sup_differences(seed: u64, count: usize) -> ([f64; 3], [f64; 3]) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sample = Vec::with_capacity(count);
    while sample.len() < count {
        let dir = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if dir.norm() < 1e-3 {
            continue;
        }
        let r: f64 = rng.gen_range(0.0..1000.0);
        sample.push(dir / dir.norm() * r);
    }
    let limit = EpsParam::limit();
    let mut sups = [0.0f64; 3];
    let mut sups_star = [0.0f64; 3];
    for (k, ev) in [1e-1, 1e-2, 1e-3].into_iter().enumerate() {
        let eps = EpsParam::new(ev).unwrap();
        for chi in &sample {
            let dh =
                (contact_force(*chi, eps).unwrap() - contact_force(*chi, limit).unwrap()).norm();
            let dhs = (contact_force_sqrt(*chi, eps).unwrap()
                - contact_force_sqrt(*chi, limit).unwrap())
            .norm();
            sups[k] = sups[k].max(dh);
            sups_star[k] = sups_star[k].max(dhs);
        }
    }
    (sups, sups_star)
}
