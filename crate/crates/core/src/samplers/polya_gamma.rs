//! Exact Pólya-Gamma sampler.
//!
//! PG(1, z) is drawn with Devroye's alternating-series accept/reject method on
//! the Jacobi distribution J*(1, z/2), split at `t = 0.64` into a truncated
//! inverse-Gaussian piece and an exponential tail. PG(b, z) for integer `b` is
//! the sum of `b` independent PG(1, z) draws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;

const TRUNC: f64 = 0.64;

/// `log Phi(x)` for the standard normal CDF, accurate far into the lower tail.
fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - 0.5 * (2.0 * PI).ln() - (-x).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Terms of the alternating series for the J*(1) density at a fixed `x`.
struct Series {
    x: f64,
    /// `(2 / (pi x))^1.5` on the left piece.
    scale: f64,
}

impl Series {
    fn new(x: f64) -> Self {
        let scale = if x > 0.0 && x <= TRUNC {
            (2.0 / (PI * x)).powf(1.5)
        } else {
            0.0
        };
        Self { x, scale }
    }

    fn term(&self, n: usize) -> f64 {
        let k = (n as f64 + 0.5) * PI;
        if self.x > TRUNC {
            k * (-0.5 * k * k * self.x).exp()
        } else if self.x > 0.0 {
            let h = n as f64 + 0.5;
            self.scale * k * (-2.0 * h * h / self.x).exp()
        } else {
            0.0
        }
    }
}

/// Probability of proposing from the exponential tail rather than the truncated
/// inverse Gaussian, for tilt `z`.
fn tail_mass(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let rt = (1.0 / t).sqrt();
    let b = rt * (t * z - 1.0);
    let a = -rt * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let qdivp = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + qdivp)
}

/// Inverse Gaussian IG(1/z, 1) truncated to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > t {
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    let d = 1.0 + t * e1;
                    break t / (d * d);
                }
            };
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y).powi(2)).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= t {
                return x;
            }
        }
    }
}

/// PG(1, c) sampler with the tilt-dependent constants computed once.
struct Pg1 {
    z: f64,
    fz: f64,
    p_tail: f64,
}

impl Pg1 {
    fn new(c: f64) -> Self {
        let z = 0.5 * c.abs();
        let fz = PI * PI / 8.0 + 0.5 * z * z;
        Self {
            z,
            fz,
            p_tail: tail_mass(z, fz),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = if rng.random::<f64>() < self.p_tail {
                let e: f64 = Exp1.sample(rng);
                TRUNC + e / self.fz
            } else {
                truncated_inverse_gaussian(self.z, rng)
            };
            let series = Series::new(x);
            let mut s = series.term(0);
            let y = rng.random::<f64>() * s;
            let mut n = 0;
            loop {
                n += 1;
                if n % 2 == 1 {
                    s -= series.term(n);
                    if y <= s {
                        return 0.25 * x;
                    }
                } else {
                    s += series.term(n);
                    if y > s {
                        break;
                    }
                }
            }
        }
    }
}

/// One draw from PG(b, c) for integer `b >= 1`. `b = 0` returns 0.
pub fn polya_gamma_draw<R: Rng + ?Sized>(b: u32, c: f64, rng: &mut R) -> f64 {
    if b == 0 {
        return 0.0;
    }
    let pg = Pg1::new(c);
    (0..b).map(|_| pg.draw(rng)).sum()
}

/// `E[PG(b, c)] = b / (2c) * tanh(c / 2)`, with the limit `b / 4` at `c = 0`.
pub fn polya_gamma_mean(b: f64, c: f64) -> f64 {
    if c.abs() < 1e-6 {
        b / 4.0 * (1.0 - c * c / 12.0)
    } else {
        b / (2.0 * c) * (0.5 * c).tanh()
    }
}
