use gauss_quad::legendre::GaussLegendre;

use crate::error::{ModelError, ModelResult};

/// Half-width of the smoothing zone around each ladder corner, relative to the corner.
pub const CORNER_DELTA: f64 = 1e-3;

/// Nonlinear diffusion Φ: either s^m or the uniformly elliptic ladder Φ_k.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion {
    Exact { m: f64 },
    Ladder(RegularizedDiffusion),
}

impl Diffusion {
    pub fn exact(m: f64) -> Self {
        Diffusion::Exact { m }
    }

    /// Φ_k when `k` is given, s^m otherwise.
    pub fn with_regularization(m: f64, k: Option<f64>) -> ModelResult<Self> {
        match k {
            None => Ok(Diffusion::Exact { m }),
            Some(k) => Ok(Diffusion::Ladder(RegularizedDiffusion::new(m, k)?)),
        }
    }

    pub fn m(&self) -> f64 {
        match self {
            Diffusion::Exact { m } => *m,
            Diffusion::Ladder(l) => l.m,
        }
    }

    pub fn phi(&self, s: f64) -> f64 {
        match self {
            Diffusion::Exact { m } => s.powf(*m),
            Diffusion::Ladder(l) => l.phi(s),
        }
    }

    pub fn dphi(&self, s: f64) -> f64 {
        match self {
            Diffusion::Exact { m } => {
                if s == 0.0 {
                    f64::INFINITY
                } else {
                    m * s.powf(m - 1.0)
                }
            }
            Diffusion::Ladder(l) => l.dphi(s),
        }
    }

    /// Φ⁻¹(u) for u ≥ 0.
    pub fn phi_inverse(&self, u: f64) -> f64 {
        match self {
            Diffusion::Exact { m } => u.max(0.0).powf(1.0 / m),
            Diffusion::Ladder(l) => l.phi_inverse(u),
        }
    }

    /// d Φ⁻¹(u)/du = 1/Φ'(Φ⁻¹(u)); finite at u = 0.
    pub fn inverse_slope(&self, u: f64) -> f64 {
        match self {
            Diffusion::Exact { m } => u.max(0.0).powf(1.0 / m - 1.0) / m,
            Diffusion::Ladder(l) => 1.0 / l.dphi(l.phi_inverse(u)),
        }
    }

    /// Φ(s)/s, the largest slope of any chord from the origin (Φ is concave).
    pub fn chord_slope(&self, s: f64) -> f64 {
        match self {
            Diffusion::Exact { m } => s.powf(m - 1.0),
            Diffusion::Ladder(l) => {
                if s <= l.a1 {
                    l.c1
                } else {
                    l.phi(s) / s
                }
            }
        }
    }

    /// G_Φ with G'' = 1/Φ' and G(0) = G'(0) = 0.
    pub fn g_phi(&self, s: f64) -> ModelResult<f64> {
        check(s, "g_phi")?;
        Ok(match self {
            Diffusion::Exact { m } => s.powf(3.0 - m) / (m * (2.0 - m) * (3.0 - m)),
            Diffusion::Ladder(l) => l.g_phi(s),
        })
    }

    /// Ψ(s) = 2 ∫_0^s Φ.
    pub fn psi(&self, s: f64) -> ModelResult<f64> {
        check(s, "psi")?;
        Ok(match self {
            Diffusion::Exact { m } => 2.0 * s.powf(m + 1.0) / (m + 1.0),
            Diffusion::Ladder(l) => l.psi(s),
        })
    }
}

fn check(s: f64, what: &'static str) -> ModelResult<()> {
    if s < 0.0 || s.is_nan() {
        Err(ModelError::NegativeArgument { what, value: s })
    } else {
        Ok(())
    }
}

/// Checked Φ_k(s).
pub fn phi_k(s: f64, k: f64, m: f64) -> ModelResult<f64> {
    check(s, "phi_k")?;
    Ok(RegularizedDiffusion::new(m, k)?.phi(s))
}

/// Checked Φ_k'(s).
pub fn phi_k_prime(s: f64, k: f64, m: f64) -> ModelResult<f64> {
    check(s, "phi_k_prime")?;
    Ok(RegularizedDiffusion::new(m, k)?.dphi(s))
}

/// Φ_k: slope m k^{1-m} below 1/k, m s^{m-1} on [1/k, k], m k^{m-1} above k,
/// with C² cubic Hermite blends of Φ_k' across each corner.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedDiffusion {
    pub m: f64,
    pub k: f64,
    c1: f64,
    c3: f64,
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
    lower: Hermite,
    upper: Hermite,
    phi_b1: f64,
    phi_a2: f64,
    phi_b2: f64,
}

/// Cubic Hermite interpolant of Φ' on [a, b].
#[derive(Debug, Clone, PartialEq)]
struct Hermite {
    a: f64,
    h: f64,
    y0: f64,
    y1: f64,
    m0: f64,
    m1: f64,
}

impl Hermite {
    fn eval(&self, s: f64) -> f64 {
        let u = (s - self.a) / self.h;
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * self.y0
            + (u3 - 2.0 * u2 + u) * self.h * self.m0
            + (-2.0 * u3 + 3.0 * u2) * self.y1
            + (u3 - u2) * self.h * self.m1
    }

    /// ∫_a^s of the interpolant.
    fn integral(&self, s: f64) -> f64 {
        let u = (s - self.a) / self.h;
        let u2 = u * u;
        let u3 = u2 * u;
        let u4 = u3 * u;
        self.h
            * ((u4 / 2.0 - u3 + u) * self.y0
                + (u4 / 4.0 - 2.0 * u3 / 3.0 + u2 / 2.0) * self.h * self.m0
                + (-u4 / 2.0 + u3) * self.y1
                + (u4 / 4.0 - u3 / 3.0) * self.h * self.m1)
    }
}

impl RegularizedDiffusion {
    pub fn new(m: f64, k: f64) -> ModelResult<Self> {
        if !(m > 0.0 && m < 1.0) {
            return Err(ModelError::InvalidParameter {
                name: "m",
                reason: "m out of fast-diffusion range (0,1)".into(),
            });
        }
        let d = CORNER_DELTA;
        let (a1, b1, a2, b2) = (
            1.0 / k * (1.0 - d),
            1.0 / k * (1.0 + d),
            k * (1.0 - d),
            k * (1.0 + d),
        );
        if !(k.is_finite() && b1 < a2) {
            return Err(ModelError::InvalidParameter {
                name: "k_reg",
                reason: format!("regularization index {k} too small for separated corners"),
            });
        }
        let c1 = m * k.powf(1.0 - m);
        let c3 = m * k.powf(m - 1.0);
        let pw = |s: f64| m * s.powf(m - 1.0);
        let dpw = |s: f64| m * (m - 1.0) * s.powf(m - 2.0);
        let lower = Hermite {
            a: a1,
            h: b1 - a1,
            y0: c1,
            y1: pw(b1),
            m0: 0.0,
            m1: dpw(b1),
        };
        let upper = Hermite {
            a: a2,
            h: b2 - a2,
            y0: pw(a2),
            y1: c3,
            m0: dpw(a2),
            m1: 0.0,
        };
        let phi_b1 = c1 * a1 + lower.integral(b1);
        let phi_a2 = phi_b1 + a2.powf(m) - b1.powf(m);
        let phi_b2 = phi_a2 + upper.integral(b2);
        Ok(Self {
            m,
            k,
            c1,
            c3,
            a1,
            b1,
            a2,
            b2,
            lower,
            upper,
            phi_b1,
            phi_a2,
            phi_b2,
        })
    }

    pub fn lower_slope(&self) -> f64 {
        self.c3
    }

    pub fn upper_slope(&self) -> f64 {
        self.c1
    }

    pub fn phi(&self, s: f64) -> f64 {
        if s <= self.a1 {
            self.c1 * s
        } else if s < self.b1 {
            self.c1 * self.a1 + self.lower.integral(s)
        } else if s <= self.a2 {
            self.phi_b1 + s.powf(self.m) - self.b1.powf(self.m)
        } else if s < self.b2 {
            self.phi_a2 + self.upper.integral(s)
        } else {
            self.phi_b2 + self.c3 * (s - self.b2)
        }
    }

    pub fn dphi(&self, s: f64) -> f64 {
        if s <= self.a1 {
            self.c1
        } else if s < self.b1 {
            self.lower.eval(s)
        } else if s <= self.a2 {
            self.m * s.powf(self.m - 1.0)
        } else if s < self.b2 {
            self.upper.eval(s)
        } else {
            self.c3
        }
    }

    pub fn phi_inverse(&self, u: f64) -> f64 {
        let u = u.max(0.0);
        if u <= self.c1 * self.a1 {
            return u / self.c1;
        }
        if u >= self.phi_b2 {
            return self.b2 + (u - self.phi_b2) / self.c3;
        }
        if (self.phi_b1..=self.phi_a2).contains(&u) {
            return (u - self.phi_b1 + self.b1.powf(self.m))
                .powf(1.0 / self.m)
                .clamp(self.b1, self.a2);
        }
        let (mut lo, mut hi) = if u < self.phi_b1 {
            (self.a1, self.b1)
        } else {
            (self.a2, self.b2)
        };
        let mut s = 0.5 * (lo + hi);
        for _ in 0..60 {
            let f = self.phi(s) - u;
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let next = s - f / self.dphi(s);
            s = if next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if (hi - lo) < 1e-15 * hi || f.abs() <= 1e-16 * u {
                break;
            }
        }
        s
    }

    fn pieces(&self, s: f64) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let cuts = [0.0, self.a1, self.b1, self.a2, self.b2, f64::INFINITY];
        (0..5).filter_map(move |i| {
            let lo = cuts[i];
            let hi = cuts[i + 1].min(s);
            (hi > lo).then_some((i, lo, hi))
        })
    }

    fn g_phi(&self, s: f64) -> f64 {
        let m = self.m;
        let gl = GaussLegendre::new(12.try_into().expect("nonzero"));
        self.pieces(s)
            .map(|(i, a, b)| match i {
                0 => (s * (b - a) - (b * b - a * a) / 2.0) / self.c1,
                4 => (s * (b - a) - (b * b - a * a) / 2.0) / self.c3,
                2 => {
                    (s * (b.powf(2.0 - m) - a.powf(2.0 - m)) / (2.0 - m)
                        - (b.powf(3.0 - m) - a.powf(3.0 - m)) / (3.0 - m))
                        / m
                }
                _ => gl.integrate(a, b, |t| (s - t) / self.dphi(t)),
            })
            .sum()
    }

    fn psi(&self, s: f64) -> f64 {
        let m = self.m;
        let gl = GaussLegendre::new(8.try_into().expect("nonzero"));
        let integral: f64 = self
            .pieces(s)
            .map(|(i, a, b)| match i {
                0 => self.c1 * (b * b - a * a) / 2.0,
                2 => {
                    (b.powf(m + 1.0) - a.powf(m + 1.0)) / (m + 1.0)
                        + (self.phi_b1 - self.b1.powf(m)) * (b - a)
                }
                4 => (self.phi_b2 - self.c3 * self.b2) * (b - a) + self.c3 * (b * b - a * a) / 2.0,
                _ => gl.integrate(a, b, |t| self.phi(t)),
            })
            .sum();
        2.0 * integral
    }
}
