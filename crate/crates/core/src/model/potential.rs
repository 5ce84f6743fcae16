use std::fmt;
use std::str::FromStr;

use crate::error::{ModelError, ModelResult};

/// A radial scalar field f(|x|) with closed-form first and second radial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum Radial {
    Zero,
    /// a |x|^2
    Quadratic {
        a: f64,
    },
    /// a |x|^p
    Power {
        a: f64,
        p: f64,
    },
    /// a exp(1 - 1/(1 - (|x|/r0)^2)) inside |x| < r0, zero outside.
    CompactBump {
        a: f64,
        r0: f64,
    },
    Sum(Vec<Radial>),
}

impl Radial {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Radial::Zero => 0.0,
            Radial::Quadratic { a } => a * r * r,
            Radial::Power { a, p } => a * r.powf(*p),
            Radial::CompactBump { a, r0 } => {
                let s = r / r0;
                if s >= 1.0 {
                    0.0
                } else {
                    a * (1.0 - 1.0 / (1.0 - s * s)).exp()
                }
            }
            Radial::Sum(parts) => parts.iter().map(|f| f.value(r)).sum(),
        }
    }

    /// First radial derivative. At r = 0 the one-sided value is returned.
    pub fn d1(&self, r: f64) -> f64 {
        match self {
            Radial::Zero => 0.0,
            Radial::Quadratic { a } => 2.0 * a * r,
            Radial::Power { a, p } => {
                if r == 0.0 {
                    power_at_zero(*a, *p - 1.0) * p
                } else {
                    a * p * r.powf(p - 1.0)
                }
            }
            Radial::CompactBump { a, r0 } => {
                let s = r / r0;
                if s >= 1.0 {
                    return 0.0;
                }
                let q = 1.0 - s * s;
                let f = a * (1.0 - 1.0 / q).exp();
                f * (-2.0 * s / (r0 * q * q))
            }
            Radial::Sum(parts) => parts.iter().map(|f| f.d1(r)).sum(),
        }
    }

    pub fn d2(&self, r: f64) -> f64 {
        match self {
            Radial::Zero => 0.0,
            Radial::Quadratic { a } => 2.0 * a,
            Radial::Power { a, p } => {
                if r == 0.0 {
                    power_at_zero(*a, *p - 2.0) * p * (p - 1.0)
                } else {
                    a * p * (p - 1.0) * r.powf(p - 2.0)
                }
            }
            Radial::CompactBump { a, r0 } => {
                let s = r / r0;
                if s >= 1.0 {
                    return 0.0;
                }
                let q = 1.0 - s * s;
                let f = a * (1.0 - 1.0 / q).exp();
                let g1 = -2.0 * s / (r0 * q * q);
                let g2 = -2.0 / (r0 * r0 * q * q) - 8.0 * s * s / (r0 * r0 * q * q * q);
                f * (g1 * g1 + g2)
            }
            Radial::Sum(parts) => parts.iter().map(|f| f.d2(r)).sum(),
        }
    }

    /// Laplacian of the radial field in dimension d.
    pub fn laplacian(&self, r: f64, d: usize) -> f64 {
        if r == 0.0 {
            d as f64 * self.d2(0.0)
        } else {
            self.d2(r) + (d as f64 - 1.0) * self.d1(r) / r
        }
    }

    /// Coefficient a when the field is exactly a |x|^2.
    pub fn quadratic_coefficient(&self) -> Option<f64> {
        match self {
            Radial::Quadratic { a } => Some(*a),
            Radial::Power { a, p } if *p == 2.0 => Some(*a),
            Radial::Sum(parts) => {
                let mut total = 0.0;
                for f in parts {
                    match f {
                        Radial::Zero => {}
                        other => total += other.quadratic_coefficient()?,
                    }
                }
                Some(total)
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Radial::Zero => true,
            Radial::Quadratic { a } | Radial::Power { a, .. } | Radial::CompactBump { a, .. } => {
                *a == 0.0
            }
            Radial::Sum(parts) => parts.iter().all(Radial::is_zero),
        }
    }

    /// Radius beyond which the field vanishes identically, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            Radial::Zero => Some(0.0),
            Radial::CompactBump { r0, .. } => Some(*r0),
            Radial::Sum(parts) => parts
                .iter()
                .map(Radial::support_radius)
                .try_fold(0.0f64, |acc, s| s.map(|s| acc.max(s))),
            _ if self.is_zero() => Some(0.0),
            _ => None,
        }
    }

    /// Smallest power appearing in the field (used to flag non-smooth origins).
    pub fn min_power(&self) -> Option<f64> {
        match self {
            Radial::Power { a, p } if *a != 0.0 => Some(*p),
            Radial::Quadratic { a } if *a != 0.0 => Some(2.0),
            Radial::Sum(parts) => parts.iter().filter_map(Radial::min_power).reduce(f64::min),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let nonneg = |a: f64| {
            if a >= 0.0 && a.is_finite() {
                Ok(())
            } else {
                Err(format!("amplitude must be finite and nonnegative, got {a}"))
            }
        };
        match self {
            Radial::Zero => Ok(()),
            Radial::Quadratic { a } => nonneg(*a),
            Radial::Power { a, p } => {
                nonneg(*a)?;
                if *p > 0.0 && p.is_finite() {
                    Ok(())
                } else {
                    Err(format!("power exponent must be positive, got {p}"))
                }
            }
            Radial::CompactBump { a, r0 } => {
                nonneg(*a)?;
                if *r0 > 0.0 && r0.is_finite() {
                    Ok(())
                } else {
                    Err(format!("bump radius must be positive, got {r0}"))
                }
            }
            Radial::Sum(parts) => parts.iter().try_for_each(Radial::validate),
        }
    }
}

fn power_at_zero(a: f64, exponent: f64) -> f64 {
    if a == 0.0 || exponent > 0.0 {
        0.0
    } else if exponent == 0.0 {
        a
    } else {
        f64::INFINITY
    }
}

impl fmt::Display for Radial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Radial::Zero => write!(f, "zero"),
            Radial::Quadratic { a } => write!(f, "quadratic{{{a}}}"),
            Radial::Power { a, p } => write!(f, "power{{{a},{p}}}"),
            Radial::CompactBump { a, r0 } => write!(f, "compact_bump{{{a},{r0}}}"),
            Radial::Sum(parts) => {
                write!(f, "sum[")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, "]")
            }
        }
    }
}

impl FromStr for Radial {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser {
            src: s.as_bytes(),
            pos: 0,
        };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing characters after expression"));
        }
        out.validate()
            .map_err(|reason| ModelError::Expression { column: 1, reason })?;
        Ok(out)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, reason: &str) -> ModelError {
        ModelError::Expression {
            column: self.pos + 1,
            reason: reason.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> ModelResult<()> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn ident(&mut self) -> ModelResult<&str> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an expression tag"));
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos]).expect("ascii"))
    }

    fn number(&mut self) -> ModelResult<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && matches!(
                self.src[self.pos],
                b'0'..=b'9' | b'.' | b'e' | b'E' | b'+' | b'-'
            )
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map_err(|_| ModelError::Expression {
            column: start + 1,
            reason: format!("expected a number, found `{text}`"),
        })
    }

    fn args(&mut self, n: usize) -> ModelResult<Vec<f64>> {
        self.expect(b'{')?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                self.expect(b',')?;
            }
            out.push(self.number()?);
        }
        self.expect(b'}')?;
        Ok(out)
    }

    fn expr(&mut self) -> ModelResult<Radial> {
        let start = self.pos;
        let tag = self.ident()?.to_string();
        match tag.as_str() {
            "zero" => Ok(Radial::Zero),
            "quadratic" => {
                let a = self.args(1)?;
                Ok(Radial::Quadratic { a: a[0] })
            }
            "power" => {
                let a = self.args(2)?;
                Ok(Radial::Power { a: a[0], p: a[1] })
            }
            "compact_bump" => {
                let a = self.args(2)?;
                Ok(Radial::CompactBump { a: a[0], r0: a[1] })
            }
            "sum" => {
                self.expect(b'[')?;
                let mut parts = vec![self.expr()?];
                loop {
                    self.skip_ws();
                    match self.src.get(self.pos) {
                        Some(b',') => {
                            self.pos += 1;
                            parts.push(self.expr()?);
                        }
                        Some(b']') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.error("expected `,` or `]` in sum")),
                    }
                }
                Ok(Radial::Sum(parts))
            }
            other => Err(ModelError::Expression {
                column: start + 1,
                reason: format!("unknown expression tag `{other}`"),
            }),
        }
    }
}

/// Confinement potential V and interaction kernel W.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub v: Radial,
    pub w: Radial,
}

impl PotentialSpec {
    pub fn new(v: Radial, w: Radial) -> Self {
        Self { v, w }
    }

    pub fn free() -> Self {
        Self {
            v: Radial::Zero,
            w: Radial::Zero,
        }
    }

    pub fn v_compact_support(&self) -> bool {
        self.v.support_radius().is_some()
    }

    pub fn w_compact_support(&self) -> bool {
        self.w.support_radius().is_some()
    }

    /// Some(a) when W(x) = a |x|^2.
    pub fn w_quadratic(&self) -> Option<f64> {
        self.w.quadratic_coefficient()
    }

    pub fn w_is_quadratic(&self) -> bool {
        self.w_quadratic().is_some()
    }
}
