use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::initial::initial_density;
use crate::model::Radial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Holds,
    Fails,
    NotCheckable,
}

/// Outcome of one hypothesis. `witness` is the radius where a failure was seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    pub detail: String,
    pub witness: Option<f64>,
    /// Sampled constant (sup of the tested ratio), when one is meaningful.
    pub constant: Option<f64>,
    /// A failure that makes the discrete problem ill-posed.
    pub blocking: bool,
}

impl Verdict {
    fn holds(detail: impl Into<String>, constant: Option<f64>) -> Self {
        Verdict {
            status: Status::Holds,
            detail: detail.into(),
            witness: None,
            constant,
            blocking: false,
        }
    }

    fn fails(detail: impl Into<String>, witness: Option<f64>) -> Self {
        Verdict {
            status: Status::Fails,
            detail: detail.into(),
            witness,
            constant: None,
            blocking: false,
        }
    }

    fn unknown(detail: impl Into<String>) -> Self {
        Verdict {
            status: Status::NotCheckable,
            detail: detail.into(),
            witness: None,
            constant: None,
            blocking: false,
        }
    }
}

/// H0..H8 keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub verdicts: BTreeMap<String, Verdict>,
}

impl HypothesisReport {
    pub fn get(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.get(name)
    }

    pub fn blocking(&self) -> Vec<(&str, &Verdict)> {
        self.verdicts
            .iter()
            .filter(|(_, v)| v.blocking)
            .map(|(k, v)| (k.as_str(), v))
            .collect()
    }
}

/// Threshold of the Carlson–Levin range: m must exceed (1 + d - √(2d+1))/d.
pub fn carlson_levin_threshold(d: usize) -> f64 {
    let d = d as f64;
    (1.0 + d - (2.0 * d + 1.0).sqrt()) / d
}

/// Log-spaced radii in [lo, hi], plus the origin.
fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).ceil() as usize;
    std::iter::once(0.0)
        .chain((0..=n).map(|i| lo * 10f64.powf(decades * i as f64 / n as f64)))
        .collect()
}

const FAR: f64 = 1e6;

/// sup of f over the grid, with the argmax.
fn sup(radii: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    radii
        .iter()
        .fold((f64::NEG_INFINITY, 0.0), |(best, at), &r| {
            let v = f(r);
            if v > best || v.is_nan() {
                (if v.is_nan() { f64::INFINITY } else { v }, r)
            } else {
                (best, at)
            }
        })
}

/// Central second difference of the even extension x ↦ f(|x|), at x = r with step h.
fn second_difference(f: &Radial, r: f64, h: f64) -> f64 {
    (f.value((r + h).abs()) - 2.0 * f.value(r) + f.value((r - h).abs())) / (h * h)
}

/// Bounded Hessian on B_R, sampled: the second difference at the origin and at a spread of radii
/// must stay bounded as the step shrinks, and the tangential part f'/r must stay bounded.
fn bounded_hessian(f: &Radial, radius: f64) -> Result<f64, f64> {
    let steps = [1e-2, 1e-3, 1e-4];
    let mut bound = 0.0f64;
    for r in (0..=16).map(|i| radius * i as f64 / 16.0) {
        let vals: Vec<f64> = steps
            .iter()
            .map(|&h| second_difference(f, r, h * radius).abs())
            .collect();
        if vals.iter().any(|v| !v.is_finite())
            || (vals[2] > 10.0 * vals[0].max(1.0) && vals[2] > 4.0 * vals[1])
        {
            return Err(r);
        }
        bound = bound.max(vals[2]);
    }
    for r in log_grid(1e-9 * radius, radius, 4).into_iter().skip(1) {
        let t = (f.d1(r) / r).abs();
        if !t.is_finite() || t > 1e6 * bound.max(1.0) {
            return Err(r);
        }
        bound = bound.max(t);
    }
    Ok(bound)
}

fn gradient_growth(f: &Radial) -> Verdict {
    let radii = log_grid(1e-9, FAR, 8);
    let ratio = |r: f64| f.d1(r).abs() / (1.0 + r);
    let (c, at) = sup(&radii, ratio);
    if !c.is_finite() {
        return Verdict::fails("|∇f|/(1+|x|) is unbounded", Some(at));
    }
    let tail = ratio(FAR) / ratio(FAR / 10.0).max(f64::MIN_POSITIVE);
    if ratio(FAR) > 0.0 && tail > 1.5 {
        return Verdict::fails(
            format!(
                "|∇f|/(1+|x|) grows like |x|^{:.3} at infinity",
                tail.log10()
            ),
            Some(FAR),
        );
    }
    Verdict::holds(format!("sup |∇f|/(1+|x|) ≈ {c:.6}"), Some(c))
}

fn bounded_laplacian(f: &Radial, d: usize) -> Result<f64, f64> {
    let radii = log_grid(1e-9, FAR, 8);
    let (c, at) = sup(&radii, |r| f.laplacian(r, d).abs());
    if !c.is_finite() {
        return Err(at);
    }
    let near = f.laplacian(1e-9, d).abs();
    if near > 10.0 * f.laplacian(1e-6, d).abs().max(1.0) {
        return Err(1e-9);
    }
    if f.laplacian(FAR, d).abs() > 1.5 * f.laplacian(FAR / 10.0, d).abs().max(1.0) {
        return Err(FAR);
    }
    Ok(c)
}

/// Largest exponent of a term that grows at infinity (0 for bounded fields).
fn growth_exponent(f: &Radial) -> f64 {
    match f {
        Radial::Quadratic { a } if *a > 0.0 => 2.0,
        Radial::Power { a, p } if *a > 0.0 => *p,
        Radial::Sum(parts) => parts.iter().map(growth_exponent).fold(0.0, f64::max),
        _ => 0.0,
    }
}

/// Checks (H0)-(H8) by symbolic evaluation and sampling. Never fails; unknowns are reported as such.
pub fn check_hypotheses(config: &ExperimentConfig) -> HypothesisReport {
    let p = &config.params;
    let (v, w) = (&config.potential.v, &config.potential.w);
    let mut out = BTreeMap::new();

    let h0 = {
        let finite = |f: &Radial| {
            log_grid(1e-12 * p.radius, p.radius, 8)
                .into_iter()
                .find(|&r| !f.value(r).is_finite())
        };
        if let Some(r) = finite(v).or_else(|| finite(w)) {
            Verdict {
                blocking: true,
                ..Verdict::fails("V or W is not finite on the ball", Some(r))
            }
        } else {
            match (
                bounded_hessian(v, p.radius),
                bounded_hessian(w, 2.0 * p.radius),
            ) {
                (Ok(a), Ok(b)) => {
                    let mut detail = format!("sampled Hessian bounds: V {a:.6}, W {b:.6}");
                    let normal = v.d1(p.radius);
                    if normal != 0.0 {
                        detail.push_str(&format!(
                            "; ∂_rV(R) = {normal:.6} (no-flux is imposed by the scheme)"
                        ));
                    }
                    Verdict::holds(detail, Some(a.max(b)))
                }
                (Err(r), _) => Verdict::fails("V has an unbounded second derivative", Some(r)),
                (_, Err(r)) => Verdict::fails("W has an unbounded second derivative", Some(r)),
            }
        }
    };
    out.insert("H0".to_string(), h0);

    let h1 = {
        let q = growth_exponent(v);
        let need = p.d as f64 * (1.0 - p.m) / p.m;
        if q > need {
            Verdict::holds(
                format!("V grows like |x|^{q}; whole space needs exponent > {need:.6}"),
                Some(q),
            )
        } else {
            Verdict::fails(
                format!("V grows like |x|^{q}; whole space needs exponent > {need:.6}"),
                Some(FAR),
            )
        }
    };
    out.insert("H1".to_string(), h1);

    let threshold = carlson_levin_threshold(p.d);
    let h2 = if p.m > threshold {
        Verdict::holds(format!("m = {} > {threshold:.6}", p.m), Some(threshold))
    } else {
        Verdict::fails(format!("m = {} <= {threshold:.6}", p.m), None)
    };
    out.insert("H2".to_string(), h2);

    let h3 = match config.problem() {
        Ok(problem) => match initial_density(config, &problem) {
            Ok(rho) => {
                let q = p.p_moment();
                let w = problem.grid.cell_power_averages(q);
                let moment: f64 =
                    rho.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() * problem.grid.dv();
                if moment.is_finite() {
                    Verdict::holds(format!("∫|x|^{q:.6} ρ₀ = {moment:.6e}"), Some(moment))
                } else {
                    Verdict::fails("initial moment is infinite", None)
                }
            }
            Err(e) => Verdict::unknown(format!("initial condition unavailable: {e}")),
        },
        Err(e) => Verdict::unknown(format!("grid unavailable: {e}")),
    };
    out.insert("H3".to_string(), h3);

    out.insert("H4".to_string(), gradient_growth(v));
    out.insert("H5".to_string(), gradient_growth(w));

    let h6 = match (bounded_laplacian(v, p.d), bounded_laplacian(w, p.d)) {
        (Ok(a), Ok(b)) => Verdict::holds(
            format!("sup |ΔV| ≈ {a:.6}, sup |ΔW| ≈ {b:.6}"),
            Some(a.max(b)),
        ),
        (Err(r), _) => Verdict::fails("ΔV is unbounded", Some(r)),
        (_, Err(r)) => Verdict::fails("ΔW is unbounded", Some(r)),
    };
    out.insert("H6".to_string(), h6);

    let h7 = {
        let radii = log_grid(1.0, FAR, 8);
        let ratio = |r: f64| {
            let g = w.d1(r).abs();
            if g == 0.0 {
                0.0
            } else {
                g / v.value(r)
            }
        };
        let tail_sup = |sigma: f64| {
            sup(
                &radii
                    .iter()
                    .copied()
                    .filter(|&r| r >= sigma)
                    .collect::<Vec<_>>(),
                ratio,
            )
        };
        let (near, _) = tail_sup(10.0);
        let (far, at) = tail_sup(FAR / 10.0);
        if far == 0.0 || (far.is_finite() && far <= 1e-3 * near.max(1.0)) {
            Verdict::holds(
                format!("sup_(|x|>σ) |∇W|/V ≈ {far:.3e} at σ = 1e5"),
                Some(far),
            )
        } else {
            Verdict::fails(
                format!("sup_(|x|>σ) |∇W|/V ≈ {far:.3e} does not vanish"),
                Some(at),
            )
        }
    };
    out.insert("H7".to_string(), h7);

    let h8 = {
        let ys = log_grid(1e-6, FAR, 8);
        let xs: Vec<f64> = (0..=8).map(|i| p.radius * i as f64 / 8.0).collect();
        let ratio_up_to = |top: f64| {
            let ys: Vec<f64> = ys.iter().copied().filter(|&y| y <= top).collect();
            xs.iter()
                .map(|&x| {
                    sup(&ys, |y| {
                        v.value(y + x).max(v.value((y - x).abs())) / (1.0 + v.value(y))
                    })
                })
                .fold((0.0f64, 0.0), |a, b| if b.0 > a.0 { b } else { a })
        };
        let (mid, _) = ratio_up_to(FAR / 10.0);
        let (all, at) = ratio_up_to(FAR);
        if all.is_finite() && all <= 1.5 * mid {
            Verdict::holds(format!("C(B_R) ≈ {all:.6}"), Some(all))
        } else {
            Verdict::fails("V(y-x)/(1+V(y)) grows along the tail", Some(at))
        }
    };
    out.insert("H8".to_string(), h8);

    HypothesisReport { verdicts: out }
}
