use std::fs;

use super::config::{ExperimentConfig, InitialCondition};
use crate::model::Problem;

/// Cell values of the initial density, scaled to carry `mass0`.
pub fn initial_density(config: &ExperimentConfig, problem: &Problem) -> Result<Vec<f64>, String> {
    let g = &problem.grid;
    let raw: Vec<f64> = match &config.initial {
        InitialCondition::Uniform => vec![1.0; g.n_cells()],
        InitialCondition::Gaussian { sigma } => g
            .r_centers()
            .iter()
            .map(|r| (-r * r / (2.0 * sigma * sigma)).exp())
            .collect(),
        InitialCondition::Step { r0 } => {
            // fraction of each cell's volume inside |x| < r0
            let v0 = g.omega() * r0.powi(g.dim() as i32);
            let e = g.v_edges();
            (0..g.n_cells())
                .map(|i| ((v0.min(e[i + 1]) - e[i]) / g.dv()).clamp(0.0, 1.0))
                .collect()
        }
        InitialCondition::File { path } => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            from_table(&text, g.r_centers()).map_err(|e| format!("{}: {e}", path.display()))?
        }
    };
    if let Some((i, x)) = raw
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.is_finite() && **x >= 0.0))
    {
        return Err(format!(
            "initial density is negative or not finite in cell {i} ({x})"
        ));
    }
    let mass = g.integrate(&raw);
    if !(mass > 0.0) {
        return Err("initial density carries no mass on the grid".into());
    }
    let scale = problem.params.mass0 / mass;
    Ok(raw.into_iter().map(|x| x * scale).collect())
}

/// One column of cell values, or (r, ρ) pairs interpolated linearly (constant beyond the ends).
fn from_table(text: &str, centers: &[f64]) -> Result<Vec<f64>, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match fields {
            Ok(f) => rows.push(f),
            Err(_) if rows.is_empty() => continue,
            Err(_) => return Err(format!("line {}: not numeric", i + 1)),
        }
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err("rows have different lengths".into());
    }
    match width {
        1 if rows.len() == centers.len() => Ok(rows.into_iter().map(|r| r[0]).collect()),
        1 => Err(format!(
            "expected {} cell values, found {}",
            centers.len(),
            rows.len()
        )),
        2 => {
            if rows.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err("radii must increase".into());
            }
            Ok(centers
                .iter()
                .map(|&r| {
                    let k = rows.partition_point(|row| row[0] <= r);
                    if k == 0 {
                        rows[0][1]
                    } else if k == rows.len() {
                        rows[k - 1][1]
                    } else {
                        let (a, b) = (&rows[k - 1], &rows[k]);
                        a[1] + (b[1] - a[1]) * (r - a[0]) / (b[0] - a[0])
                    }
                })
                .collect())
        }
        _ => Err(format!("expected 1 or 2 columns, found {width}")),
    }
}
