use crate::error::{RepairError, Result};

/// Rounds away binary noise from `a + i * step` so grids print cleanly.
fn tidy(v: f64) -> f64 {
    (v * 1e10).round() / 1e10
}

/// Parses `a:step:b` (inclusive), a comma list, or a single value.
pub fn parse_real_grid(s: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| RepairError::Parse(format!("grid {s:?}: {what}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
                return Err(bad("need step > 0 and start <= end"));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| tidy(a + i as f64 * step)).collect()
        }
        [single] => single.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad("expected a:step:b or a comma list")),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad("empty or non-finite"));
    }
    Ok(values)
}

/// Parses `a..b` (inclusive), a comma list, or a single value.
pub fn parse_index_grid(s: &str) -> Result<Vec<usize>> {
    let bad = |what: &str| RepairError::Parse(format!("grid {s:?}: {what}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| bad(&e.to_string()));
    let values: Vec<usize> = match s.split_once("..") {
        Some((a, b)) => {
            let b = b.strip_prefix('=').unwrap_or(b);
            let (a, b) = (num(a)?, num(b)?);
            if b < a {
                return Err(bad("end before start"));
            }
            (a..=b).collect()
        }
        None => s.split(',').map(num).collect::<Result<_>>()?,
    };
    if values.is_empty() {
        return Err(bad("empty"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_grids() {
        let g = parse_real_grid("0:0.05:1").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[3], 0.15);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(parse_real_grid("0.3, 0.5,0.7").unwrap(), vec![0.3, 0.5, 0.7]);
        assert_eq!(parse_real_grid("0.4").unwrap(), vec![0.4]);
        assert!(parse_real_grid("1:0:2").is_err());
        assert!(parse_real_grid("1:2").is_err());
        assert!(parse_real_grid("a").is_err());
    }

    #[test]
    fn index_grids() {
        assert_eq!(parse_index_grid("1..6").unwrap(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(parse_index_grid("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_index_grid("500,1000").unwrap(), vec![500, 1000]);
        assert!(parse_index_grid("3..1").is_err());
    }
}
