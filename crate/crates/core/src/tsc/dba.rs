use super::dtw::{dtw_squared, dtw_squared_path};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbaConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub band: Option<usize>,
}

impl Default for DbaConfig {
    fn default() -> Self {
        DbaConfig {
            max_iter: 30,
            tol: 1e-6,
            band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbaResult {
    pub centroid: Vec<f64>,
    /// Sum of squared DTW distances from the members to the centroid.
    pub inertia: f64,
    pub iterations: usize,
}

/// Linear-interpolation resampling onto `len` evenly spaced positions.
pub fn resample(x: &[f64], len: usize) -> Vec<f64> {
    if len == 0 || x.is_empty() {
        return Vec::new();
    }
    if x.len() == len {
        return x.to_vec();
    }
    if x.len() == 1 || len == 1 {
        return vec![x[0]; len];
    }
    let step = (x.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|i| {
            let t = i as f64 * step;
            let lo = (t.floor() as usize).min(x.len() - 2);
            let frac = t - lo as f64;
            x[lo] * (1.0 - frac) + x[lo + 1] * frac
        })
        .collect()
}

/// Median member length, taking the upper middle for even counts.
pub fn median_length(members: &[&[f64]]) -> usize {
    let mut lens: Vec<usize> = members.iter().map(|m| m.len()).collect();
    lens.sort_unstable();
    lens.get(lens.len() / 2).copied().unwrap_or(0)
}

/// Member minimizing the summed squared DTW distance to all others; ties go
/// to the earliest.
pub fn medoid(members: &[&[f64]], band: Option<usize>) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for (i, a) in members.iter().enumerate() {
        let mut total = 0.0;
        for (j, b) in members.iter().enumerate() {
            if i != j {
                total += dtw_squared(a, b, band)?;
            }
        }
        if total < best.1 {
            best = (i, total);
        }
    }
    Ok(best.0)
}

fn align(
    members: &[&[f64]],
    centroid: &[f64],
    band: Option<usize>,
) -> Result<(f64, Vec<Vec<(usize, usize)>>)> {
    let mut inertia = 0.0;
    let mut paths = Vec::with_capacity(members.len());
    for m in members {
        let (sq, path) = dtw_squared_path(centroid, m, band)?;
        inertia += sq;
        paths.push(path);
    }
    Ok((inertia, paths))
}

fn barycenter(members: &[&[f64]], paths: &[Vec<(usize, usize)>], len: usize) -> Vec<f64> {
    let mut sum = vec![0.0; len];
    let mut count = vec![0usize; len];
    for (m, path) in members.iter().zip(paths) {
        for &(c, j) in path {
            sum[c] += m[j];
            count[c] += 1;
        }
    }
    sum.into_iter()
        .zip(count)
        .map(|(s, c)| s / c as f64)
        .collect()
}

/// DTW barycenter of `members` with `length` cells, initialized from the
/// medoid resampled to `length`. A single member is returned resampled.
pub fn dba_centroid(members: &[&[f64]], length: usize, cfg: &DbaConfig) -> Result<DbaResult> {
    if members.is_empty() {
        return Err(Error::Validation("DBA needs at least one member".into()));
    }
    if length == 0 {
        return Err(Error::Validation(
            "DBA centroid length must be positive".into(),
        ));
    }
    if members.len() == 1 {
        let centroid = resample(members[0], length);
        let inertia = dtw_squared(&centroid, members[0], cfg.band)?;
        return Ok(DbaResult {
            centroid,
            inertia,
            iterations: 0,
        });
    }
    let init = resample(members[medoid(members, cfg.band)?], length);
    dba_refine(members, init, cfg)
}

/// DBA iterations starting from `init`; the centroid keeps `init`'s length.
/// Each accepted update does not increase the inertia.
pub fn dba_refine(members: &[&[f64]], init: Vec<f64>, cfg: &DbaConfig) -> Result<DbaResult> {
    if members.is_empty() || init.is_empty() {
        return Err(Error::Validation(
            "DBA needs members and a non-empty initial centroid".into(),
        ));
    }
    let len = init.len();
    let mut centroid = init;
    let (mut inertia, mut paths) = align(members, &centroid, cfg.band)?;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let next = barycenter(members, &paths, len);
        let (next_inertia, next_paths) = align(members, &next, cfg.band)?;
        if next_inertia > inertia {
            break;
        }
        let gain = inertia - next_inertia;
        centroid = next;
        inertia = next_inertia;
        paths = next_paths;
        if gain < cfg.tol {
            break;
        }
    }
    Ok(DbaResult {
        centroid,
        inertia,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_member_is_resampled() {
        let m = [1.0, 2.0, 4.0];
        let r = dba_centroid(&[&m], 3, &DbaConfig::default()).unwrap();
        assert_eq!(r.centroid, m.to_vec());
        assert_eq!(r.inertia, 0.0);
        let r = dba_centroid(&[&m], 5, &DbaConfig::default()).unwrap();
        assert_eq!(r.centroid, vec![1.0, 1.5, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn identical_members() {
        let m = [0.5, -1.0, 2.0, 2.0];
        let r = dba_centroid(&[&m, &m, &m], 4, &DbaConfig::default()).unwrap();
        assert_eq!(r.centroid, m.to_vec());
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn symmetric_constant_members() {
        let r = dba_centroid(
            &[&[0.0, 0.0, 0.0], &[2.0, 2.0, 2.0]],
            3,
            &DbaConfig::default(),
        )
        .unwrap();
        for v in &r.centroid {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((r.inertia - 6.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_never_worsens_the_medoid() {
        let a = [0.0, 1.0, 2.0, 3.0, 2.0];
        let b = [0.1, 0.9, 3.1, 2.2];
        let c = [0.0, 0.5, 1.0, 2.5, 3.0, 2.0];
        let members: Vec<&[f64]> = vec![&a, &b, &c];
        let len = median_length(&members);
        assert_eq!(len, 5);
        let init = resample(members[medoid(&members, None).unwrap()], len);
        let start: f64 = members
            .iter()
            .map(|m| dtw_squared(&init, m, None).unwrap())
            .sum();
        let r = dba_centroid(&members, len, &DbaConfig::default()).unwrap();
        assert_eq!(r.centroid.len(), len);
        assert!(r.inertia <= start + 1e-12);
    }

    #[test]
    fn resample_endpoints() {
        assert_eq!(resample(&[2.0], 3), vec![2.0; 3]);
        assert_eq!(resample(&[0.0, 3.0], 4), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(resample(&[0.0, 1.0, 5.0], 1), vec![0.0]);
    }
}
