use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::design::Design;
use super::special::normal_two_sided_p;
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_975: f64 = 1.959_964;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemlConfig {
    /// Convergence threshold on the gradient norm of the REML log-likelihood.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RemlConfig {
    fn default() -> Self {
        RemlConfig {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedEffect {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
}

/// Random-effect covariance `G` entries and the residual variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceComponents {
    pub participant_var: f64,
    pub participant_semester_cov: Option<f64>,
    pub semester_var: Option<f64>,
    pub residual_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedModelFit {
    pub fixed: Vec<FixedEffect>,
    pub variance: VarianceComponents,
    pub reml_loglik: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    pub group_min: usize,
    pub group_mean: f64,
    pub group_max: usize,
    pub converged: bool,
    /// Some variance component sits at (numerically) zero.
    pub boundary: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Log-Cholesky parameters of the relative covariance `G / residual_var`.
    pub theta: Vec<f64>,
}

/// Per-group cross products used by every likelihood evaluation.
struct Suff {
    n: usize,
    p: usize,
    q: usize,
    sxx: DMatrix<f64>,
    sxy: DVector<f64>,
    syy: f64,
    groups: Vec<GroupSuff>,
}

struct GroupSuff {
    szz: DMatrix<f64>,
    szx: DMatrix<f64>,
    szy: DVector<f64>,
}

impl Suff {
    fn new(d: &Design) -> Self {
        let (n, p, q) = (d.n_obs(), d.x.ncols(), d.z.ncols());
        let groups = (0..d.n_groups())
            .map(|g| {
                let rows = d.group_rows(g);
                let z = d.z.select_rows(&rows);
                let x = d.x.select_rows(&rows);
                let y = d.y.select_rows(&rows);
                let zt = z.transpose();
                GroupSuff {
                    szz: &zt * &z,
                    szx: &zt * &x,
                    szy: &zt * &y,
                }
            })
            .collect();
        Suff {
            n,
            p,
            q,
            sxx: d.x.transpose() * &d.x,
            sxy: d.x.transpose() * &d.y,
            syy: d.y.dot(&d.y),
            groups,
        }
    }
}

pub(crate) fn n_theta(q: usize) -> usize {
    q * (q + 1) / 2
}

/// Lower-triangular factor with exponentiated diagonal, filled row by row,
/// and its partial derivatives.
fn lambda(theta: &[f64], q: usize) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let mut l = DMatrix::zeros(q, q);
    let mut grads = Vec::with_capacity(theta.len());
    let mut k = 0;
    for i in 0..q {
        for j in 0..=i {
            let mut d = DMatrix::zeros(q, q);
            if i == j {
                l[(i, j)] = theta[k].exp();
                d[(i, j)] = theta[k].exp();
            } else {
                l[(i, j)] = theta[k];
                d[(i, j)] = 1.0;
            }
            grads.push(d);
            k += 1;
        }
    }
    (l, grads)
}

struct Eval {
    loglik: f64,
    grad: Vec<f64>,
    beta: DVector<f64>,
    a_inv: DMatrix<f64>,
    sigma2: f64,
}

fn log_det_spd(
    m: &DMatrix<f64>,
    what: &str,
) -> Result<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))?;
    let ld = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((ld, chol))
}

/// Profiled REML log-likelihood at relative-covariance factor `l`
/// (`G = sigma^2 l l'`), with the gradient along each of `dl`.
fn evaluate(s: &Suff, l: &DMatrix<f64>, dl: &[DMatrix<f64>]) -> Result<Eval> {
    let dof = (s.n - s.p) as f64;
    let mut a = s.sxx.clone();
    let mut b = s.sxy.clone();
    let mut yy = s.syy;
    let mut logdet_c = 0.0;
    let mut ks = Vec::with_capacity(s.groups.len());
    if s.q > 0 {
        let lt = l.transpose();
        for g in &s.groups {
            let c = DMatrix::identity(s.q, s.q) + &lt * &g.szz * l;
            let (ld, chol) = log_det_spd(&c, "random-effect system")?;
            logdet_c += ld;
            let k = l * chol.inverse() * &lt;
            let kzx = &k * &g.szx;
            a -= g.szx.transpose() * &kzx;
            b -= kzx.transpose() * &g.szy;
            yy -= g.szy.dot(&(&k * &g.szy));
            ks.push(k);
        }
    }
    let a = (&a + a.transpose()) * 0.5;
    let (logdet_a, chol_a) = log_det_spd(&a, "X' V^-1 X")?;
    let beta = chol_a.solve(&b);
    let quad = yy - beta.dot(&b);
    if !(quad > 0.0) {
        return Err(Error::Numerical(
            "non-positive residual quadratic form".into(),
        ));
    }
    let sigma2 = quad / dof;
    let loglik =
        -0.5 * (dof * (1.0 + (2.0 * std::f64::consts::PI * sigma2).ln()) + logdet_c + logdet_a);
    let a_inv = chol_a.inverse();

    let mut grad = vec![0.0; dl.len()];
    if s.q > 0 && !dl.is_empty() {
        let mdots: Vec<DMatrix<f64>> = dl
            .iter()
            .map(|d| d * l.transpose() + l * d.transpose())
            .collect();
        for (g, k) in s.groups.iter().zip(&ks) {
            let w = &g.szz - &g.szz * k * &g.szz;
            let bmat = &g.szx - &g.szz * k * &g.szx;
            let bab = &bmat * &a_inv * bmat.transpose();
            let szr = &g.szy - &g.szx * &beta;
            let u = &szr - &g.szz * k * &szr;
            for (gk, m) in grad.iter_mut().zip(&mdots) {
                let tr_w = (m * &w).trace();
                let tr_b = (m * &bab).trace();
                let quad_u = u.dot(&(m * &u));
                *gk += -0.5 * (tr_w - tr_b - dof * quad_u / quad);
            }
        }
    }
    Ok(Eval {
        loglik,
        grad,
        beta,
        a_inv,
        sigma2,
    })
}

/// Profiled REML log-likelihood at log-Cholesky parameters `theta`.
pub fn reml_loglik(design: &Design, theta: &[f64]) -> Result<f64> {
    let s = Suff::new(design);
    if theta.len() != n_theta(s.q) {
        return Err(Error::Validation(format!(
            "expected {} parameters, got {}",
            n_theta(s.q),
            theta.len()
        )));
    }
    let (l, _) = lambda(theta, s.q);
    evaluate(&s, &l, &[]).map(|e| e.loglik)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_design(d: &Design) -> Result<()> {
    if d.n_obs() <= d.x.ncols() {
        return Err(Error::Validation(format!(
            "{} observations for {} fixed effects",
            d.n_obs(),
            d.x.ncols()
        )));
    }
    if d.z.ncols() > 0 && d.n_groups() == 0 {
        return Err(Error::Validation(
            "random effects need at least one group".into(),
        ));
    }
    Ok(())
}

fn starting_theta(d: &Design) -> Vec<f64> {
    let q = d.z.ncols();
    let mut theta = vec![0.0; n_theta(q)];
    let mut k = 0;
    for i in 0..q {
        for j in 0..=i {
            if i == j {
                let scale = d.z.column(i).iter().map(|v| v.abs()).sum::<f64>() / d.n_obs() as f64;
                theta[k] = -scale.max(1.0).ln();
            }
            k += 1;
        }
    }
    theta
}

/// REML fit of `y = X b + Z u + e` with `u ~ N(0, G)` per group and
/// `e ~ N(0, sigma^2 I)`.
///
/// `G / sigma^2` is parameterized by its log-Cholesky factor and `sigma^2`
/// is profiled out; BFGS with the analytic gradient runs until the gradient
/// norm falls below `cfg.tol`. Fixed effects and their covariance come from
/// GLS at the optimum. With no Z columns this is ordinary least squares.
pub fn reml_fit(design: &Design, cfg: &RemlConfig) -> Result<MixedModelFit> {
    check_design(design)?;
    let s = Suff::new(design);
    let mut theta = starting_theta(design);
    let eval_at = |t: &[f64]| {
        let (l, dl) = lambda(t, s.q);
        evaluate(&s, &l, &dl)
    };
    let mut cur = eval_at(&theta)?;
    let dim = theta.len();
    let mut h_inv = DMatrix::<f64>::identity(dim, dim);
    let mut fresh = true;
    let mut converged = norm(&cur.grad) < cfg.tol;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        // minimize f = -loglik, whose gradient is -grad
        let g = DVector::from_iterator(dim, cur.grad.iter().map(|v| -v));
        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            h_inv = DMatrix::identity(dim, dim);
            fresh = true;
            dir = -g.clone();
        }
        let longest = dir.amax();
        if longest > 3.0 {
            dir *= 3.0 / longest;
        }
        let slope = dir.dot(&g);
        let f0 = -cur.loglik;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(dir.iter())
                .map(|(t, d)| t + step * d)
                .collect();
            if let Ok(e) = eval_at(&trial) {
                let f1 = -e.loglik;
                let flat =
                    (f1 - f0).abs() <= 1e-13 * (1.0 + f0.abs()) && norm(&e.grad) < norm(&cur.grad);
                if f1 <= f0 + 1e-4 * step * slope || flat {
                    accepted = Some((trial, e));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next_theta, next)) = accepted else {
            if fresh {
                break;
            }
            h_inv = DMatrix::identity(dim, dim);
            fresh = true;
            continue;
        };
        let sv = DVector::from_iterator(dim, next_theta.iter().zip(&theta).map(|(a, b)| a - b));
        let yv =
            DVector::from_iterator(dim, next.grad.iter().zip(&cur.grad).map(|(a, b)| -(a - b)));
        let sy = sv.dot(&yv);
        if sy > 1e-12 * sv.norm() * yv.norm() {
            if fresh {
                h_inv *= sy / yv.dot(&yv);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(dim, dim);
            let left = &eye - &sv * yv.transpose() * rho;
            let right = &eye - &yv * sv.transpose() * rho;
            h_inv = &left * &h_inv * &right + &sv * sv.transpose() * rho;
        }
        theta = next_theta;
        cur = next;
        converged = norm(&cur.grad) < cfg.tol;
    }
    let (l, _) = lambda(&theta, s.q);
    Ok(assemble(
        design,
        &s,
        &l,
        &cur,
        theta.clone(),
        converged,
        iterations,
    ))
}

/// GLS fit at a fixed relative covariance `m = G / sigma^2` (PSD, q x q),
/// with `sigma^2` profiled. `m = 0` reproduces ordinary least squares.
pub fn gls_fit(design: &Design, m: &DMatrix<f64>) -> Result<MixedModelFit> {
    check_design(design)?;
    let s = Suff::new(design);
    if m.shape() != (s.q, s.q) {
        return Err(Error::Validation(
            "relative covariance has the wrong shape".into(),
        ));
    }
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v < -1e-12) {
        return Err(Error::Validation("relative covariance is not PSD".into()));
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let l = &eig.eigenvectors * sqrt;
    let e = evaluate(&s, &l, &[])?;
    let grad_norm = f64::NAN;
    let mut fit = assemble(design, &s, &l, &e, Vec::new(), true, 0);
    fit.grad_norm = grad_norm;
    Ok(fit)
}

fn assemble(
    d: &Design,
    s: &Suff,
    l: &DMatrix<f64>,
    e: &Eval,
    theta: Vec<f64>,
    converged: bool,
    iterations: usize,
) -> MixedModelFit {
    let fixed = d
        .columns
        .iter()
        .enumerate()
        .map(|(j, name)| FixedEffect {
            name: name.clone(),
            coef: e.beta[j],
            std_err: (e.sigma2 * e.a_inv[(j, j)]).max(0.0).sqrt(),
        })
        .collect();
    let g = l * l.transpose() * e.sigma2;
    let variance = VarianceComponents {
        participant_var: if s.q > 0 { g[(0, 0)] } else { 0.0 },
        participant_semester_cov: (s.q > 1).then(|| g[(1, 0)]),
        semester_var: (s.q > 1).then(|| g[(1, 1)]),
        residual_var: e.sigma2,
    };
    let boundary = (0..s.q).any(|i| g[(i, i)] <= 1e-8 * e.sigma2);
    let sizes: Vec<usize> = (0..d.n_groups()).map(|g| d.group_rows(g).len()).collect();
    MixedModelFit {
        fixed,
        variance,
        reml_loglik: e.loglik,
        n_obs: d.n_obs(),
        n_groups: d.n_groups(),
        group_min: sizes.iter().copied().min().unwrap_or(0),
        group_mean: if sizes.is_empty() {
            0.0
        } else {
            d.n_obs() as f64 / sizes.len() as f64
        },
        group_max: sizes.iter().copied().max().unwrap_or(0),
        converged,
        boundary,
        iterations,
        grad_norm: norm(&e.grad),
        theta,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldRow {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Wald z statistic, two-sided normal p-value and 95% interval.
pub fn wald(name: &str, coef: f64, std_err: f64) -> WaldRow {
    let z = if coef == 0.0 { 0.0 } else { coef / std_err };
    WaldRow {
        name: name.to_string(),
        coef,
        std_err,
        z,
        p_value: normal_two_sided_p(z),
        ci_low: coef - Z_975 * std_err,
        ci_high: coef + Z_975 * std_err,
    }
}

pub fn wald_tests(fit: &MixedModelFit) -> Vec<WaldRow> {
    fit.fixed
        .iter()
        .map(|f| wald(&f.name, f.coef, f.std_err))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_way(groups: &[&[f64]]) -> Design {
        let y: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
        let ids: Vec<String> = groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| vec![format!("g{i}"); g.len()])
            .collect();
        let n = y.len();
        Design::new(
            DVector::from_vec(y),
            DMatrix::from_element(n, 1, 1.0),
            vec!["intercept".into()],
            DMatrix::from_element(n, 1, 1.0),
            vec!["participant".into()],
            &ids,
        )
        .unwrap()
    }

    #[test]
    fn balanced_closed_form() {
        let d = one_way(&[&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]]);
        let fit = reml_fit(&d, &RemlConfig::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!((fit.variance.residual_var - 1.0).abs() < 1e-6);
        assert!((fit.variance.participant_var - 1.0 / 6.0).abs() < 1e-6);
        assert!((fit.fixed[0].coef - 2.5).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut y = Vec::new();
        let mut ids = Vec::new();
        let mut z = Vec::new();
        let mut x = Vec::new();
        for g in 0..6 {
            for t in 0..5 {
                let sem = (t / 2) as f64;
                let v =
                    ((g * 13 + t * 7) % 11) as f64 * 0.1 + 0.3 * g as f64 + 0.05 * sem * g as f64;
                y.push(v);
                ids.push(format!("g{g}"));
                z.extend([1.0, sem]);
                x.extend([1.0, t as f64, ((g + t) % 3) as f64]);
            }
        }
        let n = y.len();
        let d = Design::new(
            DVector::from_vec(y),
            DMatrix::from_row_slice(n, 3, &x),
            vec!["intercept".into(), "t".into(), "w".into()],
            DMatrix::from_row_slice(n, 2, &z),
            vec!["participant".into(), "semester".into()],
            &ids,
        )
        .unwrap();
        let s = Suff::new(&d);
        let theta = [-0.3, 0.2, -1.1];
        let (l, dl) = lambda(&theta, 2);
        let e = evaluate(&s, &l, &dl).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let mut up = theta;
            let mut dn = theta;
            up[k] += h;
            dn[k] -= h;
            let fd = (reml_loglik(&d, &up).unwrap() - reml_loglik(&d, &dn).unwrap()) / (2.0 * h);
            assert!(
                (fd - e.grad[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                "{k}: {fd} vs {}",
                e.grad[k]
            );
        }
    }

    #[test]
    fn wald_examples() {
        let r = wald("x", -0.065, 0.028);
        assert!((r.z + 2.3214).abs() < 1e-3);
        assert!((r.p_value - 0.020).abs() < 1e-3);
        let r = wald("x", 0.0, 0.5);
        assert_eq!((r.z, r.p_value), (0.0, 1.0));
        assert!((r.ci_high - Z_975 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_covariance_is_ols() {
        let d = one_way(&[&[1.0, 2.0, 3.5], &[2.0, 3.0, 4.0], &[0.5, 1.0]]);
        let fit = gls_fit(&d, &DMatrix::zeros(1, 1)).unwrap();
        let ols = reml_fit(&d.without_random_effects(), &RemlConfig::default()).unwrap();
        assert!((fit.fixed[0].coef - ols.fixed[0].coef).abs() < 1e-12);
        assert!((fit.fixed[0].std_err - ols.fixed[0].std_err).abs() < 1e-12);
        let mean = 17.0 / 8.0;
        assert!((ols.fixed[0].coef - mean).abs() < 1e-12);
    }
}
