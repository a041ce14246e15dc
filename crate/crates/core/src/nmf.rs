//! Profile-trajectory matrix and its NMF clustering.
//!
//! Each eligible user becomes one row of concatenated quarterly role
//! mixtures (quarter-major: column `t * K + k` holds role `k` in quarter
//! `t`), zero where the user was inactive, L2-normalised. The matrix is
//! factorised with alternating non-negative least squares solved by
//! projected gradient (Lin 2007), initialised by NNDSVD (Boutsidis and
//! Gallopoulos 2008), and users are assigned to the argmax of their
//! coefficient row.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dtm::RoleMixture;
use crate::ingest::ActivityRecord;
use crate::{math, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    pub users: Vec<String>,
    pub quarters: usize,
    pub roles: usize,
    /// `users.len() x (quarters * roles)`.
    pub values: DMatrix<f64>,
}

impl ProfileMatrix {
    /// Validates and wraps a prepared matrix: non-negative, finite, every
    /// row of unit L2 norm.
    pub fn new(users: Vec<String>, quarters: usize, roles: usize, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != users.len() || values.ncols() != quarters * roles {
            return Err(Error::invalid(alloc::format!(
                "profile matrix is {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                users.len(),
                quarters * roles
            )));
        }
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("profile values must be finite and non-negative"));
        }
        for (i, row) in values.row_iter().enumerate() {
            if (row.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(alloc::format!(
                    "profile row for {} is not unit length",
                    users[i]
                )));
            }
        }
        Ok(Self {
            users,
            quarters,
            roles,
            values,
        })
    }

    pub fn column(&self, quarter: usize, role: usize) -> usize {
        quarter * self.roles + role
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBuild {
    pub matrix: ProfileMatrix,
    /// Eligible users dropped because their trajectory was all zeros.
    pub excluded: Vec<String>,
}

/// Builds the profile matrix from per-document role mixtures, keeping users
/// with at least `min_active_quarters` active quarters.
pub fn build_profile_matrix(
    mixtures: &[RoleMixture],
    min_active_quarters: usize,
    quarters: usize,
    roles: usize,
) -> Result<ProfileBuild> {
    let mut by_user: BTreeMap<&str, Vec<&RoleMixture>> = BTreeMap::new();
    for m in mixtures {
        if m.quarter as usize >= quarters {
            return Err(Error::invalid(alloc::format!(
                "mixture for {} at quarter {} outside {} quarters",
                m.user,
                m.quarter,
                quarters
            )));
        }
        if m.theta.len() != roles {
            return Err(Error::invalid(alloc::format!(
                "mixture for {} has {} roles, expected {}",
                m.user,
                m.theta.len(),
                roles
            )));
        }
        by_user.entry(m.user.as_str()).or_default().push(m);
    }
    let d = quarters * roles;
    let mut users = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut excluded = Vec::new();
    for (user, ms) in by_user {
        let active: BTreeSet<u32> = ms.iter().map(|m| m.quarter).collect();
        if active.len() < min_active_quarters {
            continue;
        }
        let mut row = vec![0.0; d];
        for m in ms {
            let base = m.quarter as usize * roles;
            row[base..base + roles].copy_from_slice(&m.theta);
        }
        let norm = math::norm2(&row);
        if norm == 0.0 {
            log::warn!("user {user} has an all-zero profile trajectory; excluded");
            excluded.push(user.into());
            continue;
        }
        rows.extend(row.iter().map(|x| x / norm));
        users.push(user.into());
    }
    let values = DMatrix::from_row_slice(users.len(), d, &rows);
    Ok(ProfileBuild {
        matrix: ProfileMatrix::new(users, quarters, roles, values)?,
        excluded,
    })
}

fn check_nonnegative(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("NMF input"));
    }
    if m.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid("NMF input must be non-negative"));
    }
    Ok(())
}

/// Leading `rank` singular triplets, largest first. Computed from the
/// eigendecomposition of the smaller Gram matrix.
fn truncated_svd(m: &DMatrix<f64>, rank: usize) -> (Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let (n, d) = m.shape();
    let tall = d <= n;
    let gram = if tall { m.transpose() * m } else { m * m.transpose() };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut sigmas = Vec::with_capacity(rank);
    let mut us = Vec::with_capacity(rank);
    let mut vs = Vec::with_capacity(rank);
    for &j in order.iter().take(rank) {
        let sigma = math::sqrt(eig.eigenvalues[j].max(0.0));
        let vec = eig.eigenvectors.column(j).into_owned();
        let other = if sigma > 0.0 {
            if tall {
                (m * &vec) / sigma
            } else {
                (m.transpose() * &vec) / sigma
            }
        } else {
            DVector::zeros(if tall { n } else { d })
        };
        let (u, v) = if tall { (other, vec) } else { (vec, other) };
        sigmas.push(sigma);
        us.push(u);
        vs.push(v);
    }
    (sigmas, us, vs)
}

/// NNDSVD initial factors `(W0, H0)` with `W0: n x kc`, `H0: kc x d`.
pub fn nndsvd_init(m: &DMatrix<f64>, kc: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_nonnegative(m)?;
    let (n, d) = m.shape();
    if kc == 0 || kc > n.min(d) {
        return Err(Error::invalid(alloc::format!("rank {kc} must be in [1, {}]", n.min(d))));
    }
    if m.iter().all(|&x| x == 0.0) {
        return Err(Error::invalid("cannot factorise an all-zero matrix"));
    }
    let (sigmas, us, vs) = truncated_svd(m, kc);
    let mut w = DMatrix::zeros(n, kc);
    let mut h = DMatrix::zeros(kc, d);
    for j in 0..kc {
        let (x, y) = (&us[j], &vs[j]);
        let (u, v, scale) = if j == 0 {
            (x.abs(), y.abs(), math::sqrt(sigmas[0]))
        } else {
            let xp = x.map(|a| a.max(0.0));
            let xn = x.map(|a| (-a).max(0.0));
            let yp = y.map(|a| a.max(0.0));
            let yn = y.map(|a| (-a).max(0.0));
            let (xpn, xnn, ypn, ynn) = (xp.norm(), xn.norm(), yp.norm(), yn.norm());
            let (mp, mn) = (xpn * ypn, xnn * ynn);
            if mp == 0.0 && mn == 0.0 {
                continue;
            }
            if mp >= mn {
                (xp / xpn, yp / ypn, math::sqrt(sigmas[j] * mp))
            } else {
                (xn / xnn, yn / ynn, math::sqrt(sigmas[j] * mn))
            }
        };
        w.set_column(j, &(u * scale));
        h.set_row(j, &(v * scale).transpose());
    }
    Ok((w, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfParams {
    pub max_iter: usize,
    /// Stop once the relative objective decrease drops below this.
    pub tol: f64,
    /// Projected-gradient tolerance of the subproblems, relative to the
    /// initial gradient norm.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for NmfParams {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-5,
            inner_tol: 1e-4,
            inner_max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    /// `n x kc` coefficients.
    pub w: DMatrix<f64>,
    /// `kc x d` basis vectors.
    pub h: DMatrix<f64>,
    /// Squared Frobenius error, starting with the initial factors.
    pub objective: Vec<f64>,
}

fn objective(m: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (m - w * h).norm_squared()
}

fn projected_grad_norm(grad: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    math::sqrt(
        grad.iter()
            .zip(x.iter())
            .filter(|(g, x)| **g < 0.0 || **x > 0.0)
            .map(|(g, _)| g * g)
            .sum(),
    )
}

/// Projected-gradient solve of `min_{H >= 0} ||V - W H||_F` started at `h`.
/// Returns the number of steps taken.
fn nls_subproblem(v: &DMatrix<f64>, w: &DMatrix<f64>, h: &mut DMatrix<f64>, tol: f64, max_iter: usize) -> usize {
    let wtv = w.transpose() * v;
    let wtw = w.transpose() * w;
    let mut step = 1.0;
    const SHRINK: f64 = 0.1;
    let mut taken = 0;
    for _ in 0..max_iter {
        let grad = &wtw * &*h - &wtv;
        if projected_grad_norm(&grad, h) < tol {
            break;
        }
        let mut previous = h.clone();
        let mut shrinking = false;
        let mut accepted: Option<DMatrix<f64>> = None;
        for inner in 0..20 {
            let candidate = (&*h - &grad * step).map(|x| x.max(0.0));
            let delta = &candidate - &*h;
            let gradd = grad.dot(&delta);
            let dqd = (&wtw * &delta).dot(&delta);
            let sufficient = 0.99 * gradd + 0.5 * dqd < 0.0;
            if inner == 0 {
                shrinking = !sufficient;
            }
            if shrinking {
                if sufficient {
                    accepted = Some(candidate);
                    break;
                }
                step *= SHRINK;
            } else {
                if !sufficient || previous == candidate {
                    break;
                }
                step /= SHRINK;
                previous = candidate;
            }
        }
        if !shrinking {
            // `previous` is the last candidate that met the decrease test
            // (or the current point if none did).
            accepted = Some(previous);
        }
        match accepted {
            Some(next) => *h = next,
            None => break,
        }
        taken += 1;
    }
    taken
}

/// Alternating non-negative least squares with projected-gradient
/// subproblems. `init` defaults to [`nndsvd_init`].
pub fn fit_nmf(
    m: &DMatrix<f64>,
    kc: usize,
    params: &NmfParams,
    init: Option<(DMatrix<f64>, DMatrix<f64>)>,
) -> Result<NmfModel> {
    check_nonnegative(m)?;
    let (mut w, mut h) = match init {
        Some(f) => f,
        None => nndsvd_init(m, kc)?,
    };
    if w.shape() != (m.nrows(), kc) || h.shape() != (kc, m.ncols()) {
        return Err(Error::invalid("initial factors do not match the matrix and rank"));
    }
    let mut trace = vec![objective(m, &w, &h)];
    if params.max_iter == 0 {
        return Ok(NmfModel { w, h, objective: trace });
    }
    let grad_w = &w * (&h * h.transpose()) - m * h.transpose();
    let grad_h = (w.transpose() * &w) * &h - w.transpose() * m;
    let init_grad = math::sqrt(grad_w.norm_squared() + grad_h.norm_squared());
    let mut tol_w = params.inner_tol * init_grad;
    let mut tol_h = tol_w;
    let mt = m.transpose();
    for _ in 0..params.max_iter {
        let prev = *trace.last().expect("trace starts non-empty");
        if prev == 0.0 {
            break;
        }
        let (w_old, h_old) = (w.clone(), h.clone());
        let mut wt = w.transpose();
        if nls_subproblem(&mt, &h.transpose(), &mut wt, tol_w, params.inner_max_iter) == 0 {
            tol_w *= 0.1;
        }
        w = wt.transpose();
        if nls_subproblem(m, &w, &mut h, tol_h, params.inner_max_iter) == 0 {
            tol_h *= 0.1;
        }
        let obj = objective(m, &w, &h);
        if obj > prev {
            // Rounding noise on a converged problem.
            w = w_old;
            h = h_old;
            break;
        }
        trace.push(obj);
        if (prev - obj) / prev < params.tol {
            break;
        }
    }
    Ok(NmfModel { w, h, objective: trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub users: Vec<String>,
    pub clusters: Vec<usize>,
    pub num_clusters: usize,
}

/// Argmax of each coefficient row, lowest index on ties. All-zero rows go to
/// cluster 0 and are reported in the second return value.
pub fn discretize(w: &DMatrix<f64>) -> (Vec<usize>, Vec<usize>) {
    let mut zero_rows = Vec::new();
    let clusters = w
        .row_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.iter().all(|&x| x == 0.0) {
                log::warn!("coefficient row {i} is all zero; assigned to cluster 0");
                zero_rows.push(i);
            }
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    (clusters, zero_rows)
}

pub fn assign_clusters(matrix: &ProfileMatrix, model: &NmfModel) -> ClusterAssignment {
    let (clusters, _) = discretize(&model.w);
    ClusterAssignment {
        users: matrix.users.clone(),
        clusters,
        num_clusters: model.w.ncols(),
    }
}

/// One row of the cluster report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub fraction: f64,
    pub min_active: Option<u32>,
    pub max_active: Option<u32>,
    pub median_active: Option<f64>,
    pub mean_active: Option<f64>,
    /// Contiguous quarter range around the busiest quarter where member
    /// activity stays at or above half of the peak.
    pub dominant_quarters: Option<(u32, u32)>,
    /// Roles whose mean POAP over member user-quarters reaches the
    /// threshold, strongest first.
    pub dominant_roles: Vec<usize>,
    pub role_means: Vec<f64>,
}

pub fn cluster_summary(
    assignment: &ClusterAssignment,
    records: &[ActivityRecord],
    mixtures: &[RoleMixture],
    roles: usize,
    role_threshold: f64,
) -> Result<Vec<ClusterSummary>> {
    let mut active: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for r in records {
        active.entry(r.user.as_str()).or_default().insert(r.quarter);
    }
    let mut theta_by_user: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for m in mixtures {
        theta_by_user.entry(m.user.as_str()).or_default().push(&m.theta);
    }
    let n = assignment.users.len();
    let mut out = Vec::with_capacity(assignment.num_clusters);
    for c in 0..assignment.num_clusters {
        let members: Vec<&str> = assignment
            .users
            .iter()
            .zip(&assignment.clusters)
            .filter(|(_, &k)| k == c)
            .map(|(u, _)| u.as_str())
            .collect();
        let mut lifespans = Vec::with_capacity(members.len());
        let mut per_quarter: BTreeMap<u32, usize> = BTreeMap::new();
        let mut role_sum = vec![0.0; roles];
        let mut role_n = 0usize;
        for u in &members {
            let qs = active
                .get(u)
                .ok_or_else(|| Error::invalid(alloc::format!("no records for clustered user {u}")))?;
            lifespans.push(qs.len() as u32);
            for &q in qs {
                *per_quarter.entry(q).or_insert(0) += 1;
            }
            for theta in theta_by_user.get(u).into_iter().flatten() {
                for (s, x) in role_sum.iter_mut().zip(theta.iter()) {
                    *s += x;
                }
                role_n += 1;
            }
        }
        let role_means: Vec<f64> = role_sum
            .iter()
            .map(|s| if role_n == 0 { 0.0 } else { s / role_n as f64 })
            .collect();
        let mut dominant_roles: Vec<usize> = (0..roles).filter(|&k| role_means[k] >= role_threshold).collect();
        dominant_roles.sort_by(|&a, &b| role_means[b].total_cmp(&role_means[a]).then(a.cmp(&b)));
        let spans: Vec<f64> = lifespans.iter().map(|&x| f64::from(x)).collect();
        out.push(ClusterSummary {
            cluster: c,
            size: members.len(),
            fraction: if n == 0 { 0.0 } else { members.len() as f64 / n as f64 },
            min_active: lifespans.iter().copied().min(),
            max_active: lifespans.iter().copied().max(),
            median_active: math::median(&spans),
            mean_active: (!spans.is_empty()).then(|| math::mean(&spans)),
            dominant_quarters: half_max_range(&per_quarter),
            dominant_roles,
            role_means,
        });
    }
    Ok(out)
}

fn half_max_range(per_quarter: &BTreeMap<u32, usize>) -> Option<(u32, u32)> {
    let (&peak_q, &peak) = per_quarter.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))?;
    let level = |q: u32| per_quarter.get(&q).copied().unwrap_or(0) * 2 >= peak;
    let mut lo = peak_q;
    while lo > 0 && level(lo - 1) {
        lo -= 1;
    }
    let mut hi = peak_q;
    while level(hi + 1) {
        hi += 1;
    }
    Some((lo, hi))
}

#[cfg(test)]
mod tests;
