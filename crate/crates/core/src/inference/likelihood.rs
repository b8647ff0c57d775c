//! Negative log joint density of the latent vector `x = (w, β)`:
//!
//! `f(x) = −Σ_c log Σ_k α_ck p(y_c | η_ck) + ½ wᵀQ(θ)w + ½ βᵀβ / v_β`
//!
//! with `η_ck = a(s_ck)ᵀ w + x(s_ck)ᵀ β`. Each cluster depends on a handful of
//! mesh nodes and on β, so its derivatives are formed as small dense blocks
//! and scattered into the global sparse Hessian.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointKm;
use crate::jitter::IntegrationDesign;
use crate::sparse::{CsrMatrix, EnvelopeStructure};
use crate::spde::{Hyperparameters, SpdeOperator};
use crate::special::{inv_logit, log1p_exp};

use super::{Dataset, SpatialBasis};

/// Per-point observation density `p(y_c | η)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationModel {
    /// `Binomial(n_c, logit⁻¹ η)` with the binomial coefficient dropped.
    Binomial,
    /// Gaussian pseudo-observations `z_c ~ N(η, variance)`, fully normalised.
    Gaussian { response: Vec<f64>, variance: f64 },
}

#[derive(Debug, Clone)]
struct ClusterTerm {
    cluster: usize,
    /// Global indices of the mesh nodes touched by the design points.
    nodes: Vec<usize>,
    log_alpha: Vec<f64>,
    /// `(local node, weight)` per point; unused slots have weight zero.
    basis: Vec<[(u32, f64); 3]>,
    /// Row-major `K × p` design rows.
    covs: Vec<f64>,
    /// Successes (binomial) or response (Gaussian).
    a: f64,
    /// Trials (binomial) or variance (Gaussian).
    b: f64,
}

struct ClusterEval {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

/// Value, gradient and sparse Hessian of the negative log joint.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: CsrMatrix,
}

/// Prior precision `P(θ) = blockdiag(Q(θ), I / v_β)` and its log determinant.
#[derive(Debug, Clone)]
pub struct PriorPrecision {
    pub theta: Hyperparameters,
    pub q: CsrMatrix,
    pub log_det: f64,
    beta_precision: f64,
}

impl PriorPrecision {
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let m = self.q.nrows();
        let qw = self.q.mul_vec(&x[..m]);
        let wq: f64 = qw.iter().zip(&x[..m]).map(|(a, b)| a * b).sum();
        let bb: f64 = x[m..].iter().map(|b| b * b).sum();
        wq + self.beta_precision * bb
    }
}

/// The data-dependent part of the model, precomputed once per dataset.
#[derive(Debug, Clone)]
pub struct LatentModel {
    m: usize,
    p: usize,
    terms: Vec<ClusterTerm>,
    excluded: Vec<usize>,
    observation: ObservationModel,
    operator: SpdeOperator,
    beta_precision: f64,
    structure: EnvelopeStructure,
}

impl LatentModel {
    /// Projects every design point onto the mesh and evaluates its design
    /// row `[1, x₁(s), …]` with `rows`. Points whose row is missing or that
    /// fall outside the mesh lose their weight; clusters left with no weight,
    /// or with `n = 0` under the binomial model, are excluded.
    pub fn new(
        basis: &SpatialBasis,
        data: &Dataset,
        design: &IntegrationDesign,
        p: usize,
        rows: impl Fn(&PointKm) -> Option<Vec<f64>> + Sync,
        beta_prior_variance: f64,
        observation: ObservationModel,
    ) -> Result<Self> {
        if design.clusters.len() != data.len() {
            return Err(Error::InvalidInput(format!(
                "design has {} clusters but the dataset has {}",
                design.clusters.len(),
                data.len()
            )));
        }
        if p == 0 {
            return Err(Error::InvalidInput("at least an intercept is required".into()));
        }
        if !(beta_prior_variance > 0.0) {
            return Err(Error::InvalidInput("beta prior variance must be positive".into()));
        }
        if let ObservationModel::Gaussian { response, variance } = &observation {
            if response.len() != data.len() || !(*variance > 0.0) {
                return Err(Error::InvalidInput("Gaussian response length or variance invalid".into()));
            }
        }
        let mesh = &basis.mesh;
        let built: Vec<Result<Option<ClusterTerm>>> = data
            .clusters()
            .par_iter()
            .enumerate()
            .map(|(c, cl)| {
                let (a, b) = match &observation {
                    ObservationModel::Binomial => {
                        if cl.n == 0 {
                            return Ok(None);
                        }
                        (cl.y as f64, cl.n as f64)
                    }
                    ObservationModel::Gaussian { response, variance } => (response[c], *variance),
                };
                let mut cd = design.clusters[c].clone();
                let mut drop = vec![false; cd.len()];
                let mut projected = Vec::with_capacity(cd.len());
                for (k, pt) in cd.points.iter().enumerate() {
                    if cd.weights[k] <= 0.0 {
                        drop[k] = true;
                        projected.push(None);
                        continue;
                    }
                    let entry = match (mesh.locate(pt), rows(pt)) {
                        (Some((t, bary)), Some(row)) => {
                            if row.len() != p {
                                return Err(Error::InvalidInput(format!(
                                    "design row has {} entries, expected {p}",
                                    row.len()
                                )));
                            }
                            Some((mesh.triangles()[t], bary, row))
                        }
                        _ => {
                            drop[k] = true;
                            None
                        }
                    };
                    projected.push(entry);
                }
                if !cd.drop_points(&drop) {
                    log::warn!("cluster `{}` excluded: no integration point has covariates on the mesh", cl.id);
                    return Ok(None);
                }
                let mut nodes: Vec<usize> = Vec::new();
                let mut log_alpha = Vec::new();
                let mut basis_rows = Vec::new();
                let mut covs = Vec::new();
                for (k, entry) in projected.into_iter().enumerate() {
                    let Some((tri, bary, row)) = entry else { continue };
                    let w = cd.weights[k];
                    if w <= 0.0 {
                        continue;
                    }
                    let mut slots = [(0u32, 0.0); 3];
                    for v in 0..3 {
                        let local = match nodes.iter().position(|&n| n == tri[v]) {
                            Some(i) => i,
                            None => {
                                nodes.push(tri[v]);
                                nodes.len() - 1
                            }
                        };
                        slots[v] = (local as u32, bary[v]);
                    }
                    log_alpha.push(w.ln());
                    basis_rows.push(slots);
                    covs.extend_from_slice(&row);
                }
                Ok(Some(ClusterTerm {
                    cluster: c,
                    nodes,
                    log_alpha,
                    basis: basis_rows,
                    covs,
                    a,
                    b,
                }))
            })
            .collect();
        let mut terms = Vec::new();
        let mut excluded = Vec::new();
        for (c, r) in built.into_iter().enumerate() {
            match r? {
                Some(t) => terms.push(t),
                None => excluded.push(c),
            }
        }
        let m = basis.num_nodes();
        let operator = basis.operator.clone();
        let structure = {
            let mut pattern = operator.matrix(&Hyperparameters::new(0.0, 0.0)).triplets();
            for i in 0..p {
                for j in 0..p {
                    pattern.push((m + i, m + j, 1.0));
                }
            }
            for t in &terms {
                let vars: Vec<usize> = t.nodes.iter().copied().chain(m..m + p).collect();
                for &i in &vars {
                    for &j in &vars {
                        pattern.push((i, j, 1.0));
                    }
                }
            }
            EnvelopeStructure::analyse(&CsrMatrix::from_triplets(m + p, m + p, &pattern), p)
        };
        Ok(LatentModel {
            m,
            p,
            terms,
            excluded,
            observation,
            operator,
            beta_precision: 1.0 / beta_prior_variance,
            structure,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.m
    }

    pub fn num_effects(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.m + self.p
    }

    /// Indices of clusters left out of the likelihood.
    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn num_active_clusters(&self) -> usize {
        self.terms.len()
    }

    pub(crate) fn structure(&self) -> &EnvelopeStructure {
        &self.structure
    }

    pub fn prior(&self, theta: &Hyperparameters) -> Result<PriorPrecision> {
        let prec = self.operator.precision(theta)?;
        Ok(PriorPrecision {
            theta: *theta,
            log_det: prec.log_det() + self.p as f64 * self.beta_precision.ln(),
            q: prec.q,
            beta_precision: self.beta_precision,
        })
    }

    #[inline]
    fn ell(&self, t: &ClusterTerm, eta: f64) -> (f64, f64, f64) {
        match self.observation {
            ObservationModel::Binomial => {
                let pr = inv_logit(eta);
                (t.a * eta - t.b * log1p_exp(eta), t.a - t.b * pr, -t.b * pr * (1.0 - pr))
            }
            ObservationModel::Gaussian { .. } => {
                let r = t.a - eta;
                (
                    -0.5 * r * r / t.b - 0.5 * (2.0 * std::f64::consts::PI * t.b).ln(),
                    r / t.b,
                    -1.0 / t.b,
                )
            }
        }
    }

    fn eta_of(&self, t: &ClusterTerm, k: usize, wloc: &[f64], beta: &[f64]) -> f64 {
        let mut eta = 0.0;
        for &(j, a) in &t.basis[k] {
            eta += a * wloc[j as usize];
        }
        let row = &t.covs[k * self.p..(k + 1) * self.p];
        for (z, b) in row.iter().zip(beta) {
            eta += z * b;
        }
        eta
    }

    fn cluster_eval(&self, t: &ClusterTerm, x: &[f64], derivatives: bool) -> Result<ClusterEval> {
        let k_len = t.log_alpha.len();
        let nn = t.nodes.len();
        let d = nn + self.p;
        let wloc: Vec<f64> = t.nodes.iter().map(|&i| x[i]).collect();
        let beta = &x[self.m..];
        let mut s = Vec::with_capacity(k_len);
        let mut d1 = Vec::with_capacity(k_len);
        let mut d2 = Vec::with_capacity(k_len);
        for k in 0..k_len {
            let eta = self.eta_of(t, k, &wloc, beta);
            if !eta.is_finite() {
                return Err(Error::NonFiniteEta {
                    cluster: t.cluster,
                    point: k,
                });
            }
            let (l, l1, l2) = self.ell(t, eta);
            s.push(t.log_alpha[k] + l);
            d1.push(l1);
            d2.push(l2);
        }
        let smax = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total = smax + s.iter().map(|v| (v - smax).exp()).sum::<f64>().ln();
        if !derivatives {
            return Ok(ClusterEval {
                value: -total,
                grad: Vec::new(),
                hess: Vec::new(),
            });
        }
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut jac: Vec<(usize, f64)> = Vec::with_capacity(3 + self.p);
        for k in 0..k_len {
            let pi = (s[k] - total).exp();
            if pi == 0.0 {
                continue;
            }
            jac.clear();
            for &(j, a) in &t.basis[k] {
                if a != 0.0 {
                    jac.push((j as usize, a));
                }
            }
            let row = &t.covs[k * self.p..(k + 1) * self.p];
            jac.extend(row.iter().enumerate().map(|(j, &z)| (nn + j, z)));
            let g = -pi * d1[k];
            let c = -pi * (d2[k] + d1[k] * d1[k]);
            for &(i, ji) in &jac {
                grad[i] += g * ji;
                let ci = c * ji;
                for &(j, jj) in &jac {
                    hess[i * d + j] += ci * jj;
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                hess[i * d + j] += grad[i] * grad[j];
            }
        }
        Ok(ClusterEval {
            value: -total,
            grad,
            hess,
        })
    }

    fn global_index(&self, t: &ClusterTerm, local: usize) -> usize {
        if local < t.nodes.len() {
            t.nodes[local]
        } else {
            self.m + local - t.nodes.len()
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "latent vector has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `−Σ_c log Σ_k α_ck p(y_c | η_ck)`.
    pub fn neg_log_likelihood(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let parts: Vec<Result<f64>> = self
            .terms
            .par_iter()
            .map(|t| self.cluster_eval(t, x, false).map(|e| e.value))
            .collect();
        let mut total = 0.0;
        for v in parts {
            total += v?;
        }
        Ok(total)
    }

    pub fn value(&self, prior: &PriorPrecision, x: &[f64]) -> Result<f64> {
        Ok(self.neg_log_likelihood(x)? + 0.5 * prior.quad_form(x))
    }

    pub fn neg_log_joint(&self, prior: &PriorPrecision, x: &[f64]) -> Result<Evaluation> {
        self.check_dim(x)?;
        let m = self.m;
        let evals: Vec<Result<ClusterEval>> = self.terms.par_iter().map(|t| self.cluster_eval(t, x, true)).collect();
        let qw = prior.q.mul_vec(&x[..m]);
        let mut gradient = qw.clone();
        gradient.extend(x[m..].iter().map(|b| prior.beta_precision * b));
        let mut value = 0.5 * prior.quad_form(x);
        let mut triplets = prior.q.triplets();
        triplets.extend((m..m + self.p).map(|i| (i, i, prior.beta_precision)));
        for (t, e) in self.terms.iter().zip(evals) {
            let e = e?;
            value += e.value;
            let d = e.grad.len();
            for i in 0..d {
                let gi = self.global_index(t, i);
                gradient[gi] += e.grad[i];
                for j in 0..d {
                    triplets.push((gi, self.global_index(t, j), e.hess[i * d + j]));
                }
            }
        }
        let n = self.dim();
        Ok(Evaluation {
            value,
            gradient,
            hessian: CsrMatrix::from_triplets(n, n, &triplets),
        })
    }

    /// `η` at every retained design point of every active cluster, with the
    /// mixture weights, for diagnostics and tests.
    pub fn design_etas(&self, x: &[f64]) -> Vec<(usize, Vec<f64>, Vec<f64>)> {
        self.terms
            .iter()
            .map(|t| {
                let wloc: Vec<f64> = t.nodes.iter().map(|&i| x[i]).collect();
                let etas = (0..t.log_alpha.len()).map(|k| self.eta_of(t, k, &wloc, &x[self.m..])).collect();
                (t.cluster, t.log_alpha.iter().map(|a| a.exp()).collect(), etas)
            })
            .collect()
    }
}
