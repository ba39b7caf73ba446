//! Streaming per-path summaries for large ensembles.
//!
//! Horizons run to ~10^5 grid points per path, so ensembles never store
//! grids. Each path is folded on the fly into the handful of quantities the
//! verification battery needs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::walker::{Dynamics, ExtremumPoint, Walker};
use super::{MinimumRecord, SimConfig};
use crate::enlarge::{crossing_time, HittingTimeRecord};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::market::{MarketSpec, NumeraireStrategy};

/// What to record along each path.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryPlan {
    /// Grid times at which the state is recorded. Reference times of the
    /// functionals are added automatically.
    pub observation_times: Vec<f64>,
    /// Levels `u in [0, 1)` whose hitting times `eta_u` are recorded.
    pub levels: Vec<f64>,
    /// Functionals integrated against `Yhat dU` along the path.
    pub functionals: Vec<Functional>,
    /// Loading `nu` of an alternative deflator whose argmax is tracked.
    pub deflator: Option<Vec<f64>>,
}

impl SummaryPlan {
    fn normalized(&self, config: &SimConfig) -> Result<NormalizedPlan> {
        let mut times: Vec<f64> = self.observation_times.clone();
        times.extend(self.functionals.iter().filter_map(Functional::reference_time));
        let mut indexed = Vec::with_capacity(times.len());
        for t in times {
            indexed.push((config.grid_index(t)?, t));
        }
        indexed.sort_by_key(|&(k, _)| k);
        indexed.dedup_by_key(|&mut (k, _)| k);
        for &u in &self.levels {
            if !(0.0..1.0).contains(&u) {
                return Err(Error::InvalidConfig(format!("level u = {u} outside [0, 1)")));
            }
        }
        let mut level_order: Vec<usize> = (0..self.levels.len()).collect();
        level_order.sort_by(|&a, &b| self.levels[a].total_cmp(&self.levels[b]));
        Ok(NormalizedPlan { observations: indexed, level_order })
    }
}

struct NormalizedPlan {
    /// `(grid index, time)` sorted by index.
    observations: Vec<(u64, f64)>,
    /// Level indices by increasing `u`, the order in which they are hit.
    level_order: Vec<usize>,
}

/// State recorded at a grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub w: Vec<f64>,
    pub log_xhat: f64,
    /// `log I(t)`, bridge-corrected when enabled.
    pub log_min: f64,
    pub log_min_raw: f64,
}

impl Observation {
    /// Doob predictor `I(t) Yhat(t) = P[rho > t | F(t)]`.
    pub fn doob_predictor(&self) -> f64 {
        (self.log_min - self.log_xhat).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub index: u64,
    pub horizon: f64,
    /// `None` when the growth rate is zero and no minimum time exists.
    pub minimum: Option<MinimumRecord>,
    /// Location of the overall minimum, with the driver value there.
    pub rho: ExtremumPoint,
    /// In the order of the normalized observation times.
    pub observations: Vec<Observation>,
    /// In the order of `SummaryPlan::levels`.
    pub crossings: Vec<HittingTimeRecord>,
    /// `int V(t) Yhat(t) dU(t)` per functional, accumulated over the
    /// decrements of `I` as `sum V(t_j) log(I_{j-1} / I_j)`, which is exact
    /// because `Yhat = 1 / I` wherever `I` decreases.
    pub stieltjes: Vec<f64>,
    pub phi: Option<ExtremumPoint>,
    pub phi_tail_mass: Option<f64>,
}

impl PathSummary {
    pub fn observation(&self, t: f64) -> Option<&Observation> {
        self.observations.iter().find(|o| (o.t - t).abs() <= 1e-12 * t.max(1.0))
    }
}

pub fn summarize_path(dynamics: &Dynamics, config: &SimConfig, plan: &SummaryPlan, index: u64) -> Result<PathSummary> {
    let normalized = plan.normalized(config)?;
    summarize_normalized(dynamics, config, plan, &normalized, index)
}

fn summarize_normalized(
    dynamics: &Dynamics,
    config: &SimConfig,
    plan: &SummaryPlan,
    normalized: &NormalizedPlan,
    index: u64,
) -> Result<PathSummary> {
    let min_horizon = normalized.observations.last().map_or(0.0, |&(_, t)| t);
    let mut walker = Walker::new(dynamics, config, index, min_horizon)?;
    let mut observations = Vec::with_capacity(normalized.observations.len());
    let mut next_obs = 0;
    let mut crossings: Vec<HittingTimeRecord> =
        plan.levels.iter().map(|&u| HittingTimeRecord::not_hit(u, 0.0)).collect();
    let mut next_level = 0;
    let level_logs: Vec<f64> = plan.levels.iter().map(|u| (1.0 - u).ln()).collect();
    let mut stieltjes = vec![0.0; plan.functionals.len()];

    let record = |walker: &Walker, t: f64| Observation {
        t,
        w: walker.w().to_vec(),
        log_xhat: walker.log_xhat(),
        log_min: walker.log_running_min(),
        log_min_raw: walker.log_running_min_raw(),
    };

    // levels already reached at the origin (u = 0)
    while next_level < normalized.level_order.len() {
        let j = normalized.level_order[next_level];
        if level_logs[j] < 0.0 {
            break;
        }
        crossings[j] = HittingTimeRecord { u: plan.levels[j], eta_u: 0.0, hit: true, u_at_eta: 0.0 };
        next_level += 1;
    }
    while next_obs < normalized.observations.len() && normalized.observations[next_obs].0 == 0 {
        observations.push(record(&walker, normalized.observations[next_obs].1));
        next_obs += 1;
    }

    while let Some(event) = walker.advance() {
        let k = walker.step_index();
        if let Some((before, after)) = event.new_min {
            let t_event = walker.rho().t;
            let decrement = before - after;
            for (acc, f) in stieltjes.iter_mut().zip(&plan.functionals) {
                let v = f.eval(t_event, dynamics, |s| {
                    observations.iter().find(|o: &&Observation| (o.t - s).abs() <= 1e-12 * s.max(1.0))
                });
                *acc += v * decrement;
            }
            while next_level < normalized.level_order.len() {
                let j = normalized.level_order[next_level];
                if level_logs[j] < after {
                    break;
                }
                let eta = crossing_time(k, walker.dt(), walker.log_xhat_prev(), after, level_logs[j]);
                crossings[j] =
                    HittingTimeRecord { u: plan.levels[j], eta_u: eta, hit: true, u_at_eta: 1.0 - after.exp() };
                next_level += 1;
            }
        }
        while next_obs < normalized.observations.len() && normalized.observations[next_obs].0 == k {
            observations.push(record(&walker, normalized.observations[next_obs].1));
            next_obs += 1;
        }
    }

    let u_final = 1.0 - walker.log_running_min().exp();
    for c in crossings.iter_mut().filter(|c| !c.hit) {
        c.u_at_eta = u_final;
    }

    let suboptimal = dynamics.growth_rate > 0.0;
    let minimum = suboptimal.then(|| MinimumRecord {
        rho: walker.rho().t,
        i_inf_raw: walker.log_running_min_raw().exp(),
        i_inf_corrected: walker.log_running_min().exp(),
        tail_mass: walker.tail_mass(),
        truncated: walker.truncated(),
        horizon: walker.t(),
    });
    Ok(PathSummary {
        index,
        horizon: walker.t(),
        minimum,
        rho: walker.rho().clone(),
        observations,
        crossings,
        stieltjes,
        phi: walker.phi().cloned(),
        phi_tail_mass: walker.deflator_tail_mass(),
    })
}

/// Summaries of `n_paths` paths in path-index order.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub spec: MarketSpec,
    pub strategy: NumeraireStrategy,
    pub dynamics: Dynamics,
    pub config: SimConfig,
    pub plan: SummaryPlan,
    pub paths: Vec<PathSummary>,
}

impl Ensemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn truncated_fraction(&self) -> f64 {
        let n = self.paths.iter().filter(|p| p.minimum.as_ref().is_some_and(|m| m.truncated)).count();
        n as f64 / self.paths.len() as f64
    }

    pub fn is_suboptimal(&self) -> bool {
        self.strategy.growth_rate > 0.0
    }
}

/// Simulates every path in parallel. Paths are grouped in chunks of
/// `chunk_size`; chunks are collected in index order, so the result is
/// independent of the number of worker threads.
pub fn simulate_ensemble(
    spec: &MarketSpec,
    strategy: &NumeraireStrategy,
    config: &SimConfig,
    plan: &SummaryPlan,
) -> Result<Ensemble> {
    config.validate()?;
    let mut dynamics = Dynamics::new(spec, strategy);
    if let Some(nu) = &plan.deflator {
        dynamics = dynamics.with_deflator(nu)?;
    }
    let normalized = plan.normalized(config)?;
    let n = config.n_paths;
    let chunk = config.chunk_size as u64;
    let n_chunks = n.div_ceil(chunk);
    let chunks: Vec<Vec<PathSummary>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * chunk;
            let end = (start + chunk).min(n);
            (start..end)
                .map(|i| summarize_normalized(&dynamics, config, plan, &normalized, i))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        spec: spec.clone(),
        strategy: strategy.clone(),
        dynamics,
        config: config.clone(),
        plan: plan.clone(),
        paths: chunks.into_iter().flatten().collect(),
    })
}
