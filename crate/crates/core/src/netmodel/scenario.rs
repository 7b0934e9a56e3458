use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::topology::{orient_by_rank, undirected_topology, TopologyKind, UndirectedGraph};
use super::{Edge, LearnerSpec, Network, Scenario, TypeModel};
use crate::doptimal::{FeaturePool, LearnerDesign};
use crate::error::NetError;
use crate::rng::from_seed;

/// Optional generator parameters; which ones are required depends on `kind`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_range: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: String,
    #[serde(default)]
    pub params: TopologyParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl TopologyConfig {
    pub fn to_kind(&self) -> Result<TopologyKind, NetError> {
        fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T, NetError> {
            v.ok_or_else(|| NetError::config(format!("topology.params.{name}"), "missing"))
        }
        let p = &self.params;
        Ok(match self.kind.as_str() {
            "erdos_renyi" => TopologyKind::ErdosRenyi {
                nodes: need(p.nodes, "nodes")?,
                p: need(p.p, "p")?,
            },
            "balanced_tree" => TopologyKind::BalancedTree {
                branching: need(p.branching, "branching")?,
                depth: need(p.depth, "depth")?,
            },
            "hypercube" => TopologyKind::Hypercube {
                dimension: need(p.dimension, "dimension")?,
            },
            "star" => TopologyKind::Star {
                nodes: need(p.nodes, "nodes")?,
            },
            "grid" => TopologyKind::Grid {
                rows: need(p.rows, "rows")?,
                cols: need(p.cols, "cols")?,
            },
            "small_world" => TopologyKind::SmallWorld {
                side: need(p.side, "side")?,
                long_range: p.long_range.unwrap_or(1),
                exponent: p.exponent.unwrap_or(2.0),
            },
            "geant" => TopologyKind::Geant,
            "abilene" => TopologyKind::Abilene,
            "dtelekom" => TopologyKind::Dtelekom,
            "file" => TopologyKind::File {
                path: self
                    .file
                    .clone()
                    .ok_or_else(|| NetError::config("topology.file", "required for kind `file`"))?,
            },
            other => {
                return Err(NetError::config(
                    "topology.kind",
                    format!("unsupported topology kind `{other}`"),
                ))
            }
        })
    }
}

fn default_capacity() -> [f64; 2] {
    [50.0, 100.0]
}
fn default_rate() -> [f64; 2] {
    [2.0, 5.0]
}
fn default_noise() -> [f64; 2] {
    [0.5, 1.0]
}
fn default_prior_low() -> [f64; 2] {
    [0.0, 0.01]
}
fn default_prior_high() -> [f64; 2] {
    [100.0, 200.0]
}
fn default_poorly_known() -> f64 {
    0.5
}
fn default_horizon() -> f64 {
    10.0
}

/// Instance recipe. Ranges are closed intervals `[lo, hi]`; a prior-variance
/// range with `lo = 0` is sampled from `(0, hi]` so every variance is positive.
/// `noise_range` is the range of the label-noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub topology: TopologyConfig,
    pub num_sources: usize,
    pub num_learners: usize,
    pub num_features: usize,
    pub feature_dim: usize,
    pub num_types: usize,
    pub seed: u64,
    #[serde(rename = "horizon_T", default = "default_horizon")]
    pub horizon_t: f64,
    #[serde(default = "default_capacity")]
    pub capacity_range: [f64; 2],
    #[serde(default = "default_rate")]
    pub rate_range: [f64; 2],
    #[serde(default = "default_noise")]
    pub noise_range: [f64; 2],
    #[serde(default = "default_prior_low")]
    pub prior_low_range: [f64; 2],
    #[serde(default = "default_prior_high")]
    pub prior_high_range: [f64; 2],
    #[serde(default = "default_poorly_known")]
    pub poorly_known_prob: f64,
    /// Target type of each learner; drawn uniformly when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner_types: Option<Vec<usize>>,
}

impl ScenarioConfig {
    /// The Abilene instance used for the rate and capacity sweeps.
    pub fn abilene(seed: u64) -> Self {
        Self {
            topology: TopologyConfig {
                kind: "abilene".into(),
                params: TopologyParams::default(),
                file: None,
            },
            num_sources: 3,
            num_learners: 3,
            num_features: 20,
            feature_dim: 100,
            num_types: 3,
            seed,
            horizon_t: 1.0,
            capacity_range: default_capacity(),
            rate_range: default_rate(),
            noise_range: [1.0, 1.0],
            prior_low_range: [0.0, 0.1],
            prior_high_range: [1.0, 3.0],
            poorly_known_prob: default_poorly_known(),
            learner_types: Some(vec![0, 0, 1]),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let positive = |v: usize, f: &str| {
            if v == 0 {
                Err(NetError::config(f, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive(self.num_sources, "num_sources")?;
        positive(self.num_learners, "num_learners")?;
        positive(self.num_features, "num_features")?;
        positive(self.feature_dim, "feature_dim")?;
        positive(self.num_types, "num_types")?;
        if !(self.horizon_t > 0.0) || !self.horizon_t.is_finite() {
            return Err(NetError::config("horizon_T", "must be positive"));
        }
        let range = |r: [f64; 2], f: &str, strict: bool| {
            let ok = r[0].is_finite()
                && r[1].is_finite()
                && r[0] <= r[1]
                && if strict { r[0] > 0.0 } else { r[0] >= 0.0 && r[1] > 0.0 };
            if ok {
                Ok(())
            } else {
                Err(NetError::config(f, format!("invalid range [{}, {}]", r[0], r[1])))
            }
        };
        range(self.capacity_range, "capacity_range", false)?;
        range(self.rate_range, "rate_range", false)?;
        range(self.noise_range, "noise_range", true)?;
        range(self.prior_low_range, "prior_low_range", false)?;
        range(self.prior_high_range, "prior_high_range", false)?;
        if !(0.0..=1.0).contains(&self.poorly_known_prob) {
            return Err(NetError::config("poorly_known_prob", "must lie in [0, 1]"));
        }
        if let Some(types) = &self.learner_types {
            if types.len() != self.num_learners {
                return Err(NetError::config("learner_types", "one entry per learner required"));
            }
            if types.iter().any(|&t| t >= self.num_types) {
                return Err(NetError::config("learner_types", "type id out of range"));
            }
        }
        self.topology.to_kind().map(|_| ())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

/// Variance draw: a zero lower end becomes the open interval `(0, hi]`.
fn positive_uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] > 0.0 {
        return uniform(rng, r);
    }
    // 1 - U[0,1) lies in (0, 1]
    r[1] * (1.0 - rng.gen::<f64>())
}

/// The undirected graph `build_scenario` starts from, before orientation
/// and pruning.
pub fn raw_topology(config: &ScenarioConfig) -> Result<UndirectedGraph, NetError> {
    config.validate()?;
    undirected_topology(&config.topology.to_kind()?, &mut from_seed(config.seed))
}

/// Samples a complete instance. Every random draw comes from one ChaCha
/// stream seeded by `config.seed`, in a fixed order.
///
/// Orientation ranks place sources first and learners last, with relays
/// shuffled in between, so edges between a source and the rest of the
/// network point away from the source and edges at learners point inward.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario, NetError> {
    config.validate()?;
    let mut rng = from_seed(config.seed);
    let kind = config.topology.to_kind()?;
    let graph = undirected_topology(&kind, &mut rng)?;
    let n = graph.num_nodes;
    if config.num_sources + config.num_learners > n {
        return Err(NetError::config(
            "num_sources",
            format!(
                "{} sources plus {} learners exceed {n} nodes",
                config.num_sources, config.num_learners
            ),
        ));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let sources: Vec<usize> = perm[..config.num_sources].to_vec();
    let learners: Vec<usize> =
        perm[config.num_sources..config.num_sources + config.num_learners].to_vec();
    let mut relays: Vec<usize> = perm[config.num_sources + config.num_learners..].to_vec();
    relays.shuffle(&mut rng);
    let mut rank = vec![0; n];
    for (r, &v) in sources.iter().chain(&relays).chain(&learners).enumerate() {
        rank[v] = r;
    }
    let is_source = |v: usize| rank[v] < config.num_sources;
    let is_learner = |v: usize| rank[v] >= n - config.num_learners;

    let mut edges = Vec::new();
    for (from, to) in orient_by_rank(&graph, &rank) {
        if is_source(to) || is_learner(from) {
            continue;
        }
        edges.push(Edge {
            from,
            to,
            capacity: uniform(&mut rng, config.capacity_range),
        });
    }
    let network = Network::new(n, edges, sources, learners)?;

    let features: Vec<Vec<f64>> = (0..config.num_features)
        .map(|_| loop {
            let v: Vec<f64> = (0..config.feature_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = crate::linalg::norm2(&v);
            if norm > 1e-12 {
                break v.into_iter().map(|a| a / norm).collect();
            }
        })
        .collect();
    let pool = FeaturePool::new(features)?;

    let mut models = Vec::with_capacity(config.num_types);
    for _ in 0..config.num_types {
        let noise_std = uniform(&mut rng, config.noise_range).sqrt();
        let prior_variances: Vec<f64> = (0..config.feature_dim)
            .map(|_| {
                if rng.gen::<f64>() < config.poorly_known_prob {
                    positive_uniform(&mut rng, config.prior_high_range)
                } else {
                    positive_uniform(&mut rng, config.prior_low_range)
                }
            })
            .collect();
        let prior_mean = vec![0.0; config.feature_dim];
        let beta = prior_variances
            .iter()
            .zip(&prior_mean)
            .map(|(v, m)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + v.sqrt() * z
            })
            .collect();
        models.push(TypeModel {
            beta,
            noise_std,
            prior_mean,
            prior_variances,
        });
    }

    let types: Vec<usize> = match &config.learner_types {
        Some(t) => t.clone(),
        None => (0..config.num_learners)
            .map(|_| rng.gen_range(0..config.num_types))
            .collect(),
    };
    let learner_specs = network
        .learners()
        .iter()
        .zip(&types)
        .map(|(&node, &t)| {
            let m = &models[t];
            Ok(LearnerSpec {
                node,
                target_type: t,
                design: LearnerDesign::diagonal(&m.prior_variances, m.prior_mean.clone(), m.noise_std)?,
            })
        })
        .collect::<Result<Vec<_>, NetError>>()?;

    let gen_rates = (0..config.num_sources)
        .map(|_| {
            (0..config.num_features)
                .map(|_| {
                    (0..config.num_types)
                        .map(|_| uniform(&mut rng, config.rate_range))
                        .collect()
                })
                .collect()
        })
        .collect();

    Scenario::new(
        network,
        pool,
        config.num_types,
        gen_rates,
        learner_specs,
        models,
        config.horizon_t,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn er_config(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            topology: TopologyConfig {
                kind: "erdos_renyi".into(),
                params: TopologyParams {
                    nodes: Some(20),
                    p: Some(0.3),
                    ..Default::default()
                },
                file: None,
            },
            num_sources: 3,
            num_learners: 3,
            num_features: 5,
            feature_dim: 4,
            num_types: 2,
            seed,
            horizon_t: 10.0,
            capacity_range: default_capacity(),
            rate_range: default_rate(),
            noise_range: default_noise(),
            prior_low_range: default_prior_low(),
            prior_high_range: default_prior_high(),
            poorly_known_prob: 0.5,
            learner_types: None,
        }
    }

    #[test]
    fn deterministic_and_within_ranges() {
        let a = build_scenario(&er_config(5)).unwrap();
        let b = build_scenario(&er_config(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.network().edges().iter().all(|e| (50.0..=100.0).contains(&e.capacity)));
        assert!(a.gen_rates().iter().flatten().flatten().all(|r| (2.0..=5.0).contains(r)));
        for m in a.true_models() {
            assert!(m.noise_std >= 0.5f64.sqrt() && m.noise_std <= 1.0);
            for &v in &m.prior_variances {
                assert!((v > 0.0 && v <= 0.01) || (100.0..=200.0).contains(&v));
            }
        }
        for f in a.pool().features() {
            assert!((crate::linalg::norm2(f) - 1.0).abs() < 1e-12);
        }
        assert_ne!(a, build_scenario(&er_config(6)).unwrap());
    }

    #[test]
    fn abilene_preset() {
        let s = build_scenario(&ScenarioConfig::abilene(1)).unwrap();
        assert_eq!(s.network().num_nodes(), 9);
        assert_eq!(s.learners().len(), 3);
        assert_eq!(s.learners()[0].target_type, s.learners()[1].target_type);
        let json = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut c = er_config(1);
        c.topology.kind = "torus".into();
        match build_scenario(&c) {
            Err(NetError::Config { field, .. }) => assert_eq!(field, "topology.kind"),
            other => panic!("unexpected {other:?}"),
        }
        let mut c = er_config(1);
        c.num_sources = 15;
        c.num_learners = 10;
        assert!(matches!(build_scenario(&c), Err(NetError::Config { .. })));
        let mut c = er_config(1);
        c.topology.params.p = None;
        match build_scenario(&c) {
            Err(NetError::Config { field, .. }) => assert_eq!(field, "topology.params.p"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
