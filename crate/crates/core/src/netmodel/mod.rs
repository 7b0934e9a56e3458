//! Network instances and the feasible set of rate allocations.
//!
//! A rate vector holds one rate per (edge, feature, type) triple followed by
//! one delivery rate per (learner, feature) pair. The feasible set `D` is cut
//! out by edge capacities, per-node flow bounds (a node cannot forward more of
//! a flow than it receives or, for sources, generates) and the learner
//! equalities tying delivery rates to incoming traffic of the learner's type.

mod scenario;
mod topology;

use serde::{Deserialize, Serialize};

use crate::doptimal::{marginal_gain, DesignState, FeaturePool, LearnerDesign};
use crate::error::{LpError, NetError};
pub use crate::lp::LpStandardForm;
use crate::lp::{solve_lp, SparseRow};

pub use scenario::{build_scenario, raw_topology, ScenarioConfig, TopologyConfig, TopologyParams};
pub use topology::{
    generate_topology, load_edge_list, orient_by_rank, parse_edge_list, preset_edge_list,
    GeneratedTopology, TopologyKind, UndirectedGraph,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

/// Directed acyclic network with designated sources and learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct Network {
    num_nodes: usize,
    edges: Vec<Edge>,
    sources: Vec<usize>,
    learners: Vec<usize>,
    in_edges: Vec<Vec<usize>>,
    out_edges: Vec<Vec<usize>>,
    source_pos: Vec<Option<usize>>,
    learner_pos: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDoc {
    num_nodes: usize,
    edges: Vec<Edge>,
    sources: Vec<usize>,
    learners: Vec<usize>,
}

impl TryFrom<NetworkDoc> for Network {
    type Error = NetError;
    fn try_from(d: NetworkDoc) -> Result<Self, NetError> {
        Network::new(d.num_nodes, d.edges, d.sources, d.learners)
    }
}

impl From<Network> for NetworkDoc {
    fn from(n: Network) -> Self {
        NetworkDoc {
            num_nodes: n.num_nodes,
            edges: n.edges,
            sources: n.sources,
            learners: n.learners,
        }
    }
}

impl Network {
    pub fn new(
        num_nodes: usize,
        edges: Vec<Edge>,
        sources: Vec<usize>,
        learners: Vec<usize>,
    ) -> Result<Self, NetError> {
        let invalid = |m: String| Err(NetError::InvalidNetwork(m));
        let mut in_edges = vec![Vec::new(); num_nodes];
        let mut out_edges = vec![Vec::new(); num_nodes];
        for (i, e) in edges.iter().enumerate() {
            if e.from >= num_nodes || e.to >= num_nodes {
                return invalid(format!("edge {i} references a node outside 0..{num_nodes}"));
            }
            if e.from == e.to {
                return invalid(format!("edge {i} is a self-loop"));
            }
            if !(e.capacity >= 0.0) || !e.capacity.is_finite() {
                return invalid(format!("edge {i} has invalid capacity {}", e.capacity));
            }
            out_edges[e.from].push(i);
            in_edges[e.to].push(i);
        }
        let mut source_pos = vec![None; num_nodes];
        let mut learner_pos = vec![None; num_nodes];
        for (k, &s) in sources.iter().enumerate() {
            if s >= num_nodes || source_pos[s].is_some() {
                return invalid(format!("bad or duplicate source {s}"));
            }
            if !in_edges[s].is_empty() {
                return invalid(format!("source {s} has incoming edges"));
            }
            source_pos[s] = Some(k);
        }
        for (k, &l) in learners.iter().enumerate() {
            if l >= num_nodes || learner_pos[l].is_some() {
                return invalid(format!("bad or duplicate learner {l}"));
            }
            if source_pos[l].is_some() {
                return invalid(format!("node {l} is both a source and a learner"));
            }
            if !out_edges[l].is_empty() {
                return invalid(format!("learner {l} has outgoing edges"));
            }
            learner_pos[l] = Some(k);
        }
        let net = Self {
            num_nodes,
            edges,
            sources,
            learners,
            in_edges,
            out_edges,
            source_pos,
            learner_pos,
        };
        if net.topological_order().is_none() {
            return invalid("graph contains a directed cycle".into());
        }
        Ok(net)
    }

    /// Kahn's algorithm; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = self.in_edges.iter().map(Vec::len).collect();
        let mut stack: Vec<usize> = (0..self.num_nodes).filter(|&v| indeg[v] == 0).collect();
        stack.reverse();
        let mut order = Vec::with_capacity(self.num_nodes);
        while let Some(v) = stack.pop() {
            order.push(v);
            for &e in &self.out_edges[v] {
                let w = self.edges[e].to;
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
        (order.len() == self.num_nodes).then_some(order)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn learners(&self) -> &[usize] {
        &self.learners
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn source_index(&self, node: usize) -> Option<usize> {
        self.source_pos.get(node).copied().flatten()
    }

    pub fn learner_index(&self, node: usize) -> Option<usize> {
        self.learner_pos.get(node).copied().flatten()
    }

    fn check_node(&self, node: usize) -> Result<(), NetError> {
        if node < self.num_nodes {
            Ok(())
        } else {
            Err(NetError::UnknownNode(node))
        }
    }

    /// Returns a copy with every capacity multiplied by `factor`.
    pub fn with_scaled_capacities(&self, factor: f64) -> Self {
        let mut n = self.clone();
        for e in &mut n.edges {
            e.capacity *= factor;
        }
        n
    }
}

/// Ground-truth model and prior of one label type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeModel {
    pub beta: Vec<f64>,
    pub noise_std: f64,
    pub prior_mean: Vec<f64>,
    /// Diagonal of the prior covariance.
    pub prior_variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub node: usize,
    pub target_type: usize,
    pub design: LearnerDesign,
}

/// Fully materialized problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDoc", into = "ScenarioDoc")]
pub struct Scenario {
    network: Network,
    pool: FeaturePool,
    num_types: usize,
    /// `gen_rates[source position][feature][type]`
    gen_rates: Vec<Vec<Vec<f64>>>,
    learners: Vec<LearnerSpec>,
    true_models: Vec<TypeModel>,
    horizon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioDoc {
    network: Network,
    pool: FeaturePool,
    num_types: usize,
    gen_rates: Vec<Vec<Vec<f64>>>,
    learners: Vec<LearnerSpec>,
    true_models: Vec<TypeModel>,
    horizon: f64,
}

impl TryFrom<ScenarioDoc> for Scenario {
    type Error = NetError;
    fn try_from(d: ScenarioDoc) -> Result<Self, NetError> {
        Scenario::new(
            d.network,
            d.pool,
            d.num_types,
            d.gen_rates,
            d.learners,
            d.true_models,
            d.horizon,
        )
    }
}

impl From<Scenario> for ScenarioDoc {
    fn from(s: Scenario) -> Self {
        ScenarioDoc {
            network: s.network,
            pool: s.pool,
            num_types: s.num_types,
            gen_rates: s.gen_rates,
            learners: s.learners,
            true_models: s.true_models,
            horizon: s.horizon,
        }
    }
}

impl Scenario {
    pub fn new(
        network: Network,
        pool: FeaturePool,
        num_types: usize,
        gen_rates: Vec<Vec<Vec<f64>>>,
        learners: Vec<LearnerSpec>,
        true_models: Vec<TypeModel>,
        horizon: f64,
    ) -> Result<Self, NetError> {
        let bad = |m: String| Err(NetError::InvalidScenario(m));
        if num_types == 0 {
            return bad("at least one type is required".into());
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return bad(format!("horizon must be positive, got {horizon}"));
        }
        if gen_rates.len() != network.sources().len() {
            return bad("gen_rates must have one entry per source".into());
        }
        for (s, per_source) in gen_rates.iter().enumerate() {
            if per_source.len() != pool.len() || per_source.iter().any(|r| r.len() != num_types) {
                return bad(format!("gen_rates[{s}] must be |X| x |T|"));
            }
            if per_source.iter().flatten().any(|r| !(*r >= 0.0) || !r.is_finite()) {
                return bad(format!("gen_rates[{s}] has a negative or non-finite rate"));
            }
        }
        if learners.len() != network.learners().len() {
            return bad("one learner spec per learner node is required".into());
        }
        for (spec, &node) in learners.iter().zip(network.learners()) {
            if spec.node != node {
                return bad(format!("learner spec for {} out of order (expected {node})", spec.node));
            }
            if spec.target_type >= num_types {
                return bad(format!("learner {node} targets unknown type {}", spec.target_type));
            }
            if spec.design.dim() != pool.dim() {
                return bad(format!("learner {node} prior has wrong dimension"));
            }
        }
        if true_models.len() != num_types {
            return bad("one true model per type is required".into());
        }
        for (t, m) in true_models.iter().enumerate() {
            if !(m.noise_std > 0.0) {
                return bad(format!("type {t} has non-positive noise"));
            }
            if m.beta.len() != pool.dim()
                || m.prior_mean.len() != pool.dim()
                || m.prior_variances.len() != pool.dim()
            {
                return bad(format!("type {t} model has wrong dimension"));
            }
        }
        Ok(Self {
            network,
            pool,
            num_types,
            gen_rates,
            learners,
            true_models,
            horizon,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn pool(&self) -> &FeaturePool {
        &self.pool
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn num_features(&self) -> usize {
        self.pool.len()
    }

    pub fn learners(&self) -> &[LearnerSpec] {
        &self.learners
    }

    pub fn true_models(&self) -> &[TypeModel] {
        &self.true_models
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gen_rates(&self) -> &[Vec<Vec<f64>>] {
        &self.gen_rates
    }

    pub fn gen_rate(&self, source_node: usize, feature: usize, ty: usize) -> Option<f64> {
        let s = self.network.source_index(source_node)?;
        self.gen_rates[s].get(feature)?.get(ty).copied()
    }

    pub fn index(&self) -> RateIndex {
        RateIndex {
            num_edges: self.network.edges().len(),
            num_features: self.pool.len(),
            num_types: self.num_types,
            num_learners: self.learners.len(),
        }
    }

    pub fn zero_rates(&self) -> RateVector {
        RateVector::zeros(self.index())
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self, NetError> {
        let mut s = self.clone();
        if !(horizon > 0.0) {
            return Err(NetError::InvalidScenario("horizon must be positive".into()));
        }
        s.horizon = horizon;
        Ok(s)
    }

    /// Multiplies every source generation rate by `factor`.
    pub fn scale_source_rates(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for r in s.gen_rates.iter_mut().flatten().flatten() {
            *r *= factor;
        }
        s
    }

    /// Divides every link capacity by `factor`.
    pub fn downsize_capacities(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.network = s.network.with_scaled_capacities(1.0 / factor);
        s
    }

    pub fn learner_design(&self, learner: usize) -> &LearnerDesign {
        &self.learners[learner].design
    }
}

/// Canonical layout of the decision vector: edge-major, then feature, then
/// type; learner delivery rates follow all edge rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateIndex {
    pub num_edges: usize,
    pub num_features: usize,
    pub num_types: usize,
    pub num_learners: usize,
}

impl RateIndex {
    pub fn edge_var(&self, edge: usize, feature: usize, ty: usize) -> usize {
        (edge * self.num_features + feature) * self.num_types + ty
    }

    pub fn num_edge_vars(&self) -> usize {
        self.num_edges * self.num_features * self.num_types
    }

    pub fn learner_var(&self, learner: usize, feature: usize) -> usize {
        self.num_edge_vars() + learner * self.num_features + feature
    }

    pub fn len(&self) -> usize {
        self.num_edge_vars() + self.num_learners * self.num_features
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Decision variable: edge rates and learner delivery rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector {
    pub index: RateIndex,
    pub values: Vec<f64>,
}

impl RateVector {
    pub fn zeros(index: RateIndex) -> Self {
        Self {
            index,
            values: vec![0.0; index.len()],
        }
    }

    pub fn from_values(index: RateIndex, values: Vec<f64>) -> Result<Self, NetError> {
        if values.len() != index.len() {
            return Err(NetError::IndexMismatch {
                expected: index.len(),
                found: values.len(),
            });
        }
        Ok(Self { index, values })
    }

    pub fn edge_rate(&self, edge: usize, feature: usize, ty: usize) -> f64 {
        self.values[self.index.edge_var(edge, feature, ty)]
    }

    pub fn set_edge_rate(&mut self, edge: usize, feature: usize, ty: usize, v: f64) {
        let i = self.index.edge_var(edge, feature, ty);
        self.values[i] = v;
    }

    pub fn learner_rate(&self, learner: usize, feature: usize) -> f64 {
        self.values[self.index.learner_var(learner, feature)]
    }

    pub fn set_learner_rate(&mut self, learner: usize, feature: usize, v: f64) {
        let i = self.index.learner_var(learner, feature);
        self.values[i] = v;
    }

    /// Delivery rates `λ^ℓ` of one learner.
    pub fn learner_rates(&self, learner: usize) -> &[f64] {
        let start = self.index.learner_var(learner, 0);
        &self.values[start..start + self.index.num_features]
    }

    pub fn check_shape(&self, scenario: &Scenario) -> Result<(), NetError> {
        let expected = scenario.index();
        if self.index != expected || self.values.len() != expected.len() {
            return Err(NetError::IndexMismatch {
                expected: expected.len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            index: self.index,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// `λ^{v,in}_{x,t}`: generation rate at a source, otherwise the sum over in-edges.
pub fn incoming_rate(
    rates: &RateVector,
    scenario: &Scenario,
    node: usize,
    feature: usize,
    ty: usize,
) -> Result<f64, NetError> {
    let net = scenario.network();
    net.check_node(node)?;
    if net.source_index(node).is_some() {
        return Ok(scenario.gen_rate(node, feature, ty).unwrap_or(0.0));
    }
    Ok(net
        .in_edges(node)
        .iter()
        .map(|&e| rates.edge_rate(e, feature, ty))
        .sum())
}

/// `λ^{v,out}_{x,t}`: the sum over out-edges.
pub fn outgoing_rate(
    rates: &RateVector,
    scenario: &Scenario,
    node: usize,
    feature: usize,
    ty: usize,
) -> Result<f64, NetError> {
    let net = scenario.network();
    net.check_node(node)?;
    Ok(net
        .out_edges(node)
        .iter()
        .map(|&e| rates.edge_rate(e, feature, ty))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    LearnerRate,
    Capacity,
    FlowBound,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub magnitude: f64,
}

/// Lists every constraint of `D` violated by more than `tol`.
pub fn feasibility_check(
    rates: &RateVector,
    scenario: &Scenario,
    tol: f64,
) -> Result<Vec<Violation>, NetError> {
    rates.check_shape(scenario)?;
    let net = scenario.network();
    let idx = scenario.index();
    let mut out = Vec::new();

    for (i, &v) in rates.values.iter().enumerate() {
        if v < -tol {
            out.push(Violation {
                kind: ViolationKind::Negative,
                location: format!("variable {i}"),
                magnitude: -v,
            });
        }
    }
    for (l, spec) in scenario.learners().iter().enumerate() {
        for x in 0..idx.num_features {
            let inflow = incoming_rate(rates, scenario, spec.node, x, spec.target_type)?;
            let gap = (rates.learner_rate(l, x) - inflow).abs();
            if gap > tol {
                out.push(Violation {
                    kind: ViolationKind::LearnerRate,
                    location: format!("learner {} feature {x}", spec.node),
                    magnitude: gap,
                });
            }
        }
    }
    for (e, edge) in net.edges().iter().enumerate() {
        let load: f64 = (0..idx.num_features)
            .flat_map(|x| (0..idx.num_types).map(move |t| (x, t)))
            .map(|(x, t)| rates.edge_rate(e, x, t))
            .sum();
        if load > edge.capacity + tol {
            out.push(Violation {
                kind: ViolationKind::Capacity,
                location: format!("edge {e} ({}->{})", edge.from, edge.to),
                magnitude: load - edge.capacity,
            });
        }
    }
    for v in 0..net.num_nodes() {
        if net.learner_index(v).is_some() {
            continue;
        }
        for x in 0..idx.num_features {
            for t in 0..idx.num_types {
                let excess = outgoing_rate(rates, scenario, v, x, t)?
                    - incoming_rate(rates, scenario, v, x, t)?;
                if excess > tol {
                    out.push(Violation {
                        kind: ViolationKind::FlowBound,
                        location: format!("node {v} feature {x} type {t}"),
                        magnitude: excess,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Assembles `D` as an LP with a zero objective.
///
/// Flow-bound rows are only emitted for nodes with outgoing edges; for the
/// others the bound reads `0 ≤ inflow`, which nonnegativity already implies.
pub fn constraint_matrices(scenario: &Scenario) -> LpStandardForm {
    let net = scenario.network();
    let idx = scenario.index();
    let mut lp = LpStandardForm::new(idx.len());

    for (e, edge) in net.edges().iter().enumerate() {
        let row: SparseRow = (0..idx.num_features)
            .flat_map(|x| (0..idx.num_types).map(move |t| (x, t)))
            .map(|(x, t)| (idx.edge_var(e, x, t), 1.0))
            .collect();
        lp.push_ineq(row, edge.capacity);
    }
    for v in 0..net.num_nodes() {
        if net.learner_index(v).is_some() || net.out_edges(v).is_empty() {
            continue;
        }
        let source = net.source_index(v);
        for x in 0..idx.num_features {
            for t in 0..idx.num_types {
                let mut row: SparseRow = net
                    .out_edges(v)
                    .iter()
                    .map(|&e| (idx.edge_var(e, x, t), 1.0))
                    .collect();
                let rhs = match source {
                    Some(s) => scenario.gen_rates()[s][x][t],
                    None => {
                        row.extend(net.in_edges(v).iter().map(|&e| (idx.edge_var(e, x, t), -1.0)));
                        0.0
                    }
                };
                lp.push_ineq(row, rhs);
            }
        }
    }
    for (l, spec) in scenario.learners().iter().enumerate() {
        for x in 0..idx.num_features {
            let mut row: SparseRow = vec![(idx.learner_var(l, x), 1.0)];
            row.extend(
                net.in_edges(spec.node)
                    .iter()
                    .map(|&e| (idx.edge_var(e, x, spec.target_type), -1.0)),
            );
            lp.push_eq(row, 0.0);
        }
    }
    lp
}

/// `D` with objective `Σ_ℓ Σ_x λ^ℓ_x`.
pub fn max_sum_lp(scenario: &Scenario) -> LpStandardForm {
    let mut lp = constraint_matrices(scenario);
    let idx = scenario.index();
    for v in idx.num_edge_vars()..idx.len() {
        lp.objective[v] = 1.0;
    }
    lp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Largest total learner delivery rate over `D`.
    pub lambda_max: f64,
    /// Largest single-observation design gain over learners and features.
    pub g_max: f64,
    /// Lipschitz constant of the utility gradient, `√2·|X|·|L|·T·G_MAX`.
    pub lipschitz: f64,
    pub num_features: usize,
    pub num_learners: usize,
    pub horizon: f64,
}

pub fn compute_theory_constants(scenario: &Scenario) -> Result<TheoryConstants, LpError> {
    let lambda_max = solve_lp(&max_sum_lp(scenario))?.objective_value;
    let g_max = g_max(scenario);
    let nx = scenario.num_features();
    let nl = scenario.learners().len();
    Ok(TheoryConstants {
        lambda_max,
        g_max,
        lipschitz: std::f64::consts::SQRT_2 * nx as f64 * nl as f64 * scenario.horizon() * g_max,
        num_features: nx,
        num_learners: nl,
        horizon: scenario.horizon(),
    })
}

/// `max_{ℓ,x} G^ℓ(e_x) − G^ℓ(0)`.
pub fn g_max(scenario: &Scenario) -> f64 {
    let pool = scenario.pool();
    let mut best: f64 = 0.0;
    for spec in scenario.learners() {
        let state =
            DesignState::empty(pool, &spec.design).expect("learner designs are validated");
        for x in 0..pool.len() {
            let g = marginal_gain(&state, x, 1, pool, &spec.design).expect("valid feature");
            best = best.max(g);
        }
    }
    best
}

/// Iteration count, truncation level and sample count that the convergence
/// analysis prescribes for accuracy targets `(ε₀, ε₁, ε₂)`. Diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuggestedParams {
    pub iterations: u64,
    pub truncation: u64,
    pub samples: f64,
}

pub fn suggested_params(c: &TheoryConstants, eps0: f64, eps1: f64, eps2: f64) -> SuggestedParams {
    let nx = c.num_features as f64;
    let nl = c.num_learners as f64;
    let t = c.horizon;
    let lm = c.lambda_max;
    let k = ((std::f64::consts::SQRT_2 / 2.0 * nx * nl * t * lm * lm + 2.0 * lm) * c.g_max / eps2)
        .ceil()
        .max(1.0);
    let mean = lm * t;
    let mut n_trunc = mean.ceil().max(0.0) as u64;
    if mean > 0.0 {
        while crate::gradest::poisson_tail_bound(mean, n_trunc as f64 + 1.0).unwrap_or(0.0) > eps1 {
            n_trunc += 1;
        }
    }
    let samples = 2.0 * t * t * (n_trunc as f64 + 1.0) * k * k * (2.0 * nx * nl * k / eps0).ln();
    SuggestedParams {
        iterations: k as u64,
        truncation: n_trunc,
        samples: samples.ceil(),
    }
}
