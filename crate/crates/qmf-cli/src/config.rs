//! The self-describing JSON run configuration (schema `qmf/1`).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Deserialize;

use qmf_core::emf::EdgeAmplitude;
use qmf_core::graph::{Tree, Vertex};
use qmf_core::kernels::{kernel_matrix, KernelFamily};
use qmf_core::verify::Tolerances;
use qmf_core::{AmplitudeField, LocalOperator};

pub const SCHEMA: &str = "qmf/1";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default)]
    pub tree: Option<TreeSpec>,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub observables: Vec<Vec<MatrixUnitFactor>>,
    #[serde(default)]
    pub chain: Option<ChainConfig>,
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub clustering: Option<ClusteringConfig>,
    /// Output directory; overridden by --out.
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Emf,
    Chain,
    Verify,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub eq: Option<f64>,
    pub trace: Option<f64>,
}

impl ToleranceOverrides {
    pub fn resolve(&self) -> Tolerances {
        let mut t = Tolerances::default();
        if let Some(eq) = self.eq {
            t.eq = eq;
        }
        if let Some(trace) = self.trace {
            t.trace = trace;
        }
        t
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    #[serde(default)]
    pub cayley: Option<CayleySpec>,
    #[serde(default)]
    pub edges: Option<Vec<(Vertex, Vertex)>>,
    #[serde(default)]
    pub root: Option<Vertex>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CayleySpec {
    pub k: i64,
    pub depth: i64,
}

impl TreeSpec {
    /// Build the tree; explicit edge lists are rooted and relabelled, and
    /// the old-label → canonical-label map is returned for translating
    /// field edges.
    pub fn build(&self) -> anyhow::Result<(Tree, BTreeMap<Vertex, Vertex>)> {
        match (&self.cayley, &self.edges) {
            (Some(c), None) => {
                if c.k < 1 {
                    anyhow::bail!("tree.cayley.k must be >= 1, got {}", c.k);
                }
                if c.depth < 0 {
                    anyhow::bail!("tree.cayley.depth must be >= 0, got {}", c.depth);
                }
                let tree = Tree::cayley(c.k as usize, c.depth as usize)?;
                let identity = tree.vertices().map(|v| (v.clone(), v.clone())).collect();
                Ok((tree, identity))
            }
            (None, Some(edges)) => {
                let root = self.root.clone().unwrap_or_else(Vertex::root);
                let (tree, relabel) = Tree::from_edges(edges, &root)?;
                Ok((tree, relabel))
            }
            _ => anyhow::bail!("tree must specify exactly one of `cayley` or `edges`"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub d: usize,
    pub edges: Vec<EdgeAmplitude>,
}

impl FieldSpec {
    pub fn build(
        &self,
        tree: Tree,
        relabel: &BTreeMap<Vertex, Vertex>,
    ) -> anyhow::Result<AmplitudeField> {
        let mut amps = BTreeMap::new();
        for edge in &self.edges {
            let parent = relabel
                .get(&edge.parent)
                .ok_or_else(|| anyhow::anyhow!("field edge parent {} not in tree", edge.parent))?;
            let child = relabel
                .get(&edge.child)
                .ok_or_else(|| anyhow::anyhow!("field edge child {} not in tree", edge.child))?;
            amps.insert((parent.clone(), child.clone()), edge.matrix(self.d)?);
        }
        Ok(AmplitudeField::new(tree, self.d, amps)?)
    }
}

/// One factor of an observable: the matrix unit e_ij at a site
/// (1-based indices).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixUnitFactor {
    pub site: Vertex,
    pub i: usize,
    pub j: usize,
}

pub fn build_observable(
    factors: &[MatrixUnitFactor],
    d: usize,
    relabel: &BTreeMap<Vertex, Vertex>,
) -> anyhow::Result<LocalOperator> {
    if factors.is_empty() {
        anyhow::bail!("observable needs at least one matrix-unit factor");
    }
    let mut op: Option<LocalOperator> = None;
    for f in factors {
        let site = relabel
            .get(&f.site)
            .ok_or_else(|| anyhow::anyhow!("observable site {} not in tree", f.site))?;
        let unit = LocalOperator::matrix_unit(site.clone(), d, f.i, f.j)?;
        op = Some(match op {
            None => unit,
            Some(acc) => acc.mul(&unit)?,
        });
    }
    Ok(op.expect("nonempty"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub k: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "solve_marker")]
    pub h: SolveOrMatrix,
    #[serde(default = "solve_marker")]
    pub w0: SolveOrMatrix,
}

fn default_depth() -> usize {
    3
}

fn solve_marker() -> SolveOrMatrix {
    SolveOrMatrix::Solve(SolveWord::Solve)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Family(KernelFamily),
    Hamiltonian { #[serde(rename = "H")] h: MatrixJson, beta: f64 },
    Explicit { #[serde(rename = "K")] k: MatrixJson },
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveWord {
    Solve,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum SolveOrMatrix {
    Solve(SolveWord),
    Given(MatrixJson),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn build(&self) -> anyhow::Result<DMatrix<C64>> {
        let n = self.re.len();
        if n == 0 || self.re.iter().any(|row| row.len() != n) {
            anyhow::bail!("matrix `re` must be square and non-empty");
        }
        if !self.im.is_empty() && (self.im.len() != n || self.im.iter().any(|r| r.len() != n)) {
            anyhow::bail!("matrix `im` must match the shape of `re`");
        }
        Ok(DMatrix::from_fn(n, n, |i, j| {
            let im = if self.im.is_empty() { 0.0 } else { self.im[i][j] };
            C64::new(self.re[i][j], im)
        }))
    }
}

impl ChainConfig {
    /// The kernel matrix and the site dimension it implies.
    pub fn kernel_matrix(&self) -> anyhow::Result<(DMatrix<C64>, usize)> {
        match &self.kernel {
            KernelSpec::Family(f) => {
                let beta = self
                    .beta
                    .ok_or_else(|| anyhow::anyhow!("named kernels need a `beta` field"))?;
                Ok((kernel_matrix(*f, beta), 2))
            }
            KernelSpec::Hamiltonian { h, beta } => {
                let m = h.build()?;
                let d = integer_sqrt(m.nrows())?;
                let root = Vertex::root();
                let op = LocalOperator::two_site(root.clone(), root.child(1), d, m)?;
                let k = qmf_core::herm_exp(&op, C64::new(*beta, 0.0))?;
                Ok((k.into_matrix(), d))
            }
            KernelSpec::Explicit { k } => {
                let m = k.build()?;
                let d = integer_sqrt(m.nrows())?;
                Ok((m, d))
            }
        }
    }

    pub fn family(&self) -> Option<KernelFamily> {
        match &self.kernel {
            KernelSpec::Family(f) => Some(*f),
            _ => None,
        }
    }
}

fn integer_sqrt(n: usize) -> anyhow::Result<usize> {
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n || d < 2 {
        anyhow::bail!("kernel matrix dimension {n} is not d² for a site dimension d >= 2");
    }
    Ok(d)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringConfig {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_n_max() -> usize {
    10
}

pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
    let config: RunConfig = serde_json::from_str(text)
        .map_err(|e| anyhow::anyhow!("config does not match the {SCHEMA} schema: {e}"))?;
    if config.schema != SCHEMA {
        anyhow::bail!(
            "unsupported schema {:?}; this binary speaks {SCHEMA}",
            config.schema
        );
    }
    Ok(config)
}
