//! Network admittance assembly, Kron reduction and power-flow evaluation.

use nalgebra::DMatrix;

use crate::angle::{ComplexAngle, ComplexVoltage};
use crate::linalg::{neumaier_sum, symmetric_eigenvalues};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Converter,
    Load,
    Generator,
}

/// Series branch with resistance `r` and reactance `x` at the nominal
/// frequency (both per unit). `x < 0` denotes a capacitive branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSpec {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

impl BranchSpec {
    pub fn new(from: usize, to: usize, r: f64, x: f64) -> Self {
        Self { from, to, r, x }
    }

    /// Static branch admittance `1/(r + jx)`.
    pub fn admittance(&self) -> C64 {
        C64::new(self.r, self.x).inv()
    }

    /// Series inductance `x/ω₀`.
    pub fn inductance(&self, omega0: f64) -> f64 {
        self.x / omega0
    }
}

/// A validated, connected network with node partition labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    kinds: Vec<NodeKind>,
    branches: Vec<BranchSpec>,
    shunts: Vec<C64>,
}

impl NetworkModel {
    /// Validates branch data and connectivity. Node ids are 0-based.
    pub fn new(kinds: Vec<NodeKind>, branches: Vec<BranchSpec>, shunts: Vec<C64>) -> Result<Self> {
        let n = kinds.len();
        if n == 0 {
            return Err(Error::Config("network has no nodes".into()));
        }
        if shunts.len() != n {
            return Err(Error::Config(format!(
                "expected {n} shunt entries, got {}",
                shunts.len()
            )));
        }
        for (i, b) in branches.iter().enumerate() {
            let tag = format!("branch #{} ({}-{})", i + 1, b.from + 1, b.to + 1);
            if b.from >= n || b.to >= n {
                return Err(Error::Config(format!("{tag}: node id out of range 1..={n}")));
            }
            if b.from == b.to {
                return Err(Error::Config(format!("{tag}: self loop")));
            }
            if !(b.r.is_finite() && b.x.is_finite()) {
                return Err(Error::Config(format!("{tag}: non-finite impedance")));
            }
            if b.r < 0.0 {
                return Err(Error::Config(format!("{tag}: negative resistance r = {}", b.r)));
            }
            if b.r == 0.0 && b.x == 0.0 {
                return Err(Error::Config(format!("{tag}: r and x are both zero")));
            }
        }
        if let Some(k) = shunts.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::Config(format!("shunt at node {}: non-finite admittance", k + 1)));
        }
        let components = connected_components(n, &branches);
        if components > 1 {
            return Err(Error::Config(format!(
                "network is disconnected ({components} components)"
            )));
        }
        Ok(Self {
            kinds,
            branches,
            shunts,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn branches(&self) -> &[BranchSpec] {
        &self.branches
    }

    pub fn shunts(&self) -> &[C64] {
        &self.shunts
    }

    pub fn nodes_of(&self, kind: NodeKind) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&i| self.kinds[i] == kind).collect()
    }
}

fn connected_components(n: usize, branches: &[BranchSpec]) -> usize {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut components = n;
    for b in branches {
        let (ra, rb) = (find(&mut parent, b.from), find(&mut parent, b.to));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components
}

/// The three-converter reference network used by the shipped scenarios.
///
/// Branches 1–2: r=0.02, x=0.10; 2–3: r=0.05, x=0.05; 1–3: r=0.01, x=0.12.
pub fn canon3() -> NetworkModel {
    NetworkModel::new(
        vec![NodeKind::Converter; 3],
        vec![
            BranchSpec::new(0, 1, 0.02, 0.10),
            BranchSpec::new(1, 2, 0.05, 0.05),
            BranchSpec::new(0, 2, 0.01, 0.12),
        ],
        vec![C64::new(0.0, 0.0); 3],
    )
    .expect("canonical network is valid")
}

/// Nodal admittance matrix with branch admittances `1/(r + jx)` and shunts on
/// the diagonal.
pub fn build_admittance(model: &NetworkModel) -> DMatrix<C64> {
    let n = model.num_nodes();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for b in model.branches() {
        let yb = b.admittance();
        y[(b.from, b.from)] += yb;
        y[(b.to, b.to)] += yb;
        y[(b.from, b.to)] -= yb;
        y[(b.to, b.from)] -= yb;
    }
    for (k, s) in model.shunts().iter().enumerate() {
        y[(k, k)] += s;
    }
    y
}

/// Kron-reduced network: a symmetric Laplacian over the kept nodes plus the
/// per-node shunt residue moved into the normalized power setpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    y: DMatrix<C64>,
    setpoint_shift: Vec<C64>,
    nodes: Vec<usize>,
}

impl ReducedNetwork {
    /// Wraps a matrix that must already be a symmetric zero-row-sum Laplacian.
    pub fn from_laplacian(y: DMatrix<C64>) -> Result<Self> {
        if !y.is_square() {
            return Err(Error::Config("admittance matrix must be square".into()));
        }
        let n = y.nrows();
        let tol = 1e-12 * y.norm().max(1.0);
        if crate::linalg::asymmetry(&y) > tol {
            return Err(Error::Config("admittance matrix is not symmetric".into()));
        }
        let worst = max_row_sum(&y);
        if worst > tol {
            return Err(Error::Config(format!(
                "admittance matrix has nonzero row sums (max {worst:.3e})"
            )));
        }
        Ok(Self {
            y,
            setpoint_shift: vec![C64::new(0.0, 0.0); n],
            nodes: (0..n).collect(),
        })
    }

    /// The zero-row-sum Laplacian `Y`.
    pub fn y(&self) -> &DMatrix<C64> {
        &self.y
    }

    /// Shift to add to each node's `ς̄*` (the negated shunt residue).
    pub fn setpoint_shift(&self) -> &[C64] {
        &self.setpoint_shift
    }

    /// Original ids of the kept nodes.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    /// The reduced admittance before shunt absorption, `Y − diag(shift)`.
    pub fn physical_admittance(&self) -> DMatrix<C64> {
        let mut y = self.y.clone();
        for (k, s) in self.setpoint_shift.iter().enumerate() {
            y[(k, k)] -= s;
        }
        y
    }
}

/// Largest modulus of a row sum.
pub fn max_row_sum(y: &DMatrix<C64>) -> f64 {
    y.row_iter().map(|r| r.sum().norm()).fold(0.0, f64::max)
}

fn schur_complement(y_full: &DMatrix<C64>, keep: &[usize]) -> Result<DMatrix<C64>> {
    let n = y_full.nrows();
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() || keep.iter().any(|&k| k >= n) {
        return Err(Error::Config("keep set has duplicates or out-of-range ids".into()));
    }
    let elim: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let ykk = y_full.select_rows(keep).select_columns(keep);
    if elim.is_empty() {
        return Ok(ykk);
    }
    let yee = y_full.select_rows(&elim).select_columns(&elim);
    let yke = y_full.select_rows(keep).select_columns(&elim);
    let yek = y_full.select_rows(&elim).select_columns(keep);
    let sv = yee.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < 1e13) {
        return Err(Error::SingularBlock { condition });
    }
    let x = yee.lu().solve(&yek).ok_or(Error::SingularBlock { condition })?;
    Ok(ykk - yke * x)
}

/// Schur complement of `y_full` onto `keep`, with the resulting row sums split
/// off into a setpoint shift so the stored matrix is an exact Laplacian.
pub fn kron_reduce(y_full: &DMatrix<C64>, keep: &[usize]) -> Result<ReducedNetwork> {
    let reduced = schur_complement(y_full, keep)?;
    let mut y = (&reduced + reduced.transpose()) * C64::new(0.5, 0.0);
    let n = y.nrows();
    let mut shift = Vec::with_capacity(n);
    for k in 0..n {
        let row_sum = y.row(k).sum();
        y[(k, k)] -= row_sum;
        shift.push(-row_sum);
    }
    Ok(ReducedNetwork {
        y,
        setpoint_shift: shift,
        nodes: keep.to_vec(),
    })
}

/// Eliminates every load node of a converter-only network.
pub fn reduce(model: &NetworkModel) -> Result<ReducedNetwork> {
    if !model.nodes_of(NodeKind::Generator).is_empty() {
        return Err(Error::Config(
            "network has generator nodes; use sg_partition for augmented models".into(),
        ));
    }
    let keep = model.nodes_of(NodeKind::Converter);
    if keep.is_empty() {
        return Err(Error::Config("network has no converter nodes".into()));
    }
    kron_reduce(&build_admittance(model), &keep)
}

/// Conjugate normalized power `ς̄_k = Σ_l y_kl v_l / v_k`.
///
/// The normalized power itself is `ς_k = conj(ς̄_k) = ρ_k + jσ_k`.
pub fn normalized_power_flow(y: &ReducedNetwork, v: &[ComplexVoltage]) -> Result<Vec<C64>> {
    normalized_power_flow_matrix(y.y(), v)
}

pub fn normalized_power_flow_matrix(y: &DMatrix<C64>, v: &[ComplexVoltage]) -> Result<Vec<C64>> {
    if v.len() != y.nrows() {
        return Err(Error::Config(format!(
            "voltage vector has {} entries, network has {}",
            v.len(),
            y.nrows()
        )));
    }
    if let Some(index) = v.iter().position(|x| x.norm() == 0.0) {
        return Err(Error::ZeroVoltage { index });
    }
    Ok((0..v.len())
        .map(|k| {
            let current: C64 = (0..v.len()).map(|l| y[(k, l)] * v[l]).sum();
            current / v[k]
        })
        .collect())
}

/// Linear complex power flow `ς̄^dc = Yϑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFlow {
    pub sigma_conj: Vec<C64>,
    /// `𝟙ᵀς̄^dc`, zero up to rounding on a Laplacian.
    pub lossless_residual: C64,
}

pub fn linear_power_flow(y: &ReducedNetwork, angles: &[ComplexAngle]) -> LinearFlow {
    let theta: Vec<C64> = angles.iter().map(|a| a.as_complex()).collect();
    let sigma_conj: Vec<C64> = (0..theta.len())
        .map(|k| (0..theta.len()).map(|l| y.y()[(k, l)] * theta[l]).sum())
        .collect();
    let lossless_residual = C64::new(
        neumaier_sum(sigma_conj.iter().map(|s| s.re)),
        neumaier_sum(sigma_conj.iter().map(|s| s.im)),
    );
    LinearFlow {
        sigma_conj,
        lossless_residual,
    }
}

/// Converter/generator block partition of the load-reduced network.
#[derive(Debug, Clone, PartialEq)]
pub struct SgPartition {
    pub y: DMatrix<C64>,
    pub y_g: DMatrix<C64>,
    pub y_sg: DMatrix<C64>,
    pub converters: Vec<usize>,
    pub generators: Vec<usize>,
}

impl SgPartition {
    pub fn reassemble(&self) -> DMatrix<C64> {
        let (n, m) = (self.converters.len(), self.generators.len());
        let mut full = DMatrix::from_element(n + m, n + m, C64::new(0.0, 0.0));
        full.view_mut((0, 0), (n, n)).copy_from(&self.y);
        full.view_mut((0, n), (n, m)).copy_from(&self.y_g);
        full.view_mut((n, 0), (m, n)).copy_from(&self.y_g.transpose());
        full.view_mut((n, n), (m, m)).copy_from(&self.y_sg);
        full
    }

    /// Negated shunt residue of each converter row of `[Y, Y_G]`.
    pub fn setpoint_shift(&self) -> Vec<C64> {
        (0..self.converters.len())
            .map(|k| -(self.y.row(k).sum() + self.y_g.row(k).sum()))
            .collect()
    }

    /// Converter block with the shunt residue moved to the setpoints.
    pub fn converter_block_absorbed(&self) -> DMatrix<C64> {
        let mut y = self.y.clone();
        for (k, s) in self.setpoint_shift().iter().enumerate() {
            y[(k, k)] += s;
        }
        y
    }
}

/// Kron-eliminates load nodes and partitions the result so that
/// `i_o = Y·v + Y_G·v_SG`.
pub fn sg_partition(y_full: &DMatrix<C64>, kinds: &[NodeKind]) -> Result<SgPartition> {
    if kinds.len() != y_full.nrows() {
        return Err(Error::Config("node kinds do not match the admittance matrix".into()));
    }
    let converters: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == NodeKind::Converter).collect();
    let generators: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == NodeKind::Generator).collect();
    if converters.is_empty() {
        return Err(Error::Config("converter group is empty".into()));
    }
    let keep: Vec<usize> = converters.iter().chain(&generators).copied().collect();
    let reduced = schur_complement(y_full, &keep)?;
    let reduced = (&reduced + reduced.transpose()) * C64::new(0.5, 0.0);
    let (n, m) = (converters.len(), generators.len());
    Ok(SgPartition {
        y: reduced.view((0, 0), (n, n)).into_owned(),
        y_g: reduced.view((0, n), (n, m)).into_owned(),
        y_sg: reduced.view((n, n), (m, m)).into_owned(),
        converters,
        generators,
    })
}

/// `Re(e^{jφ}Y)`.
pub fn rotated_real_part(y: &DMatrix<C64>, phi: f64) -> DMatrix<f64> {
    let rot = C64::from_polar(1.0, phi);
    y.map(|e| (rot * e).re)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connectivity {
    /// Second-smallest eigenvalue of `Re(e^{jφ}Y)`.
    pub lambda2: f64,
    /// Full ascending spectrum.
    pub eigenvalues: Vec<f64>,
    pub warning: Option<String>,
}

pub fn algebraic_connectivity(y: &ReducedNetwork, phi: f64) -> Connectivity {
    let l = rotated_real_part(y.y(), phi);
    let eigenvalues = symmetric_eigenvalues(&l);
    let tol = 1e-10 * l.norm().max(1.0);
    if eigenvalues.len() < 2 {
        return Connectivity {
            lambda2: 0.0,
            eigenvalues,
            warning: Some("single node: algebraic connectivity undefined".into()),
        };
    }
    let lambda2 = eigenvalues[1];
    let warning = if eigenvalues[0] < -tol || lambda2 < -tol {
        Some(format!(
            "Re(e^(j*phi)Y) is not a valid Laplacian (eigenvalues {:.3e}, {:.3e})",
            eigenvalues[0], lambda2
        ))
    } else if lambda2 <= tol {
        Some("graph of Re(e^(j*phi)Y) is disconnected (lambda2 = 0)".into())
    } else {
        None
    };
    let lambda2 = if lambda2.abs() <= tol { 0.0 } else { lambda2 };
    Connectivity {
        lambda2,
        eigenvalues,
        warning,
    }
}
