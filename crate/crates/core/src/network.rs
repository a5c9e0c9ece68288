//! Per-unit network data and admittance matrices.

use num_complex::Complex64;
use thiserror::Error;

use crate::matpower::{Branch, Bus, BusType, Generator};
use crate::sparse::{CsrMatrix, Triplets};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("branch {index} ({from} -> {to}) has zero series impedance")]
    ZeroImpedance { index: usize, from: i64, to: i64 },
    #[error("reference bus {bus} has no in-service generator")]
    ReferenceWithoutGenerator { bus: i64 },
    #[error("network has no buses")]
    Empty,
}

/// π-model admittances of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineAdmittance {
    pub ff: Complex64,
    pub ft: Complex64,
    pub tf: Complex64,
    pub tt: Complex64,
}

impl LineAdmittance {
    pub fn from_branch(br: &Branch) -> Self {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half_b = Complex64::new(0.0, br.b / 2.0);
        let tau = br.tap;
        let shift = Complex64::from_polar(1.0, br.shift);
        Self {
            ff: (ys + half_b) / (tau * tau),
            ft: -ys / (tau * shift.conj()),
            tf: -ys / (tau * shift),
            tt: ys + half_b,
        }
    }
}

/// Role of a bus in the optimization, which may differ from the file type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusRole {
    Reference,
    /// Non-reference bus with at least one in-service generator.
    Generator,
    Load,
}

#[derive(Debug, Clone)]
pub struct PowerNetwork {
    base_mva: f64,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    branches: Vec<Branch>,
    roles: Vec<BusRole>,
    reference: usize,
    lines: Vec<LineAdmittance>,
    ybus: CsrMatrix<Complex64>,
    gens_at_bus: Vec<Vec<usize>>,
}

impl PowerNetwork {
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
    ) -> Result<Self, NetworkError> {
        if buses.is_empty() {
            return Err(NetworkError::Empty);
        }
        for (index, br) in branches.iter().enumerate() {
            if br.r == 0.0 && br.x == 0.0 {
                return Err(NetworkError::ZeroImpedance { index, from: buses[br.from].id, to: buses[br.to].id });
            }
        }
        let n = buses.len();
        let mut gens_at_bus = vec![Vec::new(); n];
        for (k, g) in generators.iter().enumerate() {
            gens_at_bus[g.bus].push(k);
        }
        let reference = buses.iter().position(|b| b.kind == BusType::Reference).ok_or(NetworkError::Empty)?;
        if gens_at_bus[reference].is_empty() {
            return Err(NetworkError::ReferenceWithoutGenerator { bus: buses[reference].id });
        }
        let roles = (0..n)
            .map(|i| {
                if i == reference {
                    BusRole::Reference
                } else if gens_at_bus[i].is_empty() {
                    BusRole::Load
                } else {
                    BusRole::Generator
                }
            })
            .collect();
        let lines: Vec<LineAdmittance> = branches.iter().map(LineAdmittance::from_branch).collect();
        let ybus = assemble_ybus(n, &buses, &branches, &lines);
        Ok(Self { base_mva, buses, generators, branches, roles, reference, lines, ybus, gens_at_bus })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn roles(&self) -> &[BusRole] {
        &self.roles
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn line_admittances(&self) -> &[LineAdmittance] {
        &self.lines
    }

    /// Indices into [`Self::generators`] located at bus `i`.
    pub fn generators_at(&self, i: usize) -> &[usize] {
        &self.gens_at_bus[i]
    }

    pub fn ybus(&self) -> &CsrMatrix<Complex64> {
        &self.ybus
    }

    /// Real and imaginary parts of the bus admittance matrix.
    pub fn conductance_susceptance(&self) -> (CsrMatrix, CsrMatrix) {
        (self.ybus.map(|y| y.re), self.ybus.map(|y| y.im))
    }

    /// Branch admittance matrices `(Yf, Yt)` mapping bus voltages to
    /// from-end and to-end branch currents.
    pub fn branch_admittance_matrices(&self) -> (CsrMatrix<Complex64>, CsrMatrix<Complex64>) {
        let (l, n) = (self.branches.len(), self.buses.len());
        let mut yf = Triplets::with_capacity(l, n, 2 * l);
        let mut yt = Triplets::with_capacity(l, n, 2 * l);
        for (k, (br, y)) in self.branches.iter().zip(&self.lines).enumerate() {
            yf.push(k, br.from, y.ff);
            yf.push(k, br.to, y.ft);
            yt.push(k, br.from, y.tf);
            yt.push(k, br.to, y.tt);
        }
        (yf.to_csr(), yt.to_csr())
    }

    /// Complex bus injections `V ∘ conj(Ybus V)` for a polar voltage profile.
    pub fn injections(&self, vm: &[f64], va: &[f64]) -> Vec<Complex64> {
        let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        let i = self.ybus.mul_vec(&v);
        v.iter().zip(&i).map(|(v, i)| v * i.conj()).collect()
    }
}

fn assemble_ybus(n: usize, buses: &[Bus], branches: &[Branch], lines: &[LineAdmittance]) -> CsrMatrix<Complex64> {
    let mut t = Triplets::with_capacity(n, n, 4 * branches.len() + n);
    for (br, y) in branches.iter().zip(lines) {
        t.push(br.from, br.from, y.ff);
        t.push(br.from, br.to, y.ft);
        t.push(br.to, br.from, y.tf);
        t.push(br.to, br.to, y.tt);
    }
    for (i, b) in buses.iter().enumerate() {
        t.push(i, i, Complex64::new(b.gs, b.bs));
    }
    t.to_csr()
}
