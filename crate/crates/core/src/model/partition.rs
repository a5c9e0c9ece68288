use crate::network::{BusRole, PowerNetwork};

/// Position of a bus voltage magnitude in the optimization vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Control(usize),
    State(usize),
}

/// Split of the polar voltage profile and active generation into controls
/// `u` and states `x`.
///
/// Controls are the voltage magnitudes at the reference and generator buses
/// followed by the active generation of every generator outside the
/// reference bus. States are the angles at all non-reference buses followed
/// by the voltage magnitudes at load buses. The reference angle is fixed to
/// zero and does not appear.
#[derive(Debug, Clone, PartialEq)]
pub struct VariablePartition {
    n_buses: usize,
    reference: usize,
    control_buses: Vec<usize>,
    control_gens: Vec<usize>,
    reference_gens: Vec<usize>,
    angle_buses: Vec<usize>,
    load_buses: Vec<usize>,
    magnitude_slot: Vec<Slot>,
    angle_slot: Vec<Option<usize>>,
}

impl VariablePartition {
    pub fn new(net: &PowerNetwork) -> Self {
        let n = net.n_buses();
        let reference = net.reference();
        let roles = net.roles();
        let control_buses: Vec<usize> = (0..n).filter(|&i| roles[i] != BusRole::Load).collect();
        let load_buses: Vec<usize> = (0..n).filter(|&i| roles[i] == BusRole::Load).collect();
        let angle_buses: Vec<usize> = (0..n).filter(|&i| i != reference).collect();
        let (reference_gens, control_gens): (Vec<usize>, Vec<usize>) =
            (0..net.generators().len()).partition(|&k| net.generators()[k].bus == reference);

        let mut magnitude_slot = vec![Slot::Control(0); n];
        for (k, &i) in control_buses.iter().enumerate() {
            magnitude_slot[i] = Slot::Control(k);
        }
        for (k, &i) in load_buses.iter().enumerate() {
            magnitude_slot[i] = Slot::State(angle_buses.len() + k);
        }
        let mut angle_slot = vec![None; n];
        for (k, &i) in angle_buses.iter().enumerate() {
            angle_slot[i] = Some(k);
        }
        Self {
            n_buses: n,
            reference,
            control_buses,
            control_gens,
            reference_gens,
            angle_buses,
            load_buses,
            magnitude_slot,
            angle_slot,
        }
    }

    pub fn n_controls(&self) -> usize {
        self.control_buses.len() + self.control_gens.len()
    }

    pub fn n_states(&self) -> usize {
        self.angle_buses.len() + self.load_buses.len()
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Reference and generator buses, in bus order.
    pub fn control_buses(&self) -> &[usize] {
        &self.control_buses
    }

    /// Generators whose active power is a control.
    pub fn control_gens(&self) -> &[usize] {
        &self.control_gens
    }

    /// Generators at the reference bus.
    pub fn reference_gens(&self) -> &[usize] {
        &self.reference_gens
    }

    pub fn angle_buses(&self) -> &[usize] {
        &self.angle_buses
    }

    pub fn load_buses(&self) -> &[usize] {
        &self.load_buses
    }

    pub fn magnitude_slot(&self, bus: usize) -> Slot {
        self.magnitude_slot[bus]
    }

    pub fn angle_slot(&self, bus: usize) -> Option<usize> {
        self.angle_slot[bus]
    }

    /// Maps bus-space coordinates `(v, θ, p_ctrl)` to indices of the stacked
    /// vector `(u, x)`. The reference angle maps to `None`.
    pub fn column_map(&self) -> Vec<Option<usize>> {
        let n_u = self.n_controls();
        let mut map = Vec::with_capacity(2 * self.n_buses + self.control_gens.len());
        for i in 0..self.n_buses {
            map.push(Some(match self.magnitude_slot[i] {
                Slot::Control(k) => k,
                Slot::State(k) => n_u + k,
            }));
        }
        for i in 0..self.n_buses {
            map.push(self.angle_slot[i].map(|k| n_u + k));
        }
        for k in 0..self.control_gens.len() {
            map.push(Some(self.control_buses.len() + k));
        }
        map
    }

    /// Expands `(u, x)` into voltage magnitudes, angles and controlled
    /// generation.
    pub fn expand(&self, u: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut vm = vec![0.0; self.n_buses];
        let mut va = vec![0.0; self.n_buses];
        for i in 0..self.n_buses {
            vm[i] = match self.magnitude_slot[i] {
                Slot::Control(k) => u[k],
                Slot::State(k) => x[k],
            };
            if let Some(k) = self.angle_slot[i] {
                va[i] = x[k];
            }
        }
        let pg = u[self.control_buses.len()..].to_vec();
        (vm, va, pg)
    }

    /// Inverse of [`Self::expand`]; `pg` covers all generators and the
    /// reference angle is ignored.
    pub fn gather(&self, vm: &[f64], va: &[f64], pg: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![0.0; self.n_controls()];
        let mut x = vec![0.0; self.n_states()];
        for i in 0..self.n_buses {
            match self.magnitude_slot[i] {
                Slot::Control(k) => u[k] = vm[i],
                Slot::State(k) => x[k] = vm[i],
            }
            if let Some(k) = self.angle_slot[i] {
                x[k] = va[i] - va[self.reference];
            }
        }
        let offset = self.control_buses.len();
        for (k, &g) in self.control_gens.iter().enumerate() {
            u[offset + k] = pg[g];
        }
        (u, x)
    }
}
