use crate::{MilpError, Scalar};

/// Integrality mark of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

/// Objective sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Variable<S> {
    pub lower: S,
    pub upper: S,
    pub kind: VarKind,
    pub name: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Constraint<S> {
    /// Sparse row: (variable index, coefficient).
    pub terms: Vec<(usize, S)>,
    pub sense: RowSense,
    pub rhs: S,
    pub name: Option<String>,
}

/// Sparse mixed-integer linear model.
///
/// Variables are referenced by the index returned from [`MilpModel::add_var`].
#[derive(Debug, Clone)]
pub struct MilpModel<S> {
    pub variables: Vec<Variable<S>>,
    pub sense: Sense,
    /// Sparse objective coefficients (variable index, coefficient).
    pub objective: Vec<(usize, S)>,
    pub constraints: Vec<Constraint<S>>,
}

impl<S: Scalar> Default for MilpModel<S> {
    fn default() -> Self {
        Self::new(Sense::Minimize)
    }
}

impl<S: Scalar> MilpModel<S> {
    pub fn new(sense: Sense) -> Self {
        MilpModel {
            variables: Vec::new(),
            sense,
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_var(&mut self, lower: S, upper: S, kind: VarKind, name: Option<String>) -> usize {
        self.variables.push(Variable {
            lower,
            upper,
            kind,
            name,
        });
        self.variables.len() - 1
    }

    pub fn add_binary(&mut self, name: Option<String>) -> usize {
        self.add_var(S::zero(), S::one(), VarKind::Binary, name)
    }

    pub fn add_continuous(&mut self, lower: S, upper: S, name: Option<String>) -> usize {
        self.add_var(lower, upper, VarKind::Continuous, name)
    }

    pub fn set_objective_coeff(&mut self, var: usize, coeff: S) {
        if let Some(entry) = self.objective.iter_mut().find(|(v, _)| *v == var) {
            entry.1 = entry.1 + coeff;
        } else {
            self.objective.push((var, coeff));
        }
    }

    pub fn add_constraint(
        &mut self,
        terms: Vec<(usize, S)>,
        sense: RowSense,
        rhs: S,
        name: Option<String>,
    ) {
        self.constraints.push(Constraint {
            terms,
            sense,
            rhs,
            name,
        });
    }

    /// Fix a variable to a single value by collapsing its bounds.
    pub fn fix_var(&mut self, var: usize, value: S) {
        self.variables[var].lower = value;
        self.variables[var].upper = value;
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_discrete(&self) -> usize {
        self.variables.iter().filter(|v| v.kind.is_discrete()).count()
    }

    /// Structural sanity checks: bound ordering, binary bounds inside [0,1],
    /// finite lower bounds, and index validity of every sparse entry.
    pub fn validate(&self) -> Result<(), MilpError> {
        for (i, v) in self.variables.iter().enumerate() {
            if !(v.lower <= v.upper) {
                return Err(MilpError::Malformed(format!(
                    "variable {i}: lower bound {} exceeds upper bound {}",
                    v.lower, v.upper
                )));
            }
            if v.lower.is_infinite() && v.lower < S::zero() {
                return Err(MilpError::Malformed(format!(
                    "variable {i}: unbounded-below variables are not supported"
                )));
            }
            if v.kind == VarKind::Binary && (v.lower < S::zero() || v.upper > S::one()) {
                return Err(MilpError::Malformed(format!(
                    "variable {i}: binary bounds must lie within [0,1]"
                )));
            }
        }
        let n = self.variables.len();
        for (j, (var, _)) in self.objective.iter().enumerate() {
            if *var >= n {
                return Err(MilpError::Malformed(format!(
                    "objective term {j} references unknown variable {var}"
                )));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            for (var, coeff) in &c.terms {
                if *var >= n {
                    return Err(MilpError::Malformed(format!(
                        "constraint {i} references unknown variable {var}"
                    )));
                }
                if !coeff.is_finite() {
                    return Err(MilpError::Malformed(format!(
                        "constraint {i} has a non-finite coefficient"
                    )));
                }
            }
            if !c.rhs.is_finite() {
                return Err(MilpError::Malformed(format!(
                    "constraint {i} has a non-finite right-hand side"
                )));
            }
        }
        Ok(())
    }

    /// Objective value of a point, including the constant from fixed terms.
    pub fn objective_value(&self, values: &[S]) -> S {
        self.objective
            .iter()
            .fold(S::zero(), |acc, &(v, c)| acc + c * values[v])
    }

    /// Row activity of constraint `row` at a point.
    pub fn row_activity(&self, row: usize, values: &[S]) -> S {
        self.constraints[row]
            .terms
            .iter()
            .fold(S::zero(), |acc, &(v, c)| acc + c * values[v])
    }

    /// Largest violation of bounds and rows at a point (0 when feasible).
    pub fn max_violation(&self, values: &[S]) -> S {
        let mut worst = S::zero();
        for (i, v) in self.variables.iter().enumerate() {
            worst = worst.max(v.lower - values[i]);
            if v.upper.is_finite() {
                worst = worst.max(values[i] - v.upper);
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let act = self.row_activity(i, values);
            let viol = match c.sense {
                RowSense::Le => act - c.rhs,
                RowSense::Ge => c.rhs - act,
                RowSense::Eq => (act - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}
