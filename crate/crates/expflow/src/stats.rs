//! Krylov process statistics and their text rendering.

use std::collections::BTreeMap;

/// Label identifying which vector a Krylov subspace was built for.
///
/// `F1` is `F(t_n, u_n)`, `V` the time derivative `d_n`, `D(i)` the stage
/// differences of Rosenbrock-type methods, `YPlusA(i)` the stage vectors of
/// exponential Runge-Kutta methods, `GDiff(i)` the backward differences of
/// the multistep methods and `GDiffInit(i)` the forward differences on the
/// multistep startup window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StatLabel {
    F1,
    V,
    D(u8),
    YPlusA(u8),
    GDiff(u8),
    GDiffInit(u8),
}

impl std::fmt::Display for StatLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StatLabel::F1 => write!(f, "F1"),
            StatLabel::V => write!(f, "v"),
            StatLabel::D(i) => write!(f, "D{i}"),
            StatLabel::YPlusA(i) => write!(f, "Y{i}plusA"),
            StatLabel::GDiff(i) => write!(f, "GDiff{i}"),
            StatLabel::GDiffInit(i) => write!(f, "GDiffInit{i}"),
        }
    }
}

/// Counters describing the Krylov work of one solve.
#[derive(Debug, Clone, Default)]
pub struct KrylovStats {
    /// Number of products of a phi function (combination) with a vector.
    pub matfun_evals: usize,
    /// Number of Krylov subspaces built for different vectors.
    pub subspaces_built: usize,
    /// Sum of all Krylov subspace dimensions over the whole integration.
    pub total_krylov_steps: usize,
    /// Step size reductions forced by a non-converged Krylov approximation.
    pub step_reductions: usize,
    /// Subspaces reused after a step rejection.
    pub recycled_subspaces: usize,
    /// Maximal subspace dimension per seed label.
    pub max_dims: BTreeMap<StatLabel, usize>,
}

impl KrylovStats {
    pub fn record_dim(&mut self, label: StatLabel, m: usize) {
        let e = self.max_dims.entry(label).or_insert(0);
        *e = (*e).max(m);
    }

    pub fn merge(&mut self, other: &KrylovStats) {
        self.matfun_evals += other.matfun_evals;
        self.subspaces_built += other.subspaces_built;
        self.total_krylov_steps += other.total_krylov_steps;
        self.step_reductions += other.step_reductions;
        self.recycled_subspaces += other.recycled_subspaces;
        for (&l, &m) in &other.max_dims {
            self.record_dim(l, m);
        }
    }
}

fn line(name: &str, value: impl std::fmt::Display) -> String {
    format!("{name:<51}{value}\n")
}

/// Renders the statistics block in the layout the integrators print at the
/// end of a run.
pub fn format_stats_block(
    steps_accepted: usize,
    steps_rejected: usize,
    fixedpoint_iterations: usize,
    k: &KrylovStats,
) -> String {
    let mut s = String::from("statistics:\n");
    s.push_str(&line("number of time steps:", steps_accepted));
    s.push_str(&line("number of rejected steps:", steps_rejected));
    s.push_str(&line("number of fixed point iterations:", fixedpoint_iterations));
    s.push_str(&line(
        "number of matrix function evaluation times vector:",
        k.matfun_evals,
    ));
    s.push_str(&line("number of Krylov subspaces:", k.subspaces_built));
    s.push_str(&line("total number of Krylov steps:", k.total_krylov_steps));
    s.push_str(&line(
        "number of step size reductions due to Krylov:",
        k.step_reductions,
    ));
    s.push_str(&line("number of recycled subspaces:", k.recycled_subspaces));
    let dims: Vec<String> = k
        .max_dims
        .iter()
        .map(|(l, m)| format!("{l}: {m}"))
        .collect();
    s.push_str(&format!(
        "maximal dimensions of subspaces:    {}\n",
        dims.join(", ")
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_match_table() {
        assert_eq!(StatLabel::F1.to_string(), "F1");
        assert_eq!(StatLabel::V.to_string(), "v");
        assert_eq!(StatLabel::D(2).to_string(), "D2");
        assert_eq!(StatLabel::YPlusA(1).to_string(), "Y1plusA");
        assert_eq!(StatLabel::GDiff(3).to_string(), "GDiff3");
        assert_eq!(StatLabel::GDiffInit(6).to_string(), "GDiffInit6");
    }

    #[test]
    fn block_contains_all_fields() {
        let mut k = KrylovStats::default();
        k.matfun_evals = 331;
        k.subspaces_built = 147;
        k.total_krylov_steps = 1455;
        k.recycled_subspaces = 10;
        k.record_dim(StatLabel::F1, 15);
        k.record_dim(StatLabel::D(2), 15);
        let block = format_stats_block(100, 2, 0, &k);
        for needle in [
            "number of matrix function evaluation times vector:",
            "number of Krylov subspaces:",
            "total number of Krylov steps:",
            "number of step size reductions due to Krylov:",
            "number of recycled subspaces:",
            "maximal dimensions of subspaces:",
            "F1: 15",
            "D2: 15",
        ] {
            assert!(block.contains(needle), "missing `{needle}` in:\n{block}");
        }
    }
}
