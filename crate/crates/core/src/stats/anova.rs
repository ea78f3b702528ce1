use serde::{Deserialize, Serialize};

use super::special::f_upper_tail;
use super::StatsError;

/// Significance level of the selectivity rule.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Within-cell sum of squares at or below this fraction of the total sum of
/// squares marks the design as degenerate.
const DEGENERATE_RATIO: f64 = 1e-12;

/// Responses of a balanced `a × b` design with `s` replicates per cell,
/// stored as `data[(i * b + j) * s + k]` for factor-A level `i`, factor-B
/// level `j`, replicate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    a: usize,
    b: usize,
    s: usize,
    data: Vec<f64>,
}

impl CellGrid {
    pub fn new(a: usize, b: usize, s: usize, data: Vec<f64>) -> Result<Self, StatsError> {
        if a < 2 || b < 2 {
            return Err(StatsError::UnbalancedDesign(format!(
                "both factors need at least two levels, got a={a}, b={b}"
            )));
        }
        if s < 2 {
            return Err(StatsError::InsufficientReplicates(s));
        }
        if data.len() != a * b * s {
            return Err(StatsError::UnbalancedDesign(format!(
                "expected {} values for {a}×{b}×{s}, got {}",
                a * b * s,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(StatsError::Domain(format!("non-finite response {v}")));
        }
        Ok(CellGrid { a, b, s, data })
    }

    /// Builds a grid from nested `[a][b][replicates]` cells, rejecting cells
    /// of unequal size.
    pub fn from_cells(cells: &[Vec<Vec<f64>>]) -> Result<Self, StatsError> {
        let a = cells.len();
        let b = cells.first().map_or(0, Vec::len);
        let s = cells.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(a * b * s);
        for (i, row) in cells.iter().enumerate() {
            if row.len() != b {
                return Err(StatsError::UnbalancedDesign(format!(
                    "factor-A level {i} has {} factor-B levels, expected {b}",
                    row.len()
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                if cell.len() != s {
                    return Err(StatsError::UnbalancedDesign(format!(
                        "cell ({i}, {j}) has {} replicates, expected {s}",
                        cell.len()
                    )));
                }
                data.extend_from_slice(cell);
            }
        }
        CellGrid::new(a, b, s, data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a, self.b, self.s)
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.b + j) * self.s;
        &self.data[start..start + self.s]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Sums of squares, F statistics and upper-tail p-values for the two main
/// effects and their interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub ss_a: f64,
    pub ss_b: f64,
    pub ss_ab: f64,
    pub ss_error: f64,
    pub ss_total: f64,
    pub f_a: f64,
    pub f_b: f64,
    pub f_ab: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_ab: f64,
    /// `(a−1, b−1, (a−1)(b−1), ab(s−1))`
    pub df: (usize, usize, usize, usize),
    /// Zero within-cell variance: F undefined, all p-values set to 1 and all
    /// F statistics to 0.
    pub degenerate: bool,
}

/// Two-way fixed-effects ANOVA of a balanced grid.
///
/// Means are computed first and squared deviations accumulated in a second
/// pass. Values are summed in sorted order within each cell, so the result
/// does not depend on replicate order at all.
pub fn two_way_anova(grid: &CellGrid) -> Result<AnovaTable, StatsError> {
    let (a, b, s) = grid.dims();
    let mut sorted = grid.data.clone();
    for cell in sorted.chunks_mut(s) {
        cell.sort_by(f64::total_cmp);
    }
    let cell_values = |i: usize, j: usize| &sorted[(i * b + j) * s..(i * b + j + 1) * s];

    let mut cell_mean = vec![0.0; a * b];
    for i in 0..a {
        for j in 0..b {
            cell_mean[i * b + j] = cell_values(i, j).iter().sum::<f64>() / s as f64;
        }
    }
    let grand = cell_mean.iter().sum::<f64>() / (a * b) as f64;
    let row_mean: Vec<f64> = (0..a)
        .map(|i| (0..b).map(|j| cell_mean[i * b + j]).sum::<f64>() / b as f64)
        .collect();
    let col_mean: Vec<f64> = (0..b)
        .map(|j| (0..a).map(|i| cell_mean[i * b + j]).sum::<f64>() / a as f64)
        .collect();

    let ss_a = (b * s) as f64 * row_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_b = (a * s) as f64 * col_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_ab = 0.0;
    let mut ss_error = 0.0;
    let mut ss_total = 0.0;
    for i in 0..a {
        for j in 0..b {
            let m = cell_mean[i * b + j];
            ss_ab += (m - row_mean[i] - col_mean[j] + grand).powi(2);
            for &y in cell_values(i, j) {
                ss_error += (y - m).powi(2);
                ss_total += (y - grand).powi(2);
            }
        }
    }
    ss_ab *= s as f64;

    let df = (a - 1, b - 1, (a - 1) * (b - 1), a * b * (s - 1));
    let degenerate = ss_total == 0.0 || ss_error <= DEGENERATE_RATIO * ss_total;
    if degenerate {
        return Ok(AnovaTable {
            ss_a,
            ss_b,
            ss_ab,
            ss_error,
            ss_total,
            f_a: 0.0,
            f_b: 0.0,
            f_ab: 0.0,
            p_a: 1.0,
            p_b: 1.0,
            p_ab: 1.0,
            df,
            degenerate,
        });
    }

    let ms_error = ss_error / df.3 as f64;
    let f_a = ss_a / df.0 as f64 / ms_error;
    let f_b = ss_b / df.1 as f64 / ms_error;
    let f_ab = ss_ab / df.2 as f64 / ms_error;
    let dfe = df.3 as f64;
    Ok(AnovaTable {
        ss_a,
        ss_b,
        ss_ab,
        ss_error,
        ss_total,
        f_a,
        f_b,
        f_ab,
        p_a: f_upper_tail(f_a, df.0 as f64, dfe)?,
        p_b: f_upper_tail(f_b, df.1 as f64, dfe)?,
        p_ab: f_upper_tail(f_ab, df.2 as f64, dfe)?,
        df,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectivityReason {
    Selective,
    Degenerate,
    FailNumerosity,
    FailStimulusInvariance,
    FailInteraction,
}

impl SelectivityReason {
    pub fn name(self) -> &'static str {
        match self {
            SelectivityReason::Selective => "selective",
            SelectivityReason::Degenerate => "degenerate",
            SelectivityReason::FailNumerosity => "fail_numerosity",
            SelectivityReason::FailStimulusInvariance => "fail_stimulus_invariance",
            SelectivityReason::FailInteraction => "fail_interaction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectivityLabel {
    pub selective: bool,
    pub reason: SelectivityReason,
}

impl SelectivityLabel {
    fn of(reason: SelectivityReason) -> Self {
        SelectivityLabel {
            selective: reason == SelectivityReason::Selective,
            reason,
        }
    }
}

/// A unit is numerosity-selective when `p_A < alpha`, `p_B > alpha` and
/// `p_AB > alpha`. A p-value equal to `alpha` satisfies neither side.
/// Non-selective units report the first failing check in the order
/// degenerate, numerosity, stimulus set, interaction.
pub fn classify_selectivity(table: &AnovaTable, alpha: f64) -> SelectivityLabel {
    use SelectivityReason::*;
    let reason = if table.degenerate {
        Degenerate
    } else if !(table.p_a < alpha) {
        FailNumerosity
    } else if !(table.p_b > alpha) {
        FailStimulusInvariance
    } else if !(table.p_ab > alpha) {
        FailInteraction
    } else {
        Selective
    };
    SelectivityLabel::of(reason)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(p_a: f64, p_b: f64, p_ab: f64) -> AnovaTable {
        AnovaTable {
            ss_a: 1.0,
            ss_b: 1.0,
            ss_ab: 1.0,
            ss_error: 1.0,
            ss_total: 4.0,
            f_a: 1.0,
            f_b: 1.0,
            f_ab: 1.0,
            p_a,
            p_b,
            p_ab,
            df: (15, 2, 30, 288),
            degenerate: false,
        }
    }

    #[test]
    fn classification_rule() {
        use SelectivityReason::*;
        let c = |a, b, ab| classify_selectivity(&table(a, b, ab), DEFAULT_ALPHA);
        assert_eq!(c(0.001, 0.5, 0.5), SelectivityLabel { selective: true, reason: Selective });
        assert_eq!(c(0.001, 0.005, 0.5).reason, FailStimulusInvariance);
        assert_eq!(c(0.02, 0.5, 0.5).reason, FailNumerosity);
        assert_eq!(c(0.02, 0.001, 0.001).reason, FailNumerosity);
        assert_eq!(c(0.001, 0.5, 0.001).reason, FailInteraction);
        // boundary: p == alpha fails both inequalities
        assert_eq!(c(0.01, 0.5, 0.5).reason, FailNumerosity);
        assert_eq!(c(0.001, 0.01, 0.5).reason, FailStimulusInvariance);
        assert_eq!(c(0.001, 0.5, 0.01).reason, FailInteraction);
        let mut t = table(0.001, 0.5, 0.5);
        t.degenerate = true;
        let label = classify_selectivity(&t, DEFAULT_ALPHA);
        assert!(!label.selective);
        assert_eq!(label.reason, Degenerate);
    }

    #[test]
    fn constant_grid_is_degenerate() {
        let g = CellGrid::new(16, 3, 4, vec![0.7; 16 * 3 * 4]).unwrap();
        let t = two_way_anova(&g).unwrap();
        assert!(t.degenerate);
        assert_eq!((t.p_a, t.p_b, t.p_ab), (1.0, 1.0, 1.0));
        assert!(!classify_selectivity(&t, DEFAULT_ALPHA).selective);
    }

    #[test]
    fn cell_means_without_error_are_degenerate() {
        // every cell constant but cells differ: SS_E = 0
        let mut data = Vec::new();
        for i in 0..4 {
            for j in 0..3 {
                data.extend([i as f64 + 10.0 * j as f64; 3]);
            }
        }
        let t = two_way_anova(&CellGrid::new(4, 3, 3, data).unwrap()).unwrap();
        assert!(t.degenerate);
        assert!(t.ss_a > 0.0);
    }

    #[test]
    fn degrees_of_freedom() {
        let data: Vec<f64> = (0..16 * 3 * 7).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = two_way_anova(&CellGrid::new(16, 3, 7, data).unwrap()).unwrap();
        assert_eq!(t.df, (15, 2, 30, 288));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            CellGrid::new(2, 2, 1, vec![0.0; 4]).unwrap_err(),
            StatsError::InsufficientReplicates(1)
        );
        assert!(matches!(
            CellGrid::new(2, 2, 2, vec![0.0; 7]),
            Err(StatsError::UnbalancedDesign(_))
        ));
        let cells = vec![
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![1.0, 2.0], vec![3.0]],
        ];
        assert!(matches!(CellGrid::from_cells(&cells), Err(StatsError::UnbalancedDesign(_))));
        assert!(matches!(
            CellGrid::new(2, 2, 2, vec![0.0, 1.0, f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]),
            Err(StatsError::Domain(_))
        ));
    }
}
