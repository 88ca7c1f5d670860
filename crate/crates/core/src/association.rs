//! Gated cost matrices and the two matching strategies.

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::Result;
use crate::geometry::{bev_center_distance, giou_3d, iou_3d, BBox3D};
use crate::motion::{box_to_obs, mahalanobis_from_parts, ObsMatrix, ObsVector};

/// Padding cost for infeasible pairs inside the Hungarian solver.
pub const SENTINEL_COST: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    Iou3d,
    Giou3d,
    L2Bev,
    Mahalanobis,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Iou3d,
        MetricKind::Giou3d,
        MetricKind::L2Bev,
        MetricKind::Mahalanobis,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Iou3d => "iou",
            MetricKind::Giou3d => "giou",
            MetricKind::L2Bev => "l2",
            MetricKind::Mahalanobis => "mahalanobis",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Similarities are better when larger, distances when smaller.
    pub fn is_similarity(&self) -> bool {
        matches!(self, MetricKind::Iou3d | MetricKind::Giou3d)
    }
}

/// An association metric together with its gate.
///
/// Similarity gates are exclusive (`value > gate`), distance gates are
/// inclusive (`value <= gate`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationMetric {
    pub kind: MetricKind,
    pub gate: f64,
}

impl AssociationMetric {
    pub fn new(kind: MetricKind, gate: f64) -> Self {
        Self { kind, gate }
    }

    pub fn passes(&self, value: f64) -> bool {
        if self.kind.is_similarity() {
            value > self.gate
        } else {
            value <= self.gate
        }
    }

    /// Maps a raw metric value to a non-negative cost.
    pub fn canonical_cost(&self, value: f64) -> f64 {
        if self.kind.is_similarity() {
            1.0 - value
        } else {
            value
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchStrategy {
    Hungarian,
    Greedy,
}

impl MatchStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatchStrategy::Hungarian => "hungarian",
            MatchStrategy::Greedy => "greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hungarian" => Some(MatchStrategy::Hungarian),
            "greedy" => Some(MatchStrategy::Greedy),
            _ => None,
        }
    }

    pub fn solve(&self, costs: &CostMatrix) -> MatchResult {
        match self {
            MatchStrategy::Hungarian => hungarian_match(costs),
            MatchStrategy::Greedy => greedy_match(costs),
        }
    }
}

/// A tracklet prediction as seen by the association step.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub bbox: BBox3D,
    /// Predicted observation mean and innovation covariance, when the motion
    /// model is a Kalman filter.
    pub gaussian: Option<(ObsVector, ObsMatrix)>,
}

impl Prediction {
    pub fn from_box(bbox: BBox3D) -> Self {
        Self {
            bbox,
            gaussian: None,
        }
    }
}

/// Rows are predictions, columns detections; `None` marks a gated pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![None; rows * cols],
        }
    }

    /// Builds a matrix from nested rows, `None` meaning infeasible.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// All entries feasible.
    pub fn dense(rows: &[Vec<f64>]) -> Self {
        let opt: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|r| r.iter().copied().map(Some).collect())
            .collect();
        Self::from_rows(&opt)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, cost: Option<f64>) {
        self.data[row * self.cols + col] = cost;
    }

    pub fn is_feasible(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_some()
    }

    /// Sum of the costs of `pairs`; panics on infeasible pairs.
    pub fn total(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs
            .iter()
            .map(|&(r, c)| self.get(r, c).expect("matched an infeasible pair"))
            .sum()
    }
}

/// Computes gated canonical costs between predictions and detections.
pub fn build_cost_matrix(
    preds: &[Prediction],
    dets: &[Detection],
    metric: &AssociationMetric,
) -> Result<CostMatrix> {
    let mut m = CostMatrix::new(preds.len(), dets.len());
    for (r, p) in preds.iter().enumerate() {
        for (c, d) in dets.iter().enumerate() {
            let value = match metric.kind {
                MetricKind::Iou3d => iou_3d(&p.bbox, &d.bbox),
                MetricKind::Giou3d => giou_3d(&p.bbox, &d.bbox),
                MetricKind::L2Bev => bev_center_distance(&p.bbox, &d.bbox),
                MetricKind::Mahalanobis => {
                    let (mean, s) = p.gaussian.as_ref().ok_or_else(|| {
                        crate::error::Error::Config(
                            "the Mahalanobis metric requires a Kalman motion model".into(),
                        )
                    })?;
                    let mut y = box_to_obs(&d.bbox) - mean;
                    y[3] = crate::geometry::wrap_angle(y[3]);
                    mahalanobis_from_parts(&y, s)?
                }
            };
            if metric.passes(value) {
                m.set(r, c, Some(metric.canonical_cost(value).max(0.0)));
            }
        }
    }
    Ok(m)
}

/// Matched pairs plus the unmatched rows and columns, all sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl MatchResult {
    fn from_pairs(mut matches: Vec<(usize, usize)>, rows: usize, cols: usize) -> Self {
        matches.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &matches {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            matches,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }

    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.matches.iter().find(|m| m.0 == row).map(|m| m.1)
    }
}

/// Minimum-cost assignment over feasible pairs.
///
/// Infeasible entries are padded with [`SENTINEL_COST`] and any sentinel
/// match is dropped from the result, so the number of feasible pairs is
/// maximized first and their total cost minimized second.
pub fn hungarian_match(costs: &CostMatrix) -> MatchResult {
    let (rows, cols) = (costs.rows(), costs.cols());
    if rows == 0 || cols == 0 {
        return MatchResult::from_pairs(Vec::new(), rows, cols);
    }
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let entry = |i: usize, j: usize| {
        let (r, c) = if transpose { (j, i) } else { (i, j) };
        costs.get(r, c).unwrap_or(SENTINEL_COST)
    };
    let assignment = solve_rectangular(n, m, entry);
    let pairs = assignment
        .into_iter()
        .enumerate()
        .map(|(i, j)| if transpose { (j, i) } else { (i, j) })
        .filter(|&(r, c)| costs.is_feasible(r, c))
        .collect();
    MatchResult::from_pairs(pairs, rows, cols)
}

/// Shortest augmenting path with potentials for an `n x m` matrix, `n <= m`.
/// Returns the column assigned to each row.
fn solve_rectangular(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: 1-based row matched to column j, 0 when free
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = NONE;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![NONE; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Repeatedly takes the globally cheapest feasible pair.
///
/// Ties are broken by `(row, col)` order.
pub fn greedy_match(costs: &CostMatrix) -> MatchResult {
    let (rows, cols) = (costs.rows(), costs.cols());
    let mut entries: Vec<(f64, usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).filter_map(move |c| costs.get(r, c).map(|v| (v, r, c))))
        .collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut pairs = Vec::new();
    for (_, r, c) in entries {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            pairs.push((r, c));
        }
    }
    MatchResult::from_pairs(pairs, rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube(x: f64, y: f64) -> BBox3D {
        BBox3D::new(x, y, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn identical_boxes_cost_zero_under_giou() {
        let b = unit_cube(0.0, 0.0);
        let m = build_cost_matrix(
            &[Prediction::from_box(b)],
            &[Detection::new(b, 0.9, "car")],
            &AssociationMetric::new(MetricKind::Giou3d, -0.5),
        )
        .unwrap();
        assert!(m.get(0, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn far_boxes_are_gated_under_giou() {
        let m = build_cost_matrix(
            &[Prediction::from_box(unit_cube(0.0, 0.0))],
            &[Detection::new(unit_cube(10.0, 0.0), 0.9, "car")],
            &AssociationMetric::new(MetricKind::Giou3d, -0.5),
        )
        .unwrap();
        assert_eq!(m.get(0, 0), None);
    }

    #[test]
    fn l2_gate_is_inclusive() {
        let metric = AssociationMetric::new(MetricKind::L2Bev, 5.0);
        let m = build_cost_matrix(
            &[Prediction::from_box(unit_cube(0.0, 0.0))],
            &[
                Detection::new(unit_cube(3.0, 4.0), 0.9, "car"),
                Detection::new(unit_cube(3.0, 4.1), 0.9, "car"),
            ],
            &metric,
        )
        .unwrap();
        assert_eq!(m.get(0, 0), Some(5.0));
        assert_eq!(m.get(0, 1), None);
    }

    #[test]
    fn mahalanobis_without_kalman_is_rejected() {
        let r = build_cost_matrix(
            &[Prediction::from_box(unit_cube(0.0, 0.0))],
            &[Detection::new(unit_cube(0.0, 0.0), 0.9, "car")],
            &AssociationMetric::new(MetricKind::Mahalanobis, 11.0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn hungarian_small_cases() {
        let r = hungarian_match(&CostMatrix::dense(&[vec![0.0]]));
        assert_eq!(r.matches, vec![(0, 0)]);
        let m = CostMatrix::dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let r = hungarian_match(&m);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(m.total(&r.matches), 2.0);
    }

    #[test]
    fn greedy_diverges_from_hungarian() {
        let m = CostMatrix::dense(&[vec![1.0, 2.0], vec![2.0, 10.0]]);
        let g = greedy_match(&m);
        let h = hungarian_match(&m);
        assert_eq!(g.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(m.total(&g.matches), 11.0);
        assert_eq!(h.matches, vec![(0, 1), (1, 0)]);
        assert_eq!(m.total(&h.matches), 4.0);
    }

    #[test]
    fn infeasible_column_stays_unmatched() {
        let m = CostMatrix::from_rows(&[vec![Some(0.3), None], vec![Some(0.1), None]]);
        for r in [greedy_match(&m), hungarian_match(&m)] {
            assert_eq!(r.unmatched_cols, vec![1]);
            assert_eq!(r.matches.len(), 1);
            assert_eq!(r.unmatched_rows.len(), 1);
        }
    }

    #[test]
    fn rectangular_and_empty() {
        let m = CostMatrix::dense(&[vec![3.0], vec![1.0], vec![2.0]]);
        assert_eq!(hungarian_match(&m).matches, vec![(1, 0)]);
        assert_eq!(hungarian_match(&m).unmatched_rows, vec![0, 2]);
        let e = CostMatrix::new(0, 3);
        assert_eq!(hungarian_match(&e).unmatched_cols, vec![0, 1, 2]);
        assert_eq!(greedy_match(&CostMatrix::new(2, 0)).unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn greedy_tie_break_is_lexicographic() {
        let m = CostMatrix::dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(greedy_match(&m).matches, vec![(0, 0), (1, 1)]);
    }
}
