//! Set-prediction matching: per-pair costs, the GT x prediction cost
//! matrix, optimal assignment and the composite set loss.
//!
//! Everything here is a plain numeric function; nothing is differentiated.

use thiserror::Error;

use crate::geometry::{giou, AABox, GeometryError, Polygon};

/// Fixed length of recognition sequences (text + padding).
pub const MAX_TEXT_LEN: usize = 25;
/// Probability floor used where a log would otherwise diverge.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignError {
    #[error("probability {0} outside the valid range")]
    Probability(f64),
    #[error("character {0:?} not in alphabet")]
    UnknownSymbol(char),
    #[error("duplicate symbol {0:?} in alphabet")]
    DuplicateSymbol(char),
    #[error("transcription of {len} characters exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("{got} character distributions for a transcription of {need}")]
    TooFewDistributions { got: usize, need: usize },
    #[error("distribution {index} has {got} entries, alphabet has {expected}")]
    DistributionSize { index: usize, got: usize, expected: usize },
    #[error("distribution {index} sums to {sum}")]
    NotNormalized { index: usize, sum: f64 },
    #[error("polygon vertex counts differ: {0} vs {1}")]
    VertexCount(usize, usize),
    #[error("non-finite cost at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("cost matrix of {rows}x{cols} needs {} entries, got {got}", rows * cols)]
    Shape { rows: usize, cols: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, AssignError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchWeights {
    /// Classification weight in the matching cost.
    pub lambda_c: f64,
    /// L1 box weight in the matching cost.
    pub lambda_l1: f64,
    /// GIoU weight in the matching cost.
    pub lambda_giou: f64,
    pub alpha_c: f64,
    pub l1_weight: f64,
    pub giou_weight: f64,
    pub alpha_p: f64,
    pub alpha_r: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            lambda_c: 2.0,
            lambda_l1: 5.0,
            lambda_giou: 2.0,
            alpha_c: 2.0,
            l1_weight: 5.0,
            giou_weight: 2.0,
            alpha_p: 1.0,
            alpha_r: 1.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    /// Probability of the text class.
    pub class_prob: f64,
    pub bbox: AABox,
    pub polygon: Option<Polygon>,
    /// One distribution over `Alphabet::size()` symbols per sequence slot.
    pub char_distributions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruthRecord {
    /// The no-object class.
    NoObject,
    Text {
        bbox: AABox,
        polygon: Polygon,
        transcription: String,
    },
}

impl GroundTruthRecord {
    pub fn is_object(&self) -> bool {
        matches!(self, GroundTruthRecord::Text { .. })
    }
}

/// Recognition symbols plus an implicit end/padding symbol at index
/// `len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let mut v: Vec<char> = Vec::new();
        for c in symbols.chars() {
            if v.contains(&c) {
                return Err(AssignError::DuplicateSymbol(c));
            }
            v.push(c);
        }
        Ok(Self { symbols: v })
    }

    /// Symbol count including padding.
    pub fn size(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn pad_index(&self) -> usize {
        self.symbols.len()
    }

    pub fn index_of(&self, c: char) -> Result<usize> {
        self.symbols
            .iter()
            .position(|&s| s == c)
            .ok_or(AssignError::UnknownSymbol(c))
    }
}

/// Focal loss term with the default `alpha = 0.25`, `gamma = 2`.
pub fn focal_term(p: f64, positive: bool) -> Result<f64> {
    let w = MatchWeights::default();
    focal_term_with(p, positive, w.focal_alpha, w.focal_gamma)
}

/// Positive branch `-a (1-p)^g ln p`, negative branch `-(1-a) p^g ln(1-p)`.
pub fn focal_term_with(p: f64, positive: bool, alpha: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AssignError::Probability(p));
    }
    if positive {
        if p == 0.0 {
            return Err(AssignError::Probability(p));
        }
        Ok(-alpha * (1.0 - p).powf(gamma) * p.ln())
    } else {
        if p == 1.0 {
            return Err(AssignError::Probability(p));
        }
        Ok(-(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln())
    }
}

/// L1 distance between boxes in (cx, cy, w, h) form.
pub fn box_l1(a: &AABox, b: &AABox) -> f64 {
    let (ca, cb) = (a.center(), b.center());
    (ca.x - cb.x).abs()
        + (ca.y - cb.y).abs()
        + (a.width() - b.width()).abs()
        + (a.height() - b.height()).abs()
}

/// Matching-cost box term: `lambda_l1 * L1 + lambda_giou * (1 - GIoU)`.
pub fn box_cost(pred: &AABox, gt: &AABox, w: &MatchWeights) -> Result<f64> {
    let g = giou(pred, gt)?;
    Ok(w.lambda_l1 * box_l1(pred, gt) + w.lambda_giou * (1.0 - g))
}

/// Loss box term: `l1_weight * L1 + giou_weight * (1 - GIoU)`.
pub fn box_loss(pred: &AABox, gt: &AABox, w: &MatchWeights) -> Result<f64> {
    let g = giou(pred, gt)?;
    Ok(w.l1_weight * box_l1(pred, gt) + w.giou_weight * (1.0 - g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecognitionLoss {
    pub value: f64,
    /// Set when a target probability was zero and got floored.
    pub clamped: bool,
}

/// Mean cross entropy over the evaluated sequence slots. Slots beyond the
/// transcription target the padding symbol; at most [`MAX_TEXT_LEN`]
/// slots are scored.
pub fn recognition_ce(
    char_distributions: &[Vec<f64>],
    transcription: &str,
    alphabet: &Alphabet,
) -> Result<RecognitionLoss> {
    let targets: Vec<usize> = transcription
        .chars()
        .map(|c| alphabet.index_of(c))
        .collect::<Result<_>>()?;
    if targets.len() > MAX_TEXT_LEN {
        return Err(AssignError::TooLong {
            len: targets.len(),
            max: MAX_TEXT_LEN,
        });
    }
    if char_distributions.len() < targets.len() {
        return Err(AssignError::TooFewDistributions {
            got: char_distributions.len(),
            need: targets.len(),
        });
    }
    let slots = char_distributions.len().min(MAX_TEXT_LEN);
    if slots == 0 {
        return Ok(RecognitionLoss { value: 0.0, clamped: false });
    }
    let mut clamped = false;
    let mut sum = 0.0;
    for (i, dist) in char_distributions.iter().take(slots).enumerate() {
        if dist.len() != alphabet.size() {
            return Err(AssignError::DistributionSize {
                index: i,
                got: dist.len(),
                expected: alphabet.size(),
            });
        }
        if let Some(&bad) = dist.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(AssignError::Probability(bad));
        }
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(AssignError::NotNormalized { index: i, sum: total });
        }
        let target = targets.get(i).copied().unwrap_or(alphabet.pad_index());
        let p = dist[target];
        if p < PROB_FLOOR {
            clamped = true;
        }
        sum -= p.max(PROB_FLOOR).ln();
    }
    Ok(RecognitionLoss {
        value: sum / slots as f64,
        clamped,
    })
}

/// Mean absolute coordinate difference under the stored vertex order.
pub fn polygon_l1(pred: &Polygon, gt: &Polygon) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(AssignError::VertexCount(pred.len(), gt.len()));
    }
    let s: f64 = pred
        .vertices()
        .iter()
        .zip(gt.vertices())
        .map(|(a, b)| (a.x - b.x).abs() + (a.y - b.y).abs())
        .sum();
    Ok(s / (2 * pred.len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AssignError::Shape {
                rows,
                cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> CostMatrix {
        CostMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

/// Classification cost: positive focal branch at the probability assigned to
/// the GT class (`1 - class_prob` for no-object).
fn class_cost(pred: &PredictionRecord, gt: &GroundTruthRecord, w: &MatchWeights) -> Result<f64> {
    if !(0.0..=1.0).contains(&pred.class_prob) {
        return Err(AssignError::Probability(pred.class_prob));
    }
    let p = if gt.is_object() {
        pred.class_prob
    } else {
        1.0 - pred.class_prob
    };
    focal_term_with(p.max(PROB_FLOOR), true, w.focal_alpha, w.focal_gamma)
}

/// Rows are ground truth, columns predictions.
pub fn cost_matrix(
    preds: &[PredictionRecord],
    gts: &[GroundTruthRecord],
    w: &MatchWeights,
) -> Result<CostMatrix> {
    let mut data = Vec::with_capacity(preds.len() * gts.len());
    for gt in gts {
        for pred in preds {
            let mut c = w.lambda_c * class_cost(pred, gt, w)?;
            if let GroundTruthRecord::Text { bbox, .. } = gt {
                c += box_cost(&pred.bbox, bbox, w)?;
            }
            data.push(c);
        }
    }
    CostMatrix::new(gts.len(), preds.len(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column per row; `None` only when the matrix has more rows than
    /// columns.
    pub row_to_col: Vec<Option<usize>>,
    pub total: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

struct Solved {
    cols_of_rows: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Shortest-augmenting-path Hungarian for `rows <= cols` on a dense
/// row-major slice. Returns the assignment and optimal dual potentials.
fn solve_rect(rows: usize, cols: usize, a: impl Fn(usize, usize) -> f64) -> Solved {
    let (n, m) = (rows, cols);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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
    let mut cols_of_rows = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            cols_of_rows[p[j] - 1] = j - 1;
        }
    }
    Solved {
        cols_of_rows,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    }
}

fn total_of(m: &CostMatrix, cols: &[usize]) -> f64 {
    cols.iter().enumerate().map(|(r, &c)| m.get(r, c)).sum()
}

/// Make the optimal assignment lexicographically smallest. Only edges that
/// are tight under the optimal duals can appear in any optimal assignment,
/// so a row is re-solved only when a smaller tight column exists.
fn lexicographic_refine(m: &CostMatrix, solved: Solved) -> Vec<usize> {
    let (n, cols) = (m.rows(), m.cols());
    let mut best = solved.cols_of_rows;
    let optimum = total_of(m, &best);
    let scale = 1.0 + m.data.iter().fold(0.0f64, |a, &x| a.max(x.abs())) * n as f64;
    let eps = 1e-9 * scale;
    for r in 0..n {
        let fixed: Vec<usize> = best[..r].to_vec();
        for c in 0..best[r] {
            if fixed.contains(&c) {
                continue;
            }
            if (m.get(r, c) - solved.u[r] - solved.v[c]).abs() > eps {
                continue;
            }
            let free: Vec<usize> = (0..cols).filter(|j| *j != c && !fixed.contains(j)).collect();
            let sub_rows = n - r - 1;
            let tail = if sub_rows == 0 {
                Vec::new()
            } else {
                let s = solve_rect(sub_rows, free.len(), |i, j| m.get(r + 1 + i, free[j]));
                s.cols_of_rows.iter().map(|&j| free[j]).collect()
            };
            let mut cand = fixed.clone();
            cand.push(c);
            cand.extend(tail);
            if total_of(m, &cand) <= optimum + eps {
                best = cand;
                break;
            }
        }
    }
    best
}

/// Minimum-cost assignment. With `rows <= cols` every row receives a
/// distinct column; otherwise the problem is solved on the transpose and
/// surplus rows stay unassigned. Ties go to the lexicographically smallest
/// assignment vector (of the transposed problem when `rows > cols`).
pub fn hungarian(m: &CostMatrix) -> Result<Assignment> {
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if !m.get(r, c).is_finite() {
                return Err(AssignError::NonFinite { row: r, col: c });
            }
        }
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(Assignment {
            row_to_col: vec![None; m.rows()],
            total: 0.0,
        });
    }
    if m.rows() <= m.cols() {
        let solved = solve_rect(m.rows(), m.cols(), |r, c| m.get(r, c));
        let cols = lexicographic_refine(m, solved);
        let total = total_of(m, &cols);
        Ok(Assignment {
            row_to_col: cols.into_iter().map(Some).collect(),
            total,
        })
    } else {
        let t = m.transpose();
        let solved = solve_rect(t.rows(), t.cols(), |r, c| t.get(r, c));
        let rows_of_cols = lexicographic_refine(&t, solved);
        let mut row_to_col = vec![None; m.rows()];
        for (c, &r) in rows_of_cols.iter().enumerate() {
            row_to_col[r] = Some(c);
        }
        let total = row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| m.get(r, c)))
            .sum();
        Ok(Assignment { row_to_col, total })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SetLoss {
    /// `alpha_c * sum L_c`
    pub classification: f64,
    /// `sum L_b` (already internally weighted)
    pub bbox: f64,
    /// `alpha_p * sum L_p`
    pub polygon: f64,
    /// `alpha_r * sum L_r`
    pub recognition: f64,
    pub total: f64,
    /// Object pairs whose prediction lacked a polygon or distributions.
    pub missing_terms: usize,
    pub recognition_clamped: bool,
}

/// Composite loss over matched pairs. No-object pairs contribute only the
/// (negative-branch) classification term. Recognition is scored only when
/// an alphabet is supplied.
pub fn set_loss(
    pairs: &[(&PredictionRecord, &GroundTruthRecord)],
    w: &MatchWeights,
    alphabet: Option<&Alphabet>,
) -> Result<SetLoss> {
    let mut out = SetLoss::default();
    for (pred, gt) in pairs {
        match gt {
            GroundTruthRecord::NoObject => {
                out.classification += w.alpha_c
                    * focal_term_with(
                        pred.class_prob.min(1.0 - PROB_FLOOR),
                        false,
                        w.focal_alpha,
                        w.focal_gamma,
                    )?;
            }
            GroundTruthRecord::Text {
                bbox,
                polygon,
                transcription,
            } => {
                out.classification += w.alpha_c
                    * focal_term_with(pred.class_prob, true, w.focal_alpha, w.focal_gamma)?;
                out.bbox += box_loss(&pred.bbox, bbox, w)?;
                match &pred.polygon {
                    Some(pp) => out.polygon += w.alpha_p * polygon_l1(pp, polygon)?,
                    None => out.missing_terms += 1,
                }
                if let Some(alpha) = alphabet {
                    match &pred.char_distributions {
                        Some(d) => {
                            let ce = recognition_ce(d, transcription, alpha)?;
                            out.recognition += w.alpha_r * ce.value;
                            out.recognition_clamped |= ce.clamped;
                        }
                        None => out.missing_terms += 1,
                    }
                }
            }
        }
    }
    out.total = out.classification + out.bbox + out.polygon + out.recognition;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::geometry::Point2;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> AABox {
        AABox::new(x0, y0, x1, y1).unwrap()
    }

    fn square(x: f64, y: f64, s: f64) -> Polygon {
        Polygon::rect(x, y, x + s, y + s).unwrap()
    }

    /// Exhaustive search over injective row -> column maps, first minimum in
    /// lexicographic order wins.
    fn brute_force(m: &CostMatrix) -> (Vec<usize>, f64) {
        fn rec(m: &CostMatrix, r: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, best: &mut (Vec<usize>, f64)) {
            if r == m.rows() {
                let t: f64 = cur.iter().enumerate().map(|(i, &c)| m.get(i, c)).sum();
                if t < best.1 {
                    *best = (cur.clone(), t);
                }
                return;
            }
            for c in 0..m.cols() {
                if !used[c] {
                    used[c] = true;
                    cur.push(c);
                    rec(m, r + 1, used, cur, best);
                    cur.pop();
                    used[c] = false;
                }
            }
        }
        let mut best = (Vec::new(), f64::INFINITY);
        rec(m, 0, &mut vec![false; m.cols()], &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn focal_examples() {
        assert_eq!(focal_term(1.0, true).unwrap(), 0.0);
        let pos = focal_term(0.5, true).unwrap();
        assert!((pos - 0.25 * 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((pos - 0.0433217).abs() < 1e-6);
        let neg = focal_term(0.5, false).unwrap();
        assert!((neg - 0.75 * 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((neg - 0.1299651).abs() < 1e-6);
        assert!(focal_term(1.2, true).is_err());
        assert!(focal_term(0.0, true).is_err());
        assert!(focal_term(1.0, false).is_err());
        assert_eq!(focal_term(0.0, false).unwrap(), 0.0);
    }

    #[test]
    fn box_cost_examples() {
        let w = MatchWeights::default();
        let a = bx(0.0, 0.0, 0.2, 0.2);
        assert_eq!(box_cost(&a, &a, &w).unwrap(), 0.0);
        let c = box_cost(&a, &bx(0.1, 0.1, 0.3, 0.3), &w).unwrap();
        let expected = 5.0 * 0.2 + 2.0 * (1.0 + 5.0 / 63.0);
        assert!((c - expected).abs() < 1e-12);
        assert!((c - 3.158730).abs() < 1e-6);

        // Far-apart tiny boxes: GIoU tends to -1.
        let t1 = bx(0.0, 0.0, 1e-4, 1e-4);
        let t2 = bx(0.9, 0.9, 0.9 + 1e-4, 0.9 + 1e-4);
        let c = box_cost(&t1, &t2, &w).unwrap();
        let l1 = box_l1(&t1, &t2);
        assert!((c - (5.0 * l1 + 4.0)).abs() < 1e-6);
        assert!(c < 5.0 * l1 + 4.0);
    }

    #[test]
    fn recognition_examples() {
        let alpha = Alphabet::new("abc").unwrap();
        assert_eq!(alpha.size(), 4);
        let one_hot = |i: usize| {
            let mut v = vec![0.0; 4];
            v[i] = 1.0;
            v
        };
        let d = vec![one_hot(0), one_hot(2), one_hot(3)];
        let r = recognition_ce(&d, "ac", &alpha).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(!r.clamped);

        let uniform = vec![vec![0.25; 4]; 5];
        let r = recognition_ce(&uniform, "cab", &alpha).unwrap();
        assert!((r.value - 4f64.ln()).abs() < 1e-12);

        assert_eq!(
            recognition_ce(&uniform, "az", &alpha),
            Err(AssignError::UnknownSymbol('z'))
        );
        let r = recognition_ce(&[one_hot(1)], "a", &alpha).unwrap();
        assert!(r.clamped);
        assert!((r.value + PROB_FLOOR.ln()).abs() < 1e-9);
        assert!(matches!(
            recognition_ce(&uniform[..1], "ab", &alpha),
            Err(AssignError::TooFewDistributions { .. })
        ));
    }

    #[test]
    fn polygon_l1_examples() {
        let a = square(0.0, 0.0, 1.0);
        assert_eq!(polygon_l1(&a, &a).unwrap(), 0.0);
        assert!((polygon_l1(&a.translate(0.1, 0.0), &a).unwrap() - 0.05).abs() < 1e-15);
        let tri = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(polygon_l1(&a, &tri), Err(AssignError::VertexCount(4, 3)));
    }

    fn pred(p: f64, b: AABox) -> PredictionRecord {
        PredictionRecord {
            class_prob: p,
            bbox: b,
            polygon: None,
            char_distributions: None,
        }
    }

    fn gt(b: AABox) -> GroundTruthRecord {
        GroundTruthRecord::Text {
            bbox: b,
            polygon: Polygon::rect(b.x0, b.y0, b.x1, b.y1).unwrap(),
            transcription: "ab".into(),
        }
    }

    #[test]
    fn cost_matrix_examples() {
        let w = MatchWeights::default();
        let b = bx(0.1, 0.1, 0.3, 0.4);
        let m = cost_matrix(&[pred(1.0, b)], &[gt(b)], &w).unwrap();
        assert_eq!(m.get(0, 0), 0.0);

        let m = cost_matrix(
            &[pred(0.9, b), pred(0.9, b.translate(0.05, 0.0))],
            &[gt(b)],
            &w,
        )
        .unwrap();
        assert!(m.get(0, 0) < m.get(0, 1));

        // 2x2 built from the focal and box examples.
        let a = bx(0.0, 0.0, 0.2, 0.2);
        let a2 = bx(0.1, 0.1, 0.3, 0.3);
        let m = cost_matrix(&[pred(0.5, a), pred(1.0, a2)], &[gt(a), gt(a2)], &w).unwrap();
        let focal_half = 0.25 * 0.25 * 2f64.ln();
        let shifted = 5.0 * 0.2 + 2.0 * (1.0 + 5.0 / 63.0);
        let expect = [
            [2.0 * focal_half, shifted],
            [2.0 * focal_half + shifted, 0.0],
        ];
        for r in 0..2 {
            for c in 0..2 {
                assert!((m.get(r, c) - expect[r][c]).abs() < 1e-12, "({r},{c})");
            }
        }

        // No-object rows carry only the classification term.
        let m = cost_matrix(&[pred(0.5, a)], &[GroundTruthRecord::NoObject], &w).unwrap();
        assert!((m.get(0, 0) - 2.0 * focal_half).abs() < 1e-15);
    }

    #[test]
    fn hungarian_examples() {
        let m = CostMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 1.0]).unwrap();
        let a = hungarian(&m).unwrap();
        assert_eq!(a.row_to_col, vec![Some(0), Some(1)]);
        assert_eq!(a.total, 2.0);

        let m = CostMatrix::new(2, 2, vec![4.0, 1.0, 2.0, 3.0]).unwrap();
        let a = hungarian(&m).unwrap();
        assert_eq!(a.row_to_col, vec![Some(1), Some(0)]);
        assert_eq!(a.total, 3.0);

        let m = CostMatrix::from_fn(4, 4, |r, c| if r == c { 0.0 } else { 1.0 + (r * c) as f64 });
        let a = hungarian(&m).unwrap();
        assert_eq!(a.row_to_col, (0..4).map(Some).collect::<Vec<_>>());
        assert_eq!(a.total, 0.0);
    }

    #[test]
    fn hungarian_tie_breaking_and_shapes() {
        let m = CostMatrix::new(2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(hungarian(&m).unwrap().row_to_col, vec![Some(0), Some(1)]);
        let m = CostMatrix::new(2, 3, vec![1.0; 6]).unwrap();
        assert_eq!(hungarian(&m).unwrap().row_to_col, vec![Some(0), Some(1)]);

        let m = CostMatrix::new(3, 2, vec![5.0, 1.0, 0.0, 9.0, 2.0, 2.0]).unwrap();
        let a = hungarian(&m).unwrap();
        assert_eq!(a.row_to_col, vec![Some(1), Some(0), None]);
        assert_eq!(a.total, 1.0);

        let empty = CostMatrix::new(0, 3, vec![]).unwrap();
        assert_eq!(hungarian(&empty).unwrap().total, 0.0);

        let bad = CostMatrix::new(1, 2, vec![1.0, f64::NAN]).unwrap();
        assert_eq!(hungarian(&bad), Err(AssignError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn set_loss_examples() {
        let w = MatchWeights::default();
        let alpha = Alphabet::new("abc").unwrap();
        let g = bx(0.1, 0.1, 0.3, 0.3);
        let perfect = PredictionRecord {
            class_prob: 1.0,
            bbox: g,
            polygon: Some(Polygon::rect(0.1, 0.1, 0.3, 0.3).unwrap()),
            char_distributions: Some(vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
            ]),
        };
        let truth = GroundTruthRecord::Text {
            bbox: g,
            polygon: Polygon::rect(0.1, 0.1, 0.3, 0.3).unwrap(),
            transcription: "ab".into(),
        };
        let l = set_loss(&[(&perfect, &truth)], &w, Some(&alpha)).unwrap();
        assert_eq!(l.total, 0.0);

        // Worked single pair.
        let unit = GroundTruthRecord::Text {
            bbox: bx(0.1, 0.1, 0.3, 0.3),
            polygon: square(0.0, 0.0, 1.0),
            transcription: "ab".into(),
        };
        let p = PredictionRecord {
            class_prob: 0.5,
            bbox: bx(0.0, 0.0, 0.2, 0.2),
            polygon: Some(square(0.0, 0.0, 1.0).translate(0.1, 0.0)),
            char_distributions: Some(vec![vec![0.25; 4]; 3]),
        };
        let l = set_loss(&[(&p, &unit)], &w, Some(&alpha)).unwrap();
        let expected = 2.0 * 0.0433217 + 3.158730 + 1.0 * 0.05 + 1.0 * 1.386294;
        assert!((l.total - expected).abs() < 1e-6, "{l:?}");
        assert!(
            (l.total - (l.classification + l.bbox + l.polygon + l.recognition)).abs() < 1e-15
        );

        let l = set_loss(&[(&p, &GroundTruthRecord::NoObject)], &w, Some(&alpha)).unwrap();
        assert_eq!(l.bbox + l.polygon + l.recognition, 0.0);
        assert!((l.total - 2.0 * focal_term(0.5, false).unwrap()).abs() < 1e-15);
    }

    fn arb_matrix(max: usize) -> impl Strategy<Value = CostMatrix> {
        (1..=max, 1..=max, any::<bool>()).prop_flat_map(|(r, c, int)| {
            let (r, c) = (r.min(c), r.max(c));
            proptest::collection::vec(0.0..100.0f64, r * c).prop_map(move |v| {
                let v = if int { v.iter().map(|x| (x / 10.0).floor()).collect() } else { v };
                CostMatrix::new(r, c, v).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn hungarian_matches_brute_force(m in arb_matrix(6)) {
            let a = hungarian(&m).unwrap();
            let (best_cols, best) = brute_force(&m);
            prop_assert!((a.total - best).abs() <= 1e-9 * (1.0 + best.abs()));
            let cols: Vec<usize> = a.row_to_col.iter().map(|c| c.unwrap()).collect();
            prop_assert_eq!(cols, best_cols);
        }

        #[test]
        fn constant_shift_keeps_argmin(m in arb_matrix(6), k in -50.0..50.0f64) {
            let shifted = CostMatrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, c) + k);
            let a = hungarian(&m).unwrap();
            let b = hungarian(&shifted).unwrap();
            prop_assert_eq!(&a.row_to_col, &b.row_to_col);
            prop_assert!((b.total - a.total - k * m.rows() as f64).abs() < 1e-9);
        }

        #[test]
        fn focal_monotone(p in 0.001..0.998f64, dp in 0.0005..0.001f64) {
            prop_assert!(focal_term(p + dp, true).unwrap() < focal_term(p, true).unwrap());
            prop_assert!(focal_term(p + dp, false).unwrap() > focal_term(p, false).unwrap());
        }

        #[test]
        fn costs_non_negative(
            boxes in proptest::collection::vec((0.0..0.8f64, 0.0..0.8f64, 0.01..0.2f64, 0.01..0.2f64, 0.0..=1.0f64), 1..5),
            gts in proptest::collection::vec((0.0..0.8f64, 0.0..0.8f64, 0.01..0.2f64, 0.01..0.2f64, any::<bool>()), 1..5),
        ) {
            let preds: Vec<_> = boxes.iter().map(|&(x, y, w, h, p)| pred(p, bx(x, y, x + w, y + h))).collect();
            let gts: Vec<_> = gts.iter().map(|&(x, y, w, h, obj)| {
                if obj { gt(bx(x, y, x + w, y + h)) } else { GroundTruthRecord::NoObject }
            }).collect();
            let m = cost_matrix(&preds, &gts, &MatchWeights::default()).unwrap();
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    prop_assert!(m.get(r, c) >= 0.0);
                }
            }
        }

        #[test]
        fn set_loss_permutation_invariant(
            items in proptest::collection::vec((0.05..0.95f64, 0.0..0.5f64, 0.0..0.5f64, any::<bool>()), 1..6),
            rot in 0usize..6,
        ) {
            let w = MatchWeights::default();
            let data: Vec<(PredictionRecord, GroundTruthRecord)> = items.iter().map(|&(p, x, y, obj)| {
                let b = bx(x, y, x + 0.2, y + 0.1);
                let g = if obj { gt(bx(0.2, 0.2, 0.4, 0.3)) } else { GroundTruthRecord::NoObject };
                (pred(p, b), g)
            }).collect();
            let mut pairs: Vec<_> = data.iter().map(|(p, g)| (p, g)).collect();
            let a = set_loss(&pairs, &w, None).unwrap();
            let k = rot % pairs.len();
            pairs.rotate_left(k);
            pairs.reverse();
            let b = set_loss(&pairs, &w, None).unwrap();
            prop_assert!((a.total - b.total).abs() < 1e-12);
        }
    }
}
