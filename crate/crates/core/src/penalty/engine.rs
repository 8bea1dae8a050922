use super::{AdmissibleSet, CostSpec, Penalty, PenaltyError, PenaltyValue, YosidaMap};
use crate::numerics::{dot, prox_oracle_qp, pseudo_inverse, solve_lp, DenseMatrix, NumericsError};

pub const DEFAULT_MAX_POINTS: usize = 20;

/// Minimal strict dominance margin for an index set to count as a face.
const FACE_MARGIN: f64 = 1e-9;
const ACTIVE_TOL: f64 = 1e-9;
const LAMBDA_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Simplex {
    indices: Vec<usize>,
    /// pseudo-inverse of `[ū_S; 1ᵀ]`, size `|S| × (m+1)`
    ginv: DenseMatrix,
}

/// A face of the epigraph of `g*`, identified by the affine pieces that are
/// active on it.
#[derive(Debug, Clone)]
pub struct EpigraphFace {
    indices: Vec<usize>,
    /// orthogonal projector onto the span of `ū_l − ū_{i₁}`
    proj: DenseMatrix,
    /// minimum-norm solution of the tie equations
    shift: Vec<f64>,
    simplices: Vec<Simplex>,
}

impl EpigraphFace {
    fn new(points: &[Vec<f64>], offsets: &[f64], indices: Vec<usize>) -> Self {
        let m = points[0].len();
        let b = indices[0];
        let k = indices.len();
        let mut dmat = DenseMatrix::zeros(k - 1, m);
        let mut d = vec![0.0; k - 1];
        for (r, &l) in indices[1..].iter().enumerate() {
            for c in 0..m {
                dmat[(r, c)] = points[l][c] - points[b][c];
            }
            d[r] = offsets[l] - offsets[b];
        }
        let dplus = pseudo_inverse(&dmat);
        let proj = dplus.matmul(&dmat);
        let shift = dplus.matvec(&d);
        let rank = (0..m).map(|i| proj[(i, i)]).sum::<f64>().round() as usize;

        let mut simplices = Vec::new();
        let mut cur = Vec::new();
        choose(&indices, rank + 1, 0, &mut cur, &mut |s| {
            let mut g = DenseMatrix::zeros(m + 1, s.len());
            for (c, &i) in s.iter().enumerate() {
                for r in 0..m {
                    g[(r, c)] = points[i][r];
                }
                g[(m, c)] = 1.0;
            }
            let ginv = pseudo_inverse(&g);
            let gg = ginv.matmul(&g);
            let independent =
                (0..s.len()).all(|i| (0..s.len()).all(|j| (gg[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8));
            if independent {
                simplices.push(Simplex { indices: s.to_vec(), ginv });
            }
        });
        Self { indices, proj, shift, simplices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Affine dimension of the admissible points on this face.
    pub fn rank(&self) -> usize {
        (0..self.proj.rows()).map(|i| self.proj[(i, i)]).sum::<f64>().round() as usize
    }

    /// Solution blocks of the face system for a fixed `γ`.
    pub fn blocks(&self, points: &[Vec<f64>], gamma: f64) -> FaceBlocks {
        let m = self.proj.rows();
        let ub = &points[self.indices[0]];
        let mut a = DenseMatrix::identity(m);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] -= self.proj[(i, j)];
            }
        }
        let a_ub = a.matvec(ub);
        let b: Vec<f64> = (0..m).map(|i| -gamma * a_ub[i] + self.shift[i]).collect();
        // v = (q − w)/γ = P q/γ + (I − P)ū − shift/γ
        let v0: Vec<f64> = (0..m).map(|i| a_ub[i] - self.shift[i] / gamma).collect();
        let lambda = self
            .simplices
            .iter()
            .map(|s| {
                let k = s.indices.len();
                let mut l = DenseMatrix::zeros(k, m);
                let mut c = vec![0.0; k];
                for r in 0..k {
                    for j in 0..m {
                        let gij = s.ginv[(r, j)];
                        c[r] += gij * v0[j];
                        for t in 0..m {
                            l[(r, t)] += gij * self.proj[(j, t)] / gamma;
                        }
                    }
                    c[r] += s.ginv[(r, m)];
                }
                (s.indices.clone(), l, c)
            })
            .collect();
        FaceBlocks { a, b, lambda }
    }
}

/// `w = A q + b` and barycentric weights `λ = L q + c` for each affinely
/// independent subset of the face.
#[derive(Debug, Clone)]
pub struct FaceBlocks {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub lambda: Vec<(Vec<usize>, DenseMatrix, Vec<f64>)>,
}

fn choose(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..items.len() {
        if items.len() - i < k - cur.len() {
            break;
        }
        cur.push(items[i]);
        choose(items, k, i + 1, cur, f);
        cur.pop();
    }
}

/// Largest margin `t ∈ [0,1]` by which the pieces in `face` can tie and
/// dominate all other pieces; `None` if they cannot even weakly dominate.
fn face_margin(points: &[Vec<f64>], offsets: &[f64], face: &[usize]) -> Result<Option<f64>, NumericsError> {
    let n = points.len();
    let m = points[0].len();
    let b = face[0];
    let others: Vec<usize> = (0..n).filter(|i| !face.contains(i)).collect();
    // variables: w⁺ (m), w⁻ (m), t, slacks for others, slack for t ≤ 1
    let nv = 2 * m + 1 + others.len() + 1;
    let nr = face.len() - 1 + others.len() + 1;
    let mut e = DenseMatrix::zeros(nr, nv);
    let mut r = vec![0.0; nr];
    let mut row = 0;
    for &l in &face[1..] {
        for c in 0..m {
            let diff = points[l][c] - points[b][c];
            e[(row, c)] = diff;
            e[(row, m + c)] = -diff;
        }
        r[row] = offsets[l] - offsets[b];
        row += 1;
    }
    for (s, &i) in others.iter().enumerate() {
        for c in 0..m {
            let diff = points[i][c] - points[b][c];
            e[(row, c)] = diff;
            e[(row, m + c)] = -diff;
        }
        e[(row, 2 * m)] = 1.0;
        e[(row, 2 * m + 1 + s)] = 1.0;
        r[row] = offsets[i] - offsets[b];
        row += 1;
    }
    e[(row, 2 * m)] = 1.0;
    e[(row, nv - 1)] = 1.0;
    r[row] = 1.0;
    let mut costs = vec![0.0; nv];
    costs[2 * m] = -1.0;
    match solve_lp(&costs, &e, &r, true) {
        Ok(sol) => Ok(Some(sol.point[2 * m])),
        Err(NumericsError::Infeasible) => Ok(None),
        Err(err) => Err(err),
    }
}

/// Lists every index set whose pieces are simultaneously maximal with all
/// other pieces strictly smaller somewhere, sorted by decreasing size and
/// then lexicographically.
pub fn enumerate_faces(set: &AdmissibleSet, cost: &CostSpec, bound: usize) -> Result<Vec<EpigraphFace>, PenaltyError> {
    if set.len() > bound {
        return Err(PenaltyError::TooManyPoints { got: set.len(), bound });
    }
    let offsets = cost.offsets(set)?;
    let points = set.points();
    let mut found: Vec<Vec<usize>> = Vec::new();
    fn dfs(
        points: &[Vec<f64>],
        offsets: &[f64],
        cur: &mut Vec<usize>,
        start: usize,
        found: &mut Vec<Vec<usize>>,
    ) -> Result<(), NumericsError> {
        for j in start..points.len() {
            cur.push(j);
            if let Some(t) = face_margin(points, offsets, cur)? {
                if t > FACE_MARGIN {
                    found.push(cur.clone());
                }
                dfs(points, offsets, cur, j + 1, found)?;
            }
            cur.pop();
        }
        Ok(())
    }
    dfs(points, &offsets, &mut Vec::new(), 0, &mut found)?;
    found.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    Ok(found.into_iter().map(|f| EpigraphFace::new(points, &offsets, f)).collect())
}

/// General multibang penalty for an arbitrary finite set and cost.
#[derive(Debug, Clone)]
pub struct PenaltyEngine {
    set: AdmissibleSet,
    cost: CostSpec,
    offsets: Vec<f64>,
    faces: Vec<EpigraphFace>,
}

impl PenaltyEngine {
    pub fn new(set: AdmissibleSet, cost: CostSpec) -> Result<Self, PenaltyError> {
        Self::with_bound(set, cost, DEFAULT_MAX_POINTS)
    }

    pub fn with_bound(set: AdmissibleSet, cost: CostSpec, bound: usize) -> Result<Self, PenaltyError> {
        let offsets = cost.offsets(&set)?;
        let faces = enumerate_faces(&set, &cost, bound)?;
        Ok(Self { set, cost, offsets, faces })
    }

    pub fn set(&self) -> &AdmissibleSet {
        &self.set
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn faces(&self) -> &[EpigraphFace] {
        &self.faces
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), PenaltyError> {
        if v.len() != self.set.dim() {
            return Err(PenaltyError::Dimension { expected: self.set.dim(), got: v.len() });
        }
        Ok(())
    }

    /// `g*(q) = max_i ⟨ū_i, q⟩ − αc(ū_i)`.
    pub fn conjugate_value(&self, q: &[f64]) -> Result<f64, PenaltyError> {
        self.check_dim(q)?;
        Ok(self.pieces(q).into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    fn pieces(&self, q: &[f64]) -> Vec<f64> {
        self.set.points().iter().zip(&self.offsets).map(|(u, o)| dot(u, q) - o).collect()
    }

    /// Convex envelope value at `u`; `Infinite` outside the convex hull.
    pub fn penalty_value(&self, u: &[f64]) -> Result<PenaltyValue, PenaltyError> {
        self.check_dim(u)?;
        let n = self.set.len();
        let m = self.set.dim();
        let mut e = DenseMatrix::zeros(m + 1, n);
        for (j, p) in self.set.points().iter().enumerate() {
            for i in 0..m {
                e[(i, j)] = p[i];
            }
            e[(m, j)] = 1.0;
        }
        let mut r = u.to_vec();
        r.push(1.0);
        match solve_lp(&self.offsets, &e, &r, true) {
            Ok(sol) => Ok(PenaltyValue::Finite(sol.value)),
            Err(NumericsError::Infeasible) => Ok(PenaltyValue::Infinite),
            Err(err) => Err(err.into()),
        }
    }

    /// Face blocks for a fixed `γ`.
    pub fn regularized(&self, gamma: f64) -> EngineMap<'_> {
        assert!(gamma > 0.0, "γ must be positive");
        let blocks = self.faces.iter().map(|f| f.blocks(self.set.points(), gamma)).collect();
        EngineMap { engine: self, gamma, blocks }
    }

    /// Proximal point of `γg*` at `q` and the index of the selected face
    /// (`faces().len()` when the oracle fallback picked a set not listed).
    pub fn prox(&self, q: &[f64], gamma: f64) -> Result<(Vec<f64>, usize), PenaltyError> {
        self.check_dim(q)?;
        let map = self.regularized(gamma);
        let sel = map.select(q);
        Ok((sel.w, sel.face))
    }

    pub fn yosida(&self, q: &[f64], gamma: f64) -> Result<Vec<f64>, PenaltyError> {
        self.check_dim(q)?;
        Ok(self.regularized(gamma).yosida(q))
    }

    pub fn newton_deriv(&self, q: &[f64], gamma: f64) -> Result<DenseMatrix, PenaltyError> {
        self.check_dim(q)?;
        Ok(self.regularized(gamma).newton(q))
    }

    pub fn multibang_distance(&self, u: &[f64]) -> f64 {
        super::multibang_distance(self.set.points(), u)
    }
}

struct Selection {
    w: Vec<f64>,
    face: usize,
    /// `(I − A_f)` for the chosen face
    proj: DenseMatrix,
}

/// The engine with face blocks precomputed for one `γ`.
pub struct EngineMap<'a> {
    engine: &'a PenaltyEngine,
    gamma: f64,
    blocks: Vec<FaceBlocks>,
}

impl EngineMap<'_> {
    pub fn blocks(&self) -> &[FaceBlocks] {
        &self.blocks
    }

    fn matches(&self, f: usize, q: &[f64], w: &mut [f64]) -> bool {
        let blk = &self.blocks[f];
        let m = q.len();
        for i in 0..m {
            w[i] = dot(blk.a.row(i), q) + blk.b[i];
        }
        let face = &self.engine.faces[f];
        let pts = self.engine.set.points();
        let off = &self.engine.offsets;
        let top = dot(&pts[face.indices[0]], w) - off[face.indices[0]];
        for i in 0..pts.len() {
            if dot(&pts[i], w) - off[i] > top + ACTIVE_TOL {
                return false;
            }
        }
        blk.lambda.iter().any(|(_, l, c)| {
            (0..c.len()).all(|r| {
                let v = dot(l.row(r), q) + c[r];
                (-LAMBDA_TOL..=1.0 + LAMBDA_TOL).contains(&v)
            })
        })
    }

    fn select(&self, q: &[f64]) -> Selection {
        let m = q.len();
        let mut w = vec![0.0; m];
        for f in 0..self.blocks.len() {
            if self.matches(f, q, &mut w) {
                return Selection { w, face: f, proj: self.engine.faces[f].proj.clone() };
            }
        }
        self.fallback(q)
    }

    fn fallback(&self, q: &[f64]) -> Selection {
        let eng = self.engine;
        let w = prox_oracle_qp(eng.set.points(), &eng.offsets, q, self.gamma);
        let pieces = eng.pieces(&w);
        let top = pieces.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let active: Vec<usize> = (0..pieces.len()).filter(|&i| pieces[i] >= top - ACTIVE_TOL).collect();
        match eng.faces.iter().position(|f| f.indices == active) {
            Some(f) => Selection { w, face: f, proj: eng.faces[f].proj.clone() },
            None => {
                let face = EpigraphFace::new(eng.set.points(), &eng.offsets, active);
                Selection { w, face: eng.faces.len(), proj: face.proj }
            }
        }
    }
}

impl YosidaMap for EngineMap<'_> {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn eval(&self, q: &[f64], h: &mut [f64], d: &mut [f64]) -> usize {
        let m = q.len();
        let sel = self.select(q);
        for i in 0..m {
            h[i] = (q[i] - sel.w[i]) / self.gamma;
            for j in 0..m {
                d[i * m + j] = sel.proj[(i, j)] / self.gamma;
            }
        }
        sel.face
    }
}

impl Penalty for PenaltyEngine {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn points(&self) -> &[Vec<f64>] {
        self.set.points()
    }

    fn conjugate(&self, q: &[f64]) -> f64 {
        self.pieces(q).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    fn regularize(&self, gamma: f64) -> Box<dyn YosidaMap + '_> {
        Box::new(self.regularized(gamma))
    }
}
